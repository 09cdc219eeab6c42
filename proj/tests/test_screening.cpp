#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdr/error.hpp"
#include "sdr/screening.hpp"
#include "support/test_util.hpp"

using namespace sdr;
using namespace sdr::test;

namespace {

// Ten-plus words so the repetition exemption does not apply.
const std::string kLongCandidate =
    "I think we should definitely plan the big harvest festival together this year";

Dialogue current_dialogue() {
  return make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                       {{"Ada", "shall we begin"}, {"Ben", "yes let us"}});
}

double angle_for(double score) { return std::acos(score); }

}  // namespace

TEST_CASE("dynamic threshold follows the three-branch rule") {
  SdrConfig cfg;
  CHECK(dynamic_threshold(cfg, true, false) == doctest::Approx(0.90));
  CHECK(dynamic_threshold(cfg, true, true) == doctest::Approx(0.80));
  CHECK(dynamic_threshold(cfg, false, false) == doctest::Approx(0.85));
  CHECK(dynamic_threshold(cfg, false, true) == doctest::Approx(0.85));
}

TEST_CASE("config validation rejects inconsistent thresholds") {
  SdrConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SdrConfig bad1 = cfg;
  bad1.alpha = 0.9;
  CHECK_THROWS_AS(bad1.validate(), ConfigError);
  SdrConfig bad2 = cfg;
  bad2.theta_force = 0.86;  // ties theta + alpha = 0.90
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
  SdrConfig bad3 = cfg;
  bad3.theta_force = 1.5;
  CHECK_THROWS_AS(bad3.validate(), ConfigError);
  SdrConfig bad4 = cfg;
  bad4.history_source = "other";
  CHECK_THROWS_AS(bad4.validate(), ConfigError);
}

TEST_CASE("short candidates are exempt from repetition screening") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  // Even an exact duplicate in the store stays clean below ten words.
  store.insert_dialogue(make_dialogue("d1", "2023-02-13 08:00:00", "Ada", "Ben",
                                      {{"Ada", "sounds good see you"}, {"Ben", "bye"}}));
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_repetition({"sounds good see you", "Ada", &cur});
  CHECK(report.outcome == Outcome::clean);
}

TEST_CASE("a hit above theta_force bypasses to regeneration") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("stored near duplicate", angle_for(0.96));
  b.embedding->set_angle("stored unrelated", angle_for(0.70));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue(
      "d1", "2023-02-13 08:00:00", "Cyd", "Ben",
      {{"Cyd", "stored near duplicate"}, {"Ben", "stored unrelated"}}));

  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  CHECK(report.outcome == Outcome::force_regenerate);
  REQUIRE(report.hits.size() == 1);
  CHECK(report.hits[0].score > cfg.theta_force);  // round-trip from the payload
  CHECK(report.hits[0].utterance_id == "d1:0");
}

TEST_CASE("two hits over their dynamic thresholds yield evidence") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  // 0.91 from Ada in a different dialogue: threshold 0.90, over.
  b.embedding->set_angle("same speaker other dialogue text", angle_for(0.91));
  // 0.86 from another speaker: threshold 0.85, over.
  b.embedding->set_angle("other speaker text", angle_for(0.86));
  b.embedding->set_angle("low similarity text", angle_for(0.60));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue(
      "d1", "2023-02-13 08:00:00", "Ada", "Cyd",
      {{"Ada", "same speaker other dialogue text"}, {"Cyd", "low similarity text"}}));
  store.insert_dialogue(make_dialogue(
      "d2", "2023-02-13 09:00:00", "Cyd", "Ben",
      {{"Cyd", "other speaker text"}, {"Ben", "low similarity text"}}));

  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  CHECK(report.outcome == Outcome::evidence);
  REQUIRE(report.evidence.size() == 2);
  CHECK(report.evidence[0] == "d1");
  CHECK(report.evidence[1] == "d2");
}

TEST_CASE("exactly one hit over threshold stays clean") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("same speaker other dialogue text", angle_for(0.91));
  b.embedding->set_angle("low similarity text", angle_for(0.60));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue(
      "d1", "2023-02-13 08:00:00", "Ada", "Cyd",
      {{"Ada", "same speaker other dialogue text"}, {"Cyd", "low similarity text"}}));

  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  CHECK(report.outcome == Outcome::clean);
  CHECK(report.evidence.empty());
}

TEST_CASE("same-dialogue hits use the lowered threshold but provide no store evidence") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  // 0.82 from the speaker inside the current dialogue: threshold 0.80, over.
  b.embedding->set_angle("in context repeat one", angle_for(0.82));
  b.embedding->set_angle("in context repeat two", angle_for(0.81));

  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "in context repeat one"}, {"Ada", "in context repeat two"}});
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  // Two context hits cross theta - alpha, but with an empty store there is
  // no evidence to cite: the report stays clean.
  CHECK(report.outcome == Outcome::clean);

  // The same scores in a *store* dialogue would not cross their thresholds
  // (0.82 < 0.90 same-speaker/other-dialogue), confirming the branch matters.
  SdrConfig strict;
  CHECK(dynamic_threshold(strict, true, true) < 0.82);
  CHECK(dynamic_threshold(strict, true, false) > 0.82);
}

TEST_CASE("same-dialogue context hit counts toward the over-threshold total") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("stored crossing text", angle_for(0.86));  // other speaker, 0.85
  b.embedding->set_angle("context crossing text", angle_for(0.82)); // same speaker+dialogue, 0.80

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue("d1", "2023-02-13 08:00:00", "Cyd", "Ben",
                                      {{"Cyd", "stored crossing text"}, {"Ben", "filler words"}}));
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "context crossing text"}, {"Ben", "short reply"}});
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  CHECK(report.outcome == Outcome::evidence);
  REQUIRE(report.evidence.size() == 1);  // only the store dialogue is citable
  CHECK(report.evidence[0] == "d1");
}

TEST_CASE("empty store never yields repetition evidence") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_repetition({kLongCandidate, "Ada", &cur});
  CHECK(report.outcome == Outcome::clean);
}

TEST_CASE("textualize renders subject relation object with a terminal period") {
  CHECK(textualize({"Jennifer Moore", "is running for", "local mayor", "", ""}) ==
        "Jennifer Moore is running for local mayor.");
  CHECK(textualize({"  Jennifer Moore ", " is running for ", " local mayor  ", "", ""}) ==
        "Jennifer Moore is running for local mayor.");
  CHECK(textualize({"Ada", "asked", "what now?", "", ""}) == "Ada asked what now?");
  CHECK(textualize({"Ada", "said", "stop!", "", ""}) == "Ada said stop!");
}

TEST_CASE("triplet extraction parses the scripted graph output") {
  auto b = make_mock_gateway();
  b.chat->add_rule(
      "Extract personal information",
      {R"([["Giorgio Rossi", "is interested in", "medications and treatments"],
           ["John Lin", "is knowledgeable about", "medications and treatments"],
           ["Jennifer Moore", "is mentioned by", "John Lin"],
           ["Jennifer Moore", "has role", "artist"],
           ["Jennifer Moore", "is running for", "local mayor"],
           ["Jennifer Moore", "has profession", "scientist"]])"});
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);

  auto d = make_dialogue("t6", "2023-02-13 11:29:00", "Giorgio Rossi", "John Lin",
                         {{"Giorgio Rossi", "Excuse me, are you John Lin?"},
                          {"John Lin", "Yes, that's me. How may I help you?"}});
  const auto& triplets = screener.extract_triplets(d);
  REQUIRE(triplets.size() == 6);
  bool found = false;
  for (const auto& t : triplets)
    if (t.subject == "Jennifer Moore" && t.relation == "is running for" &&
        t.object == "local mayor")
      found = true;
  CHECK(found);
  CHECK(triplets[0].source_dialogue_id == "t6");

  // Cached: a second extraction issues no further chat calls.
  int calls_before = b.chat->calls();
  screener.extract_triplets(d);
  CHECK(b.chat->calls() == calls_before);
}

TEST_CASE("triplet extraction drops malformed entries and tolerates garbage") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);

  SUBCASE("empty list") {
    b.chat->add_rule("Extract personal information", {"[]"});
    int warnings = 0;
    CHECK(screener.extract_triplets_text("Ada: hi", "candidate utterance", "", &warnings)
              .empty());
    CHECK(warnings == 0);
  }
  SUBCASE("two-element entry dropped, rest kept") {
    b.chat->add_rule("Extract personal information",
                     {R"([["Ada", "likes"], ["Ada", "likes", "tea"]])"});
    int warnings = 0;
    auto triplets =
        screener.extract_triplets_text("Ada: hi", "candidate utterance", "", &warnings);
    REQUIRE(triplets.size() == 1);
    CHECK(triplets[0].object == "tea");
    CHECK(warnings == 1);
  }
  SUBCASE("unparseable output yields empty with a warning") {
    b.chat->add_rule("Extract personal information", {"no json here", "still not json"});
    int warnings = 0;
    auto triplets =
        screener.extract_triplets_text("Ada: hi", "candidate utterance", "", &warnings);
    CHECK(triplets.empty());
    CHECK(warnings == 1);
  }
}

TEST_CASE("third-party mention detection") {
  const std::vector<std::string> roster = {"John Lin", "Giorgio Rossi", "Jennifer Moore",
                                           "Eddy Lin"};
  SUBCASE("full-name mention of a third party") {
    auto mentions = detect_third_party_mentions(
        "I heard Jennifer Moore is running for mayor next month", "John Lin",
        "Giorgio Rossi", roster);
    REQUIRE(mentions.size() == 1);
    CHECK(mentions[0] == "Jennifer Moore");
  }
  SUBCASE("speaker and listener are never mentions") {
    auto mentions = detect_third_party_mentions(
        "Well John Lin talked with Giorgio Rossi about music", "John Lin", "Giorgio Rossi",
        roster);
    CHECK(mentions.empty());
  }
  SUBCASE("bare surname reports the remaining sharers") {
    auto mentions =
        detect_third_party_mentions("the Lin family bakery is busy", "John Lin",
                                    "Giorgio Rossi", roster);
    REQUIRE(mentions.size() == 1);
    CHECK(mentions[0] == "Eddy Lin");
  }
  SUBCASE("ambiguous first name reports all candidates") {
    std::vector<std::string> wide = {"John Lin", "John Smith", "Ada Park", "Ben Cole"};
    auto mentions =
        detect_third_party_mentions("John would love this", "Ada Park", "Ben Cole", wide);
    REQUIRE(mentions.size() == 2);
    CHECK(mentions[0] == "John Lin");
    CHECK(mentions[1] == "John Smith");
  }
  SUBCASE("possessive forms match") {
    auto mentions = detect_third_party_mentions("have you seen Jennifer's paintings",
                                                "John Lin", "Giorgio Rossi", roster);
    REQUIRE(mentions.size() == 1);
    CHECK(mentions[0] == "Jennifer Moore");
  }
  SUBCASE("matching is case-sensitive whole-word") {
    CHECK(detect_third_party_mentions("the jennifer protocol", "John Lin", "Giorgio Rossi",
                                      roster)
              .empty());
    CHECK(detect_third_party_mentions("Moores do not count", "John Lin", "Giorgio Rossi",
                                      roster)
              .empty());
  }
}

TEST_CASE("inconsistency screening is clean without prior dialogues or NLI calls") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_inconsistency({"anything at all", "Ada", &cur}, "Ben");
  CHECK(report.outcome == Outcome::clean);
  CHECK(b.gateway->counters().nli_calls == 0);
  CHECK(b.gateway->counters().chat_calls == 0);
}

TEST_CASE("inconsistency screening flags a contradiction above theta_nlig") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue(
      "p1", "2023-02-13 08:00:00", "Ada", "Ben",
      {{"Ada", "I am not interested in politics at all"}, {"Ben", "Fair enough"}}));

  b.chat->add_rule("following dialogue",
                   {R"([["Ada", "is not interested in", "politics"]])"});
  b.chat->add_rule("following candidate utterance",
                   {R"([["Ada", "is running for", "mayor"]])"});
  b.chat->add_rule("Select up to", {R"({"dialogues": ["p1"]})"});
  b.nli->register_pair("Ada is not interested in politics.", "Ada is running for mayor.",
                       {0.005, 0.005, 0.99});

  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report =
      screener.screen_inconsistency({"I am going to run for mayor", "Ada", &cur}, "Ben");
  CHECK(report.outcome == Outcome::evidence);
  REQUIRE(report.evidence.size() == 1);
  CHECK(report.evidence[0] == "p1");
}

TEST_CASE("contradiction exactly at theta_nlig is not suspicious") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue(
      "p1", "2023-02-13 08:00:00", "Ada", "Ben",
      {{"Ada", "I am not interested in politics at all"}, {"Ben", "Fair enough"}}));
  b.chat->add_rule("following dialogue",
                   {R"([["Ada", "is not interested in", "politics"]])"});
  b.chat->add_rule("following candidate utterance",
                   {R"([["Ada", "is running for", "mayor"]])"});
  b.nli->register_pair("Ada is not interested in politics.", "Ada is running for mayor.",
                       {0.01, 0.01, 0.98});

  SdrConfig cfg;  // theta_nlig = 0.98, strict >
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report =
      screener.screen_inconsistency({"I am going to run for mayor", "Ada", &cur}, "Ben");
  CHECK(report.outcome == Outcome::clean);
}

TEST_CASE("evidence selection caps at k_nlig and drops unknown ids") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  for (int i = 1; i <= 5; ++i) {
    std::string id = "p" + std::to_string(i);
    store.insert_dialogue(make_dialogue(
        id, "2023-02-13 0" + std::to_string(i) + ":00:00", "Ada", "Ben",
        {{"Ada", "prior statement number " + std::to_string(i)}, {"Ben", "noted"}}));
  }
  // Each prior dialogue contributes one triplet contradicting the candidate.
  for (int i = 1; i <= 5; ++i)
    b.chat->add_rule("prior statement number " + std::to_string(i),
                     {"[[\"Ada\", \"said fact\", \"f" + std::to_string(i) + "\"]]"});
  b.chat->add_rule("following candidate utterance",
                   {R"([["Ada", "claims", "the opposite"]])"});
  for (int i = 1; i <= 5; ++i)
    b.nli->register_pair("Ada said fact f" + std::to_string(i) + ".",
                         "Ada claims the opposite.", {0.005, 0.005, 0.99});
  // Selection returns an unknown id plus five valid ones; cap is 3.
  b.chat->add_rule("Select up to",
                   {R"({"dialogues": ["ghost", "p4", "p1", "p5", "p2", "p3"]})"});

  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_inconsistency({"the opposite is true today", "Ada", &cur},
                                              "Ben");
  CHECK(report.outcome == Outcome::evidence);
  REQUIRE(report.evidence.size() == 3);
  CHECK(report.evidence[0] == "p4");
  CHECK(report.evidence[1] == "p1");
  CHECK(report.evidence[2] == "p5");
  CHECK(report.warnings == 1);  // the unknown id
}

TEST_CASE("hallucination screening without mentions is clean and free") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();
  auto report = screener.screen_hallucination({"nothing about anyone", "Ada", &cur}, {}, "Ben");
  CHECK(report.outcome == Outcome::clean);
  CHECK(b.gateway->counters().chat_calls == 0);
}

TEST_CASE("hallucination screening scores mentioned agents") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Screener screener(store, *b.gateway, cfg);
  auto cur = current_dialogue();

  SUBCASE("personal-plan mention scores low and stays clean") {
    b.chat->add_rule("harmful hallucination",
                     {R"({"reason": "only the speaker's own plan", "score": 3})"});
    auto report = screener.screen_hallucination(
        {"I plan to visit Abigail later to discuss art", "Rajiv", &cur}, {"Abigail Chen"},
        "Ben");
    CHECK(report.outcome == Outcome::clean);
  }
  SUBCASE("objective third-party claim scores high and is flagged") {
    b.chat->add_rule("harmful hallucination",
                     {R"({"reason": "objective past event the agent could verify", "score": 8})"});
    auto report = screener.screen_hallucination(
        {"Carlos won the poetry contest last year in the city", "Ryan", &cur},
        {"Carlos Gomez"}, "Ben");
    CHECK(report.outcome == Outcome::flagged);
    CHECK(report.score == 8);
    CHECK(report.mentioned_agent == "Carlos Gomez");
  }
  SUBCASE("score exactly at theta_fact stays clean") {
    b.chat->add_rule("harmful hallucination", {R"({"reason": "borderline", "score": 6})"});
    auto report = screener.screen_hallucination({"Carlos maybe did something", "Ryan", &cur},
                                                {"Carlos Gomez"}, "Ben");
    CHECK(report.outcome == Outcome::clean);
  }
  SUBCASE("max scoring agent is reported") {
    b.chat->add_rule("mentions Carlos Gomez", {R"({"reason": "mild", "score": 7})"});
    b.chat->add_rule("mentions Dina Park", {R"({"reason": "strong", "score": 9})"});
    auto report = screener.screen_hallucination(
        {"Carlos and Dina both moved away last winter", "Ryan", &cur},
        {"Carlos Gomez", "Dina Park"}, "Ben");
    CHECK(report.outcome == Outcome::flagged);
    CHECK(report.score == 9);
    CHECK(report.mentioned_agent == "Dina Park");
  }
}

TEST_CASE("screening pipelines are read-only and order-independent") {
  auto run_in_order = [](bool repetition_first) {
    auto b = make_mock_gateway();
    b.embedding->set_angle(kLongCandidate, 0.0);
    b.embedding->set_angle("same speaker other dialogue text", angle_for(0.91));
    b.embedding->set_angle("other speaker text", angle_for(0.86));
    DialogueStore store(*b.gateway);
    store.insert_dialogue(make_dialogue(
        "d1", "2023-02-13 08:00:00", "Ada", "Cyd",
        {{"Ada", "same speaker other dialogue text"}, {"Cyd", "other speaker text"}}));
    b.chat->add_rule("Extract personal information", {"[]"});
    b.chat->add_rule("harmful hallucination", {R"({"reason": "none", "score": 1})"});

    SdrConfig cfg;
    Screener screener(store, *b.gateway, cfg);
    auto cur = current_dialogue();
    CandidateContext ctx{kLongCandidate, "Ada", &cur};
    nlohmann::json out = nlohmann::json::array();
    size_t dialogues_before = store.dialogue_count();
    if (repetition_first) {
      out.push_back(screener.screen_repetition(ctx).to_json());
      out.push_back(screener.screen_inconsistency(ctx, "Ben").to_json());
      out.push_back(screener.screen_hallucination(ctx, {"Cyd Brown"}, "Ben").to_json());
    } else {
      auto h = screener.screen_hallucination(ctx, {"Cyd Brown"}, "Ben").to_json();
      auto i = screener.screen_inconsistency(ctx, "Ben").to_json();
      auto r = screener.screen_repetition(ctx).to_json();
      out.push_back(r);
      out.push_back(i);
      out.push_back(h);
    }
    CHECK(store.dialogue_count() == dialogues_before);
    return out.dump();
  };
  CHECK(run_in_order(true) == run_in_order(false));
}
