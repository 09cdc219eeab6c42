#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdr/error.hpp"
#include "sdr/regeneration.hpp"
#include "support/test_util.hpp"

using namespace sdr;
using namespace sdr::test;

namespace {

DiagnosisComment scored(Pipeline p, int score, const std::string& reason) {
  DiagnosisComment c;
  c.pipeline = p;
  c.score = score;
  c.reason = reason;
  return c;
}

DiagnosisComment agreement(bool agreed, const std::string& reason) {
  DiagnosisComment c;
  c.pipeline = Pipeline::hallucination;
  c.agreed = agreed;
  c.reason = reason;
  return c;
}

Roster two_agent_roster() {
  Roster r;
  r.emplace("Ada", make_profile("Ada", "Ada is a gardener who loves quiet mornings."));
  r.emplace("Ben", make_profile("Ben", "Ben is a musician."));
  return r;
}

const std::string kLongCandidate =
    "I think we should definitely plan the big harvest festival together this year";

double angle_for(double score) { return std::acos(score); }

}  // namespace

TEST_CASE("filter_comments keeps scores at or above the threshold and disagreements") {
  SdrConfig cfg;  // theta_regen = 8
  auto retained = filter_comments({scored(Pipeline::repetition, 7, "seven"),
                                   scored(Pipeline::repetition, 8, "eight"),
                                   scored(Pipeline::inconsistency, 9, "nine")},
                                  cfg);
  REQUIRE(retained.size() == 2);
  CHECK(retained[0].reason == "eight");
  CHECK(retained[1].reason == "nine");

  CHECK(filter_comments({agreement(true, "fine")}, cfg).empty());
  REQUIRE(filter_comments({agreement(false, "no")}, cfg).size() == 1);
  CHECK(filter_comments({}, cfg).empty());
}

TEST_CASE("pick_variant is reproducible and balanced") {
  SUBCASE("golden first draws for seed 42") {
    std::mt19937_64 rng(42);
    CHECK(pick_variant(rng) == PromptVariant::persona_narrative);
    CHECK(pick_variant(rng) == PromptVariant::persona_narrative);
    CHECK(pick_variant(rng) == PromptVariant::persona_narrative);
    CHECK(pick_variant(rng) == PromptVariant::persona_narrative);
    CHECK(pick_variant(rng) == PromptVariant::structured_task);
  }
  SUBCASE("same seed twice gives the identical sequence") {
    std::mt19937_64 a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(pick_variant(a) == pick_variant(b));
  }
  SUBCASE("10000 draws land within 3 sigma of one half") {
    std::mt19937_64 rng(7);
    int persona = 0;
    for (int i = 0; i < 10000; ++i)
      if (pick_variant(rng) == PromptVariant::persona_narrative) ++persona;
    CHECK(persona >= 4850);
    CHECK(persona <= 5150);
  }
}

TEST_CASE("integrate_comments issues one chat call and falls back on failure") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);

  SUBCASE("scripted suggestion") {
    b.chat->add_rule("Integrate all comments", {"Drop the repeated claim."});
    int degradations = 0;
    auto suggestion = engine.integrate_comments(
        {scored(Pipeline::repetition, 9, "repeats the festival line")}, "candidate",
        "Ada: hi\n", &degradations);
    CHECK(suggestion == "Drop the repeated claim.");
    CHECK(degradations == 0);
    CHECK(b.gateway->counters().chat_calls == 1);  // no short-circuit for one comment
  }
  SUBCASE("chat failure falls back to newline-joined reasons") {
    // No matching script rule: the chat call throws.
    int degradations = 0;
    auto suggestion = engine.integrate_comments({scored(Pipeline::repetition, 9, "first"),
                                                 scored(Pipeline::inconsistency, 8, "second")},
                                                "candidate", "Ada: hi\n", &degradations);
    CHECK(suggestion == "first\nsecond");
    CHECK(degradations == 1);
  }
}

TEST_CASE("regenerate fills the variant template and parses the output") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);

  PromptInputs inputs;
  inputs.speaker = "Ada";
  inputs.listener = "Ben";
  inputs.background = "Ada is a gardener.";
  inputs.current_dialogue = "Ada: hello\nBen: hi\n";

  SUBCASE("scripted revision") {
    b.chat->add_rule("You might consider saying",
                     {R"({"Response": "a fresher reply",
                          "The conversation ends with Ada's utterance": false})"});
    auto rec = engine.regenerate(inputs, PromptVariant::persona_narrative, "old reply",
                                 "it repeats", "say something new");
    CHECK(rec.new_text == "a fresher reply");
    CHECK(!rec.ends);
    CHECK(!rec.parse_failed);
  }
  SUBCASE("empty response with ends=true withdraws the turn") {
    b.chat->add_rule("You might consider saying",
                     {R"({"Response": "", "The conversation ends with Ada's utterance": true})"});
    auto rec = engine.regenerate(inputs, PromptVariant::persona_narrative, "old reply",
                                 "it repeats", "end it");
    CHECK(rec.new_text.empty());
    CHECK(rec.ends);
  }
  SUBCASE("parse failure keeps the previous candidate") {
    b.chat->add_rule("You might consider saying", {"not json at all"});
    auto rec = engine.regenerate(inputs, PromptVariant::persona_narrative, "old reply",
                                 "reason", "suggestion");
    CHECK(rec.parse_failed);
    CHECK(rec.new_text == "old reply");
  }
}

TEST_CASE("revision prompt templates carry the documented headers and slots") {
  PromptInputs inputs;
  inputs.speaker = "Ada";
  inputs.listener = "Ben";
  inputs.background = "Ada is a gardener.";
  inputs.current_dialogue = "Ada: hello\nBen: hi\n";

  auto persona = prompts::revision(inputs, PromptVariant::persona_narrative, "rejected text",
                                   "the reasons", "the suggestions");
  CHECK(persona.find("Your name is Ada.") != std::string::npos);
  CHECK(persona.find("# Task:") != std::string::npos);
  CHECK(persona.find("rejected text") != std::string::npos);
  CHECK(persona.find("the reasons") != std::string::npos);
  CHECK(persona.find("the suggestions") != std::string::npos);
  CHECK(persona.find("The conversation ends with Ada's utterance") != std::string::npos);
  CHECK(persona.find("If the response is redundant or repetitive") != std::string::npos);

  auto task = prompts::revision(inputs, PromptVariant::structured_task, "rejected text",
                                "the reasons", "the suggestions");
  CHECK(task.find("# Contextual Information:") != std::string::npos);
  CHECK(task.find("**Introduction:**") != std::string::npos);
  CHECK(task.find("# Task:") != std::string::npos);
  CHECK(task.find("Current Dialogue between Ada and Ben") != std::string::npos);
}

TEST_CASE("parse_response_json accepts flexible ends keys and rejects garbage") {
  auto ok = parse_response_json(nlohmann::json::parse(
      R"({"Response": "hi", "The conversation ends with Ada's utterance": true})"));
  CHECK(ok.first == "hi");
  CHECK(ok.second);

  auto generic = parse_response_json(nlohmann::json::parse(
      R"({"Response": "hi", "The conversation ends with [Speaker]'s utterance": "false"})"));
  CHECK(!generic.second);

  CHECK_THROWS_AS(parse_response_json(nlohmann::json::parse(R"({"Response": "hi"})")),
                  ParseError);
  CHECK_THROWS_AS(parse_response_json(nlohmann::json::parse(R"({"other": 1})")), ParseError);
}

TEST_CASE("sdr_loop commits a clean candidate with zero model calls") {
  auto b = make_mock_gateway();
  DialogueStore store(*b.gateway);
  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "shall we begin"}, {"Ben", "yes"}});
  std::mt19937_64 rng(1);
  // Short text: repetition exempt; empty store: no inconsistency; no
  // third-party mentions: no hallucination scoring.
  auto out = engine.run("sounds lovely to me", false, cur, "Ada", "Ben", rng);
  CHECK(out.text == "sounds lovely to me");
  CHECK(!out.withdrawn);
  CHECK(out.trace.rounds.size() == 1);
  CHECK(out.trace.rounds[0].comments.empty());
  CHECK(b.gateway->counters().chat_calls == 0);
  CHECK(engine.regenerations() == 0);
}

TEST_CASE("sdr_loop revises once when round two comes back clean") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("stored similar one", angle_for(0.91));
  b.embedding->set_angle("stored similar two", angle_for(0.87));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue("e1", "2023-02-13 08:00:00", "Ada", "Cyd",
                                      {{"Ada", "stored similar one"}, {"Cyd", "ok"}}));
  store.insert_dialogue(make_dialogue("e2", "2023-02-13 09:00:00", "Cyd", "Ben",
                                      {{"Cyd", "stored similar two"}, {"Ben", "ok"}}));

  b.chat->add_rule("unnatural points", {R"({"reason": "repeats the festival plan", "score": 9})"});
  b.chat->add_rule("following candidate utterance", {"[]"});
  b.chat->add_rule("Integrate all comments", {"Mention something you have not said before."});
  b.chat->add_rule("You might consider saying",
                   {R"({"Response": "short fresh reply",
                        "The conversation ends with Ada's utterance": false})"});

  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "shall we begin"}, {"Ben", "yes"}});
  std::mt19937_64 rng(1);
  auto out = engine.run(kLongCandidate, false, cur, "Ada", "Ben", rng);

  CHECK(out.text == "short fresh reply");
  REQUIRE(out.trace.rounds.size() == 2);
  CHECK(out.trace.rounds[0].reports[0].outcome == Outcome::evidence);
  REQUIRE(out.trace.rounds[0].revision.has_value());
  CHECK(out.trace.rounds[0].retained.size() == 1);
  CHECK(!out.trace.rounds[1].revision.has_value());
  CHECK(engine.regenerations() == 1);
}

TEST_CASE("sdr_loop stops at the round cap and commits the last revision") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("persistent offender text", 0.0);  // also similarity 1.0 vs candidate
  b.embedding->set_angle("stored similar one", angle_for(0.91));
  b.embedding->set_angle("stored similar two", angle_for(0.87));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue("e1", "2023-02-13 08:00:00", "Ada", "Cyd",
                                      {{"Ada", "stored similar one"}, {"Cyd", "ok"}}));
  store.insert_dialogue(make_dialogue("e2", "2023-02-13 09:00:00", "Cyd", "Ben",
                                      {{"Cyd", "stored similar two"}, {"Ben", "ok"}}));

  b.chat->add_rule("unnatural points", {R"({"reason": "still repetitive", "score": 9})"});
  b.chat->add_rule("following candidate utterance", {"[]"});
  b.chat->add_rule("Integrate all comments", {"Vary the topic."});
  // Both revisions return another long, equally repetitive candidate.
  b.chat->add_rule("You might consider saying",
                   {R"({"Response": "I think we should definitely plan the big harvest gathering again this season",
                        "The conversation ends with Ada's utterance": false})",
                    R"({"Response": "final capped revision text",
                        "The conversation ends with Ada's utterance": false})"});
  b.embedding->set_angle(
      "I think we should definitely plan the big harvest gathering again this season",
      angle_for(0.999));

  SdrConfig cfg;  // max_rounds = 2
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "shall we begin"}, {"Ben", "yes"}});
  std::mt19937_64 rng(1);
  auto out = engine.run(kLongCandidate, false, cur, "Ada", "Ben", rng);

  REQUIRE(out.trace.rounds.size() == 2);
  REQUIRE(out.trace.rounds[0].revision.has_value());
  REQUIRE(out.trace.rounds[1].revision.has_value());
  CHECK(out.text == "final capped revision text");
  CHECK(engine.regenerations() == 2);
}

TEST_CASE("force bypass skips diagnosis and goes straight to regeneration") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("near identical stored line", angle_for(0.97));

  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue("e1", "2023-02-13 08:00:00", "Ada", "Cyd",
                                      {{"Ada", "near identical stored line"}, {"Cyd", "ok"}}));

  b.chat->add_rule("You might consider saying",
                   {R"({"Response": "something new then",
                        "The conversation ends with Ada's utterance": false})"});

  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "shall we begin"}, {"Ben", "yes"}});
  std::mt19937_64 rng(1);
  auto out = engine.run(kLongCandidate, false, cur, "Ada", "Ben", rng);

  REQUIRE(!out.trace.rounds.empty());
  CHECK(out.trace.rounds[0].force);
  CHECK(out.trace.rounds[0].reports.size() == 1);  // other pipelines skipped
  CHECK(out.trace.rounds[0].comments.empty());     // no diagnosis calls
  // Only the regeneration chat call in round one.
  CHECK(out.text == "something new then");
}

TEST_CASE("withdrawal ends the dialogue with no committed text") {
  auto b = make_mock_gateway();
  b.embedding->set_angle(kLongCandidate, 0.0);
  b.embedding->set_angle("near identical stored line", angle_for(0.97));
  DialogueStore store(*b.gateway);
  store.insert_dialogue(make_dialogue("e1", "2023-02-13 08:00:00", "Ada", "Cyd",
                                      {{"Ada", "near identical stored line"}, {"Cyd", "ok"}}));
  b.chat->add_rule("You might consider saying",
                   {R"({"Response": "", "The conversation ends with Ada's utterance": true})"});

  SdrConfig cfg;
  Roster roster = two_agent_roster();
  SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::persona);
  auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                           {{"Ada", "shall we begin"}, {"Ben", "yes"}});
  std::mt19937_64 rng(1);
  auto out = engine.run(kLongCandidate, false, cur, "Ada", "Ben", rng);
  CHECK(out.withdrawn);
  CHECK(out.text.empty());
  CHECK(out.ends);
}

TEST_CASE("sdr traces are byte-reproducible under a fixed seed") {
  auto scenario = [] {
    auto b = make_mock_gateway();
    b.embedding->set_angle(kLongCandidate, 0.0);
    b.embedding->set_angle("stored similar one", angle_for(0.91));
    b.embedding->set_angle("stored similar two", angle_for(0.87));
    DialogueStore store(*b.gateway);
    store.insert_dialogue(make_dialogue("e1", "2023-02-13 08:00:00", "Ada", "Cyd",
                                        {{"Ada", "stored similar one"}, {"Cyd", "ok"}}));
    store.insert_dialogue(make_dialogue("e2", "2023-02-13 09:00:00", "Cyd", "Ben",
                                        {{"Cyd", "stored similar two"}, {"Ben", "ok"}}));
    b.chat->add_rule("unnatural points", {R"({"reason": "repetitive", "score": 9})"});
    b.chat->add_rule("following candidate utterance", {"[]"});
    b.chat->add_rule("Integrate all comments", {"Vary it."});
    b.chat->add_rule("You might",
                     {R"({"Response": "short fresh reply",
                          "The conversation ends with Ada's utterance": false})"});
    SdrConfig cfg;
    Roster roster = two_agent_roster();
    SdrEngine engine(store, *b.gateway, roster, cfg, VariantPolicy::mixed);
    auto cur = make_dialogue("cur", "2023-02-13 12:00:00", "Ada", "Ben",
                             {{"Ada", "shall we begin"}, {"Ben", "yes"}});
    std::mt19937_64 rng(42);
    return engine.run(kLongCandidate, false, cur, "Ada", "Ben", rng).trace.to_json().dump();
  };
  CHECK(scenario() == scenario());
}
