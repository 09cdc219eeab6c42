#include "sdr/screening.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/prompts.hpp"
#include "sdr/text.hpp"

namespace sdr {

void SdrConfig::validate() const {
  if (k_sim <= 0 || k_nlig <= 0 || n_diag <= 0 || max_rounds <= 0 || max_turns <= 0 ||
      min_words_repetition <= 0)
    throw ConfigError("counts must be positive");
  if (!(theta - alpha > 0.0)) throw ConfigError("theta - alpha must be positive");
  if (!(theta + alpha < theta_force)) throw ConfigError("theta + alpha must be below theta_force");
  if (!(theta_force <= 1.0)) throw ConfigError("theta_force must be at most 1");
  if (!(theta_nlig > 0.0 && theta_nlig <= 1.0)) throw ConfigError("theta_nlig out of (0,1]");
  if (theta_fact < 1 || theta_fact > 10) throw ConfigError("theta_fact out of 1..10");
  if (theta_regen < 1 || theta_regen > 10) throw ConfigError("theta_regen out of 1..10");
  if (history_source != "original" && history_source != "regenerated")
    throw ConfigError("history_source must be 'original' or 'regenerated'");
}

SdrConfig SdrConfig::from_json(const nlohmann::json& j) {
  SdrConfig c;
  c.k_sim = j.value("k_sim", c.k_sim);
  c.theta = j.value("theta", c.theta);
  c.alpha = j.value("alpha", c.alpha);
  c.theta_force = j.value("theta_force", c.theta_force);
  c.min_words_repetition = j.value("min_words_repetition", c.min_words_repetition);
  c.theta_nlig = j.value("theta_nlig", c.theta_nlig);
  c.k_nlig = j.value("k_nlig", c.k_nlig);
  c.theta_fact = j.value("theta_fact", c.theta_fact);
  c.n_diag = j.value("n_diag", c.n_diag);
  c.theta_regen = j.value("theta_regen", c.theta_regen);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.max_turns = j.value("max_turns", c.max_turns);
  c.history_source = j.value("history_source", c.history_source);
  c.memory_limit = j.value("memory_limit", c.memory_limit);
  c.diagnosis_temperature = j.value("diagnosis_temperature", c.diagnosis_temperature);
  c.validate();
  return c;
}

SdrConfig SdrConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_json(nlohmann::json::parse(body, nullptr, true, /*ignore_comments=*/true));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

nlohmann::json SdrConfig::to_json() const {
  return {{"k_sim", k_sim},
          {"theta", theta},
          {"alpha", alpha},
          {"theta_force", theta_force},
          {"min_words_repetition", min_words_repetition},
          {"theta_nlig", theta_nlig},
          {"k_nlig", k_nlig},
          {"theta_fact", theta_fact},
          {"n_diag", n_diag},
          {"theta_regen", theta_regen},
          {"max_rounds", max_rounds},
          {"max_turns", max_turns},
          {"history_source", history_source},
          {"memory_limit", memory_limit},
          {"diagnosis_temperature", diagnosis_temperature}};
}

const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::repetition: return "repetition";
    case Pipeline::inconsistency: return "inconsistency";
    case Pipeline::hallucination: return "hallucination";
  }
  return "?";
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::clean: return "clean";
    case Outcome::evidence: return "evidence";
    case Outcome::force_regenerate: return "force_regenerate";
    case Outcome::flagged: return "flagged";
  }
  return "?";
}

nlohmann::json ScreeningReport::to_json() const {
  nlohmann::json j;
  j["pipeline"] = pipeline_name(pipeline);
  j["outcome"] = outcome_name(outcome);
  if (!evidence.empty()) j["evidence"] = evidence;
  if (!hits.empty()) {
    j["hits"] = nlohmann::json::array();
    for (const auto& h : hits)
      j["hits"].push_back({{"utterance_id", h.utterance_id},
                           {"dialogue_id", h.dialogue_id},
                           {"speaker", h.speaker},
                           {"score", h.score},
                           {"threshold", h.threshold},
                           {"same_speaker", h.same_speaker},
                           {"same_dialogue", h.same_dialogue}});
  }
  if (outcome == Outcome::flagged) {
    j["score"] = score;
    j["mentioned_agent"] = mentioned_agent;
    j["reason"] = flag_reason;
  }
  if (warnings > 0) j["warnings"] = warnings;
  return j;
}

double dynamic_threshold(const SdrConfig& cfg, bool same_speaker, bool same_dialogue) {
  if (same_speaker && !same_dialogue) return cfg.theta + cfg.alpha;
  if (same_speaker && same_dialogue) return cfg.theta - cfg.alpha;
  return cfg.theta;
}

std::string textualize(const Triplet& t) {
  std::string s = trim(t.subject) + " " + trim(t.relation) + " " + trim(t.object);
  if (s.empty()) return s;
  char last = s.back();
  if (last != '.' && last != '!' && last != '?') s += '.';
  return s;
}

namespace {

std::string strip_possessive(const std::string& word) {
  if (word.size() > 2 && word.compare(word.size() - 2, 2, "'s") == 0)
    return word.substr(0, word.size() - 2);
  return word;
}

struct Word {
  std::string text;  // possessive stripped
  size_t begin = 0;
  size_t end = 0;
};

std::vector<Word> scan_words(const std::string& text) {
  std::vector<Word> words;
  size_t start = 0;
  std::string current;
  auto flush = [&](size_t end) {
    if (!current.empty()) {
      words.push_back({strip_possessive(current), start, end});
      current.clear();
    }
  };
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      if (current.empty()) start = i;
      current.push_back(c);
    } else {
      flush(i);
    }
  }
  flush(text.size());
  return words;
}

std::vector<std::pair<size_t, size_t>> phrase_spans(const std::string& text,
                                                    const std::string& phrase) {
  std::vector<std::pair<size_t, size_t>> spans;
  size_t pos = 0;
  while ((pos = text.find(phrase, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    size_t end = pos + phrase.size();
    bool right_ok = end >= text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
    if (left_ok && right_ok) spans.emplace_back(pos, end);
    pos += 1;
  }
  return spans;
}

}  // namespace

std::vector<std::string> detect_third_party_mentions(const std::string& text,
                                                     const std::string& speaker,
                                                     const std::string& listener,
                                                     const std::vector<std::string>& roster) {
  // Full-name matches come first; their words are consumed so another
  // member's bare first/last name cannot re-match inside them.
  std::vector<std::pair<size_t, size_t>> consumed;
  std::vector<std::string> mentions;
  auto is_party = [&](const std::string& name) { return name == speaker || name == listener; };
  for (const auto& name : roster) {
    auto spans = phrase_spans(text, name);
    if (spans.empty()) continue;
    consumed.insert(consumed.end(), spans.begin(), spans.end());
    if (!is_party(name)) mentions.push_back(name);
  }

  std::set<std::string> free_words;
  for (const auto& w : scan_words(text)) {
    bool inside = false;
    for (const auto& [begin, end] : consumed)
      if (w.begin >= begin && w.end <= end) {
        inside = true;
        break;
      }
    if (!inside) free_words.insert(w.text);
  }

  for (const auto& name : roster) {
    if (is_party(name)) continue;
    if (std::find(mentions.begin(), mentions.end(), name) != mentions.end()) continue;
    auto parts = split_words(name);
    if (parts.empty()) continue;
    if (free_words.count(parts.front()) ||
        (parts.size() > 1 && free_words.count(parts.back())))
      mentions.push_back(name);
  }

  // Roster order keeps the output deterministic.
  std::vector<std::string> ordered;
  for (const auto& name : roster)
    if (std::find(mentions.begin(), mentions.end(), name) != mentions.end())
      ordered.push_back(name);
  return ordered;
}

Screener::Screener(const DialogueStore& store, ModelGateway& gateway, const SdrConfig& cfg)
    : store_(&store), gateway_(&gateway), cfg_(cfg) {}

const std::vector<double>& Screener::embed_cached(const std::string& text) {
  auto it = embed_cache_.find(text);
  if (it != embed_cache_.end()) return it->second;
  return embed_cache_.emplace(text, gateway_->embed(text)).first->second;
}

ScreeningReport Screener::screen_repetition(const CandidateContext& c) {
  ScreeningReport report;
  report.pipeline = Pipeline::repetition;
  if (static_cast<int>(split_words(c.text).size()) < cfg_.min_words_repetition)
    return report;  // short social-glue turns are exempt

  const std::string current_id = c.current ? c.current->dialogue_id : "";
  const std::optional<std::int64_t> before =
      c.current ? std::optional<std::int64_t>(c.current->time_epoch) : std::nullopt;

  struct Hit {
    SimilarityHit sim;
    bool in_store = false;
  };
  std::vector<Hit> hits;
  for (const auto& h : store_->query_similar(c.text, cfg_.k_sim, {}, c.speaker, current_id,
                                             before))
    hits.push_back({h, true});

  // The in-progress dialogue is not yet in the store; scan it directly so
  // the same-dialogue threshold branch applies.
  if (c.current) {
    const auto& query = embed_cached(c.text);
    for (const auto& u : c.current->utterances) {
      SimilarityHit h;
      h.utterance = &u;
      h.score = cosine(query, embed_cached(u.text));
      h.same_speaker = u.speaker == c.speaker;
      h.same_dialogue = true;
      hits.push_back({h, false});
    }
  }

  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.sim.score != b.sim.score) return a.sim.score > b.sim.score;
    return a.in_store && !b.in_store;  // store entries are older
  });
  if (static_cast<int>(hits.size()) > cfg_.k_sim) hits.resize(cfg_.k_sim);

  auto record = [&](const Hit& h, double threshold) {
    ScreeningReport::HitRecord r;
    r.utterance_id = h.sim.utterance->utterance_id;
    r.dialogue_id = h.sim.utterance->dialogue_id;
    r.speaker = h.sim.utterance->speaker;
    r.score = h.sim.score;
    r.threshold = threshold;
    r.same_speaker = h.sim.same_speaker;
    r.same_dialogue = h.sim.same_dialogue;
    return r;
  };

  for (const auto& h : hits) {
    if (h.sim.score > cfg_.theta_force) {
      report.outcome = Outcome::force_regenerate;
      report.hits.push_back(record(h, cfg_.theta_force));
      return report;
    }
  }

  int over = 0;
  std::vector<std::string> evidence_ids;
  for (const auto& h : hits) {
    double threshold = dynamic_threshold(cfg_, h.sim.same_speaker, h.sim.same_dialogue);
    if (h.sim.score > threshold) {
      ++over;
      report.hits.push_back(record(h, threshold));
      if (h.in_store &&
          std::find(evidence_ids.begin(), evidence_ids.end(), h.sim.utterance->dialogue_id) ==
              evidence_ids.end())
        evidence_ids.push_back(h.sim.utterance->dialogue_id);
    }
  }
  if (over > 1 && !evidence_ids.empty()) {
    if (static_cast<int>(evidence_ids.size()) > cfg_.k_sim) evidence_ids.resize(cfg_.k_sim);
    report.outcome = Outcome::evidence;
    report.evidence = std::move(evidence_ids);
  } else {
    report.hits.clear();
  }
  return report;
}

std::vector<Triplet> Screener::extract_triplets_text(const std::string& text,
                                                     const std::string& label,
                                                     const std::string& source_dialogue_id,
                                                     int* warnings) {
  ChatRequest req;
  req.prompt = prompts::triplet_extraction(label, text);
  req.temperature = 0.0;
  req.expect_json = true;
  ++extraction_calls_;
  std::string out;
  try {
    out = gateway_->chat(req);
  } catch (const ParseError& e) {
    log_warn("triplet extraction unparseable: " + std::string(e.what()));
    if (warnings) ++*warnings;
    return {};
  }
  auto parsed = extract_json(out);
  if (!parsed) {
    if (warnings) ++*warnings;
    return {};
  }
  nlohmann::json list = *parsed;
  if (list.is_object()) {
    // Accept a {"triplets": [...]} wrapper.
    if (list.contains("triplets") && list["triplets"].is_array())
      list = list["triplets"];
    else {
      if (warnings) ++*warnings;
      return {};
    }
  }
  std::vector<Triplet> triplets;
  int dropped = 0;
  for (const auto& entry : list) {
    if (!entry.is_array() || entry.size() != 3 || !entry[0].is_string() ||
        !entry[1].is_string() || !entry[2].is_string()) {
      ++dropped;
      continue;
    }
    Triplet t;
    t.subject = trim(entry[0].get<std::string>());
    t.relation = trim(entry[1].get<std::string>());
    t.object = trim(entry[2].get<std::string>());
    t.source_dialogue_id = source_dialogue_id;
    if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
      ++dropped;
      continue;
    }
    triplets.push_back(std::move(t));
  }
  if (dropped > 0) {
    log_warn("triplet extraction dropped " + std::to_string(dropped) + " malformed entries");
    if (warnings) *warnings += dropped;
  }
  return triplets;
}

const std::vector<Triplet>& Screener::extract_triplets(const Dialogue& d) {
  auto it = triplet_cache_.find(d.dialogue_id);
  if (it != triplet_cache_.end()) return it->second;
  auto triplets =
      extract_triplets_text(render_dialogue_text(d), "dialogue", d.dialogue_id, nullptr);
  return triplet_cache_.emplace(d.dialogue_id, std::move(triplets)).first->second;
}

std::vector<std::string> Screener::nlig_evidence(const std::vector<Triplet>& candidate_triplets,
                                                 const std::vector<const Dialogue*>& priors,
                                                 int* warnings) {
  struct Suspicious {
    const Triplet* prior;
    const Triplet* candidate;
    double contradiction;
  };
  std::vector<Suspicious> suspicious;
  for (const Dialogue* prior : priors) {
    const auto& prior_triplets = extract_triplets(*prior);
    for (const auto& pt : prior_triplets) {
      for (const auto& ct : candidate_triplets) {
        double contra = gateway_->nli(textualize(pt), textualize(ct)).contradiction;
        if (contra > cfg_.theta_nlig) suspicious.push_back({&pt, &ct, contra});
      }
    }
  }
  if (suspicious.empty()) return {};

  std::set<std::string> valid_ids;
  std::map<std::string, int> pair_counts;
  std::string block;
  for (const auto& s : suspicious) {
    valid_ids.insert(s.prior->source_dialogue_id);
    pair_counts[s.prior->source_dialogue_id]++;
    block += "Earlier (dialogue " + s.prior->source_dialogue_id + "): " + textualize(*s.prior) +
             "\nCandidate: " + textualize(*s.candidate) + "\n";
  }

  ChatRequest req;
  req.prompt = prompts::evidence_selection(block, cfg_.k_nlig);
  req.temperature = 0.0;
  req.expect_json = true;
  std::vector<std::string> selected;
  try {
    auto parsed = extract_json(gateway_->chat(req));
    if (parsed && parsed->is_object() && parsed->contains("dialogues") &&
        (*parsed)["dialogues"].is_array()) {
      for (const auto& idj : (*parsed)["dialogues"]) {
        if (!idj.is_string()) continue;
        std::string id = idj.get<std::string>();
        if (!valid_ids.count(id)) {
          log_warn("evidence selection returned unknown dialogue id '" + id + "' (dropped)");
          if (warnings) ++*warnings;
          continue;
        }
        if (std::find(selected.begin(), selected.end(), id) == selected.end())
          selected.push_back(id);
        if (static_cast<int>(selected.size()) >= cfg_.k_nlig) break;
      }
    }
  } catch (const Error& e) {
    log_warn("evidence selection failed: " + std::string(e.what()));
    if (warnings) ++*warnings;
  }
  if (selected.empty()) {
    // Fall back to the dialogues with the most suspicious pairs.
    std::vector<std::pair<std::string, int>> ranked(pair_counts.begin(), pair_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (const auto& [id, n] : ranked) {
      selected.push_back(id);
      if (static_cast<int>(selected.size()) >= cfg_.k_nlig) break;
    }
  }
  return selected;
}

ScreeningReport Screener::screen_inconsistency(const CandidateContext& c,
                                               const std::string& listener) {
  ScreeningReport report;
  report.pipeline = Pipeline::inconsistency;
  const std::optional<std::int64_t> before =
      c.current ? std::optional<std::int64_t>(c.current->time_epoch) : std::nullopt;

  std::vector<const Dialogue*> priors;
  std::set<std::string> seen;
  for (const std::string& agent : {c.speaker, listener}) {
    for (const Dialogue* d : store_->dialogues_involving(agent, before))
      if (seen.insert(d->dialogue_id).second) priors.push_back(d);
  }
  if (priors.empty()) return report;
  std::sort(priors.begin(), priors.end(), [](const Dialogue* a, const Dialogue* b) {
    if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
    return a->dialogue_id < b->dialogue_id;
  });

  auto candidate_triplets =
      extract_triplets_text(c.speaker + ": " + c.text, "candidate utterance", "", &report.warnings);
  for (auto& t : candidate_triplets) t.source_agent = c.speaker;
  if (candidate_triplets.empty()) return report;

  auto evidence = nlig_evidence(candidate_triplets, priors, &report.warnings);
  if (evidence.empty()) return report;
  report.outcome = Outcome::evidence;
  report.evidence = std::move(evidence);
  return report;
}

ScreeningReport Screener::screen_hallucination(const CandidateContext& c,
                                               const std::vector<std::string>& mentions,
                                               const std::string& listener) {
  ScreeningReport report;
  report.pipeline = Pipeline::hallucination;
  if (mentions.empty()) return report;

  int best_score = 0;
  std::string best_agent;
  std::string best_reason;
  for (const auto& mentioned : mentions) {
    ChatRequest req;
    req.prompt = prompts::hallucination_score(c.text, c.speaker, listener, mentioned);
    req.temperature = 0.0;
    req.expect_json = true;
    auto parsed = extract_json(gateway_->chat(req));
    if (!parsed || !parsed->is_object()) throw ParseError("hallucination score: not an object");
    int score = 0;
    const auto& sj = parsed->at("score");
    if (sj.is_number_integer())
      score = sj.get<int>();
    else if (sj.is_string())
      score = std::stoi(sj.get<std::string>());
    else
      throw ParseError("hallucination score: 'score' is not an integer");
    if (score < 1 || score > 10)
      throw ParseError("hallucination score out of 1..10: " + std::to_string(score));
    std::string reason = parsed->value("reason", "");
    if (score > best_score) {
      best_score = score;
      best_agent = mentioned;
      best_reason = reason;
    }
  }
  if (best_score > cfg_.theta_fact) {
    report.outcome = Outcome::flagged;
    report.score = best_score;
    report.mentioned_agent = best_agent;
    report.flag_reason = best_reason;
  }
  return report;
}

}  // namespace sdr
