#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/dialogue.hpp"
#include "sdr/dialogue_store.hpp"
#include "sdr/model_gateway.hpp"

namespace sdr {

// Pipeline thresholds and counts. Defaults follow the reference
// hyper-parameter setting.
struct SdrConfig {
  int k_sim = 5;
  double theta = 0.85;
  double alpha = 0.05;
  double theta_force = 0.95;
  int min_words_repetition = 10;
  double theta_nlig = 0.98;
  int k_nlig = 3;
  int theta_fact = 6;
  int n_diag = 3;
  int theta_regen = 8;
  int max_rounds = 2;
  int max_turns = 16;
  std::string history_source = "original";  // original | regenerated
  int memory_limit = 10;
  double diagnosis_temperature = 0.7;

  void validate() const;
  static SdrConfig from_json(const nlohmann::json& j);
  static SdrConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct Triplet {
  std::string subject;
  std::string relation;
  std::string object;
  std::string source_dialogue_id;
  std::string source_agent;
};

enum class Pipeline { repetition, inconsistency, hallucination };
enum class Outcome { clean, evidence, force_regenerate, flagged };

const char* pipeline_name(Pipeline p);
const char* outcome_name(Outcome o);

struct ScreeningReport {
  Pipeline pipeline = Pipeline::repetition;
  Outcome outcome = Outcome::clean;
  std::vector<std::string> evidence;  // store dialogue ids, deduplicated, non-empty

  // Repetition: hits that crossed a threshold (the force trigger first when
  // outcome is force_regenerate).
  struct HitRecord {
    std::string utterance_id;
    std::string dialogue_id;
    std::string speaker;
    double score = 0.0;
    double threshold = 0.0;
    bool same_speaker = false;
    bool same_dialogue = false;
  };
  std::vector<HitRecord> hits;

  // Hallucination: max-scoring mentioned agent.
  int score = 0;
  std::string mentioned_agent;
  std::string flag_reason;

  int warnings = 0;

  nlohmann::json to_json() const;
};

// Similarity threshold adjusted by hit provenance: theta+alpha for the same
// speaker in a different dialogue, theta-alpha for the same speaker in the
// same dialogue, theta otherwise.
double dynamic_threshold(const SdrConfig& cfg, bool same_speaker, bool same_dialogue);

// "<subject> <relation> <object>." with parts trimmed; no period appended
// when the sentence already ends in punctuation.
std::string textualize(const Triplet& t);

// Roster members other than speaker and listener whose full name, first
// name, or last name occurs as a whole word in the text. Possessive "'s"
// suffixes are stripped before matching. A bare first or last name shared
// by several roster members reports all of them.
std::vector<std::string> detect_third_party_mentions(const std::string& text,
                                                     const std::string& speaker,
                                                     const std::string& listener,
                                                     const std::vector<std::string>& roster);

// A candidate utterance under screening, together with the in-progress
// dialogue it would extend.
struct CandidateContext {
  std::string text;
  std::string speaker;
  const Dialogue* current = nullptr;
};

// The three per-candidate screening pipelines. Read-only with respect to
// the store; all evidence dialogue ids come from the store and are strictly
// earlier than the current dialogue. The triplet cache guarantees at most
// one extraction call per dialogue per screener.
class Screener {
 public:
  Screener(const DialogueStore& store, ModelGateway& gateway, const SdrConfig& cfg);

  ScreeningReport screen_repetition(const CandidateContext& c);
  ScreeningReport screen_inconsistency(const CandidateContext& c, const std::string& listener);
  ScreeningReport screen_hallucination(const CandidateContext& c,
                                       const std::vector<std::string>& mentions,
                                       const std::string& listener);

  // LLM triplet extraction. Malformed entries are dropped (counted in
  // *warnings); fully unparseable output yields an empty list.
  std::vector<Triplet> extract_triplets_text(const std::string& text, const std::string& label,
                                             const std::string& source_dialogue_id,
                                             int* warnings = nullptr);
  const std::vector<Triplet>& extract_triplets(const Dialogue& d);

  // Inconsistency machinery shared with corpus judging: NLI-scores the
  // candidate triplets against triplets of each prior dialogue, then asks
  // the chat backend to select the top-k source dialogues.
  std::vector<std::string> nlig_evidence(const std::vector<Triplet>& candidate_triplets,
                                         const std::vector<const Dialogue*>& priors,
                                         int* warnings);

  int extraction_calls() const { return extraction_calls_; }

 private:
  const DialogueStore* store_;
  ModelGateway* gateway_;
  SdrConfig cfg_;
  std::map<std::string, std::vector<Triplet>> triplet_cache_;
  std::map<std::string, std::vector<double>> embed_cache_;
  int extraction_calls_ = 0;

  const std::vector<double>& embed_cached(const std::string& text);
};

}  // namespace sdr
