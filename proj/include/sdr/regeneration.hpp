#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/agents.hpp"
#include "sdr/diagnosis.hpp"
#include "sdr/dialogue_store.hpp"
#include "sdr/model_gateway.hpp"
#include "sdr/prompts.hpp"
#include "sdr/screening.hpp"

namespace sdr {

enum class VariantPolicy { mixed, persona, task };

const char* variant_name(PromptVariant v);
VariantPolicy variant_policy_from_string(const std::string& s);

// Keeps scored comments at or above theta_regen and agreement comments that
// disagree. An empty result terminates the correction loop.
std::vector<DiagnosisComment> filter_comments(const std::vector<DiagnosisComment>& comments,
                                              const SdrConfig& cfg);

// Uniform draw between the two prompt variants; reproducible per seed.
PromptVariant pick_variant(std::mt19937_64& rng);
PromptVariant choose_variant(VariantPolicy policy, std::mt19937_64& rng);

struct RevisionRecord {
  PromptVariant variant = PromptVariant::persona_narrative;
  std::string reasons;
  std::string suggestion;
  std::string new_text;
  bool ends = false;
  bool parse_failed = false;

  nlohmann::json to_json() const;
};

struct RoundTrace {
  int round = 1;
  std::string candidate;
  std::vector<ScreeningReport> reports;
  std::vector<DiagnosisComment> comments;
  std::vector<DiagnosisComment> retained;
  bool force = false;
  std::optional<RevisionRecord> revision;

  nlohmann::json to_json() const;
};

struct SdrTrace {
  std::vector<RoundTrace> rounds;
  std::string committed_text;
  bool ends = false;
  bool withdrawn = false;
  int degradations = 0;
  int warnings = 0;

  nlohmann::json to_json() const;
};

struct SdrOutcome {
  std::string text;
  bool ends = false;
  bool withdrawn = false;  // regeneration returned empty text + ends
  SdrTrace trace;
};

// The per-candidate correction loop: screen all three pipelines, diagnose
// triggered ones, filter comments, and revise until no comments remain or
// max_rounds revisions have been spent. A similarity above theta_force
// skips diagnosis entirely and goes straight to regeneration. Backend
// failures degrade the affected pipeline to clean for that round.
class SdrEngine {
 public:
  SdrEngine(const DialogueStore& store, ModelGateway& gateway, const Roster& roster,
            const SdrConfig& cfg, VariantPolicy policy);

  SdrOutcome run(const std::string& candidate, bool candidate_ends, const Dialogue& current,
                 const std::string& speaker, const std::string& listener,
                 std::mt19937_64& rng);

  // One chat call merging the retained comments into one suggestion; falls
  // back to the concatenated reasons on chat failure.
  std::string integrate_comments(const std::vector<DiagnosisComment>& retained,
                                 const std::string& candidate,
                                 const std::string& current_dialogue, int* degradations);

  // Fills the revision template and parses {"Response", "The conversation
  // ends with [Speaker]'s utterance"}. parse_failed keeps the previous
  // candidate.
  RevisionRecord regenerate(const PromptInputs& inputs, PromptVariant variant,
                            const std::string& rejected_text, const std::string& reasons,
                            const std::string& suggestion);

  Screener& screener() { return screener_; }
  int regenerations() const { return regenerations_; }

 private:
  const DialogueStore* store_;
  ModelGateway* gateway_;
  const Roster* roster_;
  SdrConfig cfg_;
  VariantPolicy policy_;
  Screener screener_;
  Diagnoser diagnoser_;
  int regenerations_ = 0;
};

// Parses the revision/generation output object. Accepts the ends flag under
// any key beginning with "The conversation ends with"; booleans may arrive
// as strings. Throws ParseError.
std::pair<std::string, bool> parse_response_json(const nlohmann::json& j);

}  // namespace sdr
