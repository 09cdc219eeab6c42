#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/agents.hpp"
#include "sdr/dialogue_store.hpp"
#include "sdr/model_gateway.hpp"
#include "sdr/screening.hpp"

namespace sdr {

struct DiagnosisComment {
  Pipeline pipeline = Pipeline::repetition;
  std::optional<int> score;    // 1-10; repetition and inconsistency only
  std::optional<bool> agreed;  // hallucination only
  std::string reason;

  nlohmann::json to_json() const;
};

// Highest score wins; ties go to the longer reason, then to the earlier
// trial. For agreement comments any agreed=false trial outranks agreed=true.
DiagnosisComment select_trial(const std::vector<DiagnosisComment>& comments);

// LLM adjudication of flagged candidates: n_diag scoring trials per
// triggered pipeline, returning the selected comment or nullopt when every
// trial fails to parse (the candidate is then treated as clean).
class Diagnoser {
 public:
  Diagnoser(ModelGateway& gateway, const SdrConfig& cfg);

  std::optional<DiagnosisComment> diagnose_with_evidence(
      Pipeline pipeline, const CandidateContext& c, const std::string& listener,
      const std::vector<const Dialogue*>& evidence, const std::string& speaker_background,
      int* warnings = nullptr);

  std::optional<DiagnosisComment> diagnose_agreement(
      const CandidateContext& c, const AgentProfile& mentioned,
      const Dialogue* last_dialogue_with_speaker, int* warnings = nullptr);

 private:
  ModelGateway* gateway_;
  SdrConfig cfg_;
};

}  // namespace sdr
