#pragma once

#include <string>
#include <vector>

#include "sdr/agents.hpp"
#include "sdr/dialogue.hpp"

namespace sdr {

enum class PromptVariant { persona_narrative, structured_task };

// Inputs shared by generation and revision prompts. Section toggles mirror
// the prompt-info ablation flags; disabled or empty sections leave no
// headers behind.
struct PromptInputs {
  std::string speaker;
  std::string listener;
  std::string background;        // empty = omitted
  std::string memories;          // pre-rendered block; empty = omitted
  std::string time;
  std::string location;
  std::string speaker_status;    // empty = omitted
  std::string listener_status;
  std::vector<const Dialogue*> pair_history;  // empty = omitted
  std::string current_dialogue;  // rendered "Name: text" lines; may be empty
};

namespace prompts {

std::string dialogue_block(const Dialogue& d);

// Utterance-generation prompt (no revision block).
std::string generation(const PromptInputs& in, PromptVariant variant);

// Revision prompt: generation context plus the rejected text, the retained
// reasons, and the integrated suggestion.
std::string revision(const PromptInputs& in, PromptVariant variant,
                     const std::string& rejected_text, const std::string& reasons,
                     const std::string& suggestion);

// Screening / diagnosis prompts.
std::string triplet_extraction(const std::string& label, const std::string& content);
std::string evidence_selection(const std::string& suspicious_block, int k);
std::string hallucination_score(const std::string& utterance, const std::string& speaker,
                                const std::string& listener, const std::string& mentioned);
std::string repetition_diagnosis(const std::string& speaker_background,
                                 const std::string& speaker,
                                 const std::vector<const Dialogue*>& evidence,
                                 const std::string& current_dialogue,
                                 const std::string& candidate);
std::string consistency_diagnosis(const std::string& speaker_background,
                                  const std::string& speaker, const std::string& listener,
                                  const std::vector<const Dialogue*>& evidence,
                                  const std::string& current_time,
                                  const std::string& current_dialogue,
                                  const std::string& candidate);
std::string agreement_diagnosis(const AgentProfile& mentioned, const std::string& memories,
                                const Dialogue* last_dialogue_with_speaker,
                                const std::string& speaker, const std::string& candidate);

// Comment integration and corpus evaluation.
std::string comment_integration(const std::string& candidate,
                                const std::string& current_dialogue,
                                const std::vector<std::string>& reasons);
std::string best_of_judge(const std::string& current_dialogue, const std::string& speaker,
                          const std::vector<std::string>& candidates);
std::string corpus_judge(const Dialogue& d, const std::vector<const Dialogue*>& evidence);

}  // namespace prompts

}  // namespace sdr
