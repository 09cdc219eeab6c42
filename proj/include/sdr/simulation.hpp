#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/agents.hpp"
#include "sdr/dialogue_store.hpp"
#include "sdr/regeneration.hpp"

namespace sdr {

enum class RunMode { origin, baseline_best_of_3, sdr };

RunMode run_mode_from_string(const std::string& s);
const char* run_mode_name(RunMode m);

struct PromptInfoFlags {
  bool background = true;
  bool memory = true;
  bool history = true;
  bool status = true;

  static PromptInfoFlags from_string(const std::string& s);  // all | -background | ...
  std::string to_string() const;
};

// One scheduled dialogue regeneration: the pair, when and where they talk,
// and their prior dialogues together.
struct DialogueTask {
  std::string dialogue_id;
  std::string time;
  std::int64_t time_epoch = 0;
  std::string location;
  std::array<Participant, 2> agents;
  std::vector<const Dialogue*> history;  // time-ordered, strictly earlier
};

// Fills the variant template with exactly the enabled components; disabled
// or empty components leave no headers behind.
std::string assemble_context(const DialogueTask& task, const std::string& speaker,
                             PromptVariant variant, const PromptInfoFlags& flags,
                             const Roster& roster, const Dialogue& current, int memory_limit);

PromptInputs build_prompt_inputs(const DialogueTask& task, const std::string& speaker,
                                 const PromptInfoFlags& flags, const Roster& roster,
                                 const Dialogue& current, int memory_limit);

struct CandidateResult {
  std::string text;
  bool ends = false;
  int warnings = 0;
};

// origin: one chat call. baseline_best_of_3: three candidates plus one
// judge call picking 1-3 (out-of-range falls back to the first). sdr: one
// chat call; the correction loop is applied by run_dialogue.
CandidateResult generate_candidate(const DialogueTask& task, const std::string& speaker,
                                   RunMode mode, const PromptInfoFlags& flags,
                                   const Roster& roster, const Dialogue& current,
                                   ModelGateway& gateway, const SdrConfig& cfg,
                                   VariantPolicy policy, std::mt19937_64& rng);

struct DialogueOutcome {
  Dialogue dialogue;
  nlohmann::json trace;
  bool failed = false;
  bool single_utterance = false;
  int regenerations = 0;
  int degradations = 0;
  int warnings = 0;
};

// Alternating turns starting with agents[0], capped at max_turns; a turn
// ends the dialogue by returning empty text or the ends flag. In sdr mode
// every candidate passes the correction loop before being committed.
DialogueOutcome run_dialogue(const DialogueTask& task, RunMode mode,
                             const PromptInfoFlags& flags, const Roster& roster,
                             const DialogueStore& store, ModelGateway& gateway,
                             const SdrConfig& cfg, VariantPolicy policy, std::uint64_t seed);

struct RunOptions {
  RunMode mode = RunMode::sdr;
  PromptInfoFlags flags;
  VariantPolicy variant = VariantPolicy::mixed;
  std::uint64_t seed = 0;
  int parallelism = 1;
};

struct RunSummary {
  int dialogues = 0;
  int failed = 0;
  int single_utterance = 0;
  int regenerations = 0;
  int degradations = 0;
  int warnings = 0;
  GatewayCounters calls;
};

// Regenerates every corpus dialogue as a standalone task (history drawn
// from the original corpus) and writes regenerated.jsonl, traces.jsonl, and
// manifest.json into out_dir. Deterministic for a fixed seed under mock
// backends regardless of parallelism. history_source=regenerated instead
// accumulates regenerated dialogues as the screening history, which forces
// sequential execution.
RunSummary run_corpus(const std::vector<Dialogue>& corpus, const Roster& roster,
                      GatewayFactory& factory, const SdrConfig& cfg, const RunOptions& options,
                      const std::filesystem::path& out_dir,
                      const std::filesystem::path& embedding_cache = {});

}  // namespace sdr
