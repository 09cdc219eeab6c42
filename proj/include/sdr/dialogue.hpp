#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdr {

struct Utterance {
  std::string utterance_id;
  std::string dialogue_id;
  std::string speaker;
  std::string text;
  int turn_index = 0;
  std::optional<std::vector<double>> embedding;  // unit norm when present
};

struct Participant {
  std::string name;
  std::string status;
};

struct Dialogue {
  std::string dialogue_id;
  std::string time;  // ISO-8601
  std::int64_t time_epoch = 0;
  std::string location;
  std::array<Participant, 2> participants;
  std::vector<Utterance> utterances;

  bool has_participant(const std::string& name) const {
    return participants[0].name == name || participants[1].name == name;
  }
  const std::string& other_participant(const std::string& name) const {
    return participants[0].name == name ? participants[1].name : participants[0].name;
  }
};

// Throws ValidationError unless the dialogue satisfies: two distinct
// participants, every speaker among them, at least `min_utterances`
// utterances, consecutive turn indices from 0, non-empty texts, and
// unit-norm embeddings where present.
void validate_dialogue(const Dialogue& d, int min_utterances = 2);

nlohmann::json dialogue_to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);

// One dialogue per line. Parse errors carry the 1-based line number.
// Lines with fewer than `min_utterances` utterances are rejected when
// `skip_short` is false and skipped (with a warning) when true.
std::vector<Dialogue> load_corpus_jsonl(const std::filesystem::path& path,
                                        bool skip_short = false);
void write_corpus_jsonl(const std::filesystem::path& path,
                        const std::vector<Dialogue>& dialogues);

// Dialogue as "Speaker: text" lines, for prompts and summaries.
std::string render_dialogue_text(const Dialogue& d);

}  // namespace sdr
