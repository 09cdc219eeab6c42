#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sdr/dialogue.hpp"
#include "sdr/model_gateway.hpp"

namespace sdr {

struct SimilarityHit {
  const Utterance* utterance = nullptr;
  double score = 0.0;  // cosine in [-1, 1]
  bool same_speaker = false;
  bool same_dialogue = false;
};

// Append-only store of complete dialogues with an exact cosine-similarity
// index over utterance embeddings. Reads are safe under concurrent writes;
// dialogues appear atomically.
class DialogueStore {
 public:
  explicit DialogueStore(ModelGateway& gateway) : gateway_(&gateway) {}

  // Embeds and indexes every utterance. Throws on duplicate id or invariant
  // violation; embedding failures propagate with the dialogue id attached.
  std::string insert_dialogue(Dialogue d);

  // Top-k by cosine against the embedded query text, descending; ties break
  // toward the older utterance. `speaker` / `dialogue_id`, when given,
  // attribute hits for the dynamic-threshold decision. `before` restricts
  // hits to dialogues strictly earlier than the given epoch time.
  std::vector<SimilarityHit> query_similar(
      const std::string& text, int k, const std::set<std::string>& exclude = {},
      const std::string& speaker = "", const std::string& dialogue_id = "",
      std::optional<std::int64_t> before = std::nullopt) const;

  // All dialogues with `agent` as participant, ascending by time (id breaks
  // ties); strictly earlier than `before` when given.
  std::vector<const Dialogue*> dialogues_involving(
      const std::string& agent, std::optional<std::int64_t> before = std::nullopt) const;

  const Dialogue* find(const std::string& dialogue_id) const;

  size_t dialogue_count() const;
  size_t utterance_count() const;
  std::vector<const Dialogue*> all_dialogues() const;

  // Loads a corpus file into the store, consulting/extending the embedding
  // cache sidecar (JSONL of {"hash", "vector"}) when a path is given.
  void load_corpus(const std::filesystem::path& corpus_path,
                   const std::filesystem::path& embedding_cache_path = {});

  // Reads existing cache entries and appends newly embedded texts to the
  // file from now on. Call before inserting dialogues.
  void attach_embedding_cache(const std::filesystem::path& path);

 private:
  std::vector<double> embed_cached(const std::string& text);

  ModelGateway* gateway_;
  std::deque<Dialogue> dialogues_;  // stable addresses; append only
  std::map<std::string, const Dialogue*> by_id_;
  std::vector<const Utterance*> index_;  // insertion order = age order
  std::map<std::string, std::vector<double>> embed_cache_;
  std::filesystem::path cache_path_;
  std::mutex write_mutex_;  // serializes inserts, including embedding work
  mutable std::shared_mutex mutex_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace sdr
