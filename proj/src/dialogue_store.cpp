#include "sdr/dialogue_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/text.hpp"

namespace sdr {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;  // inputs are unit norm
}

std::vector<double> DialogueStore::embed_cached(const std::string& text) {
  std::string h = content_hash(text);
  auto it = embed_cache_.find(h);
  if (it != embed_cache_.end()) return it->second;
  auto v = gateway_->embed(text);
  embed_cache_[h] = v;
  if (!cache_path_.empty()) {
    std::ofstream out(cache_path_, std::ios::app);
    if (out) out << nlohmann::json{{"hash", h}, {"vector", v}}.dump() << "\n";
  }
  return v;
}

std::string DialogueStore::insert_dialogue(Dialogue d) {
  validate_dialogue(d);
  // Writes are serialized across the whole insert; readers stay unblocked
  // during the embedding calls and only pause for the index update.
  std::lock_guard<std::mutex> write_guard(write_mutex_);
  try {
    for (auto& u : d.utterances)
      if (!u.embedding) u.embedding = embed_cached(u.text);
  } catch (const Error& e) {
    throw Error("embedding failed for dialogue " + d.dialogue_id + ": " + e.what());
  }
  std::unique_lock lock(mutex_);
  if (by_id_.count(d.dialogue_id))
    throw ValidationError("duplicate dialogue_id: " + d.dialogue_id);
  dialogues_.push_back(std::move(d));
  const Dialogue& stored = dialogues_.back();
  by_id_[stored.dialogue_id] = &stored;
  for (const auto& u : stored.utterances) index_.push_back(&u);
  return stored.dialogue_id;
}

std::vector<SimilarityHit> DialogueStore::query_similar(
    const std::string& text, int k, const std::set<std::string>& exclude,
    const std::string& speaker, const std::string& dialogue_id,
    std::optional<std::int64_t> before) const {
  if (k <= 0) return {};
  std::vector<double> q = gateway_->embed(text);

  std::shared_lock lock(mutex_);
  struct Scored {
    const Utterance* u;
    double score;
    size_t age;  // index-insertion order; smaller = older
  };
  std::vector<Scored> scored;
  scored.reserve(index_.size());
  for (size_t i = 0; i < index_.size(); ++i) {
    const Utterance* u = index_[i];
    if (exclude.count(u->utterance_id)) continue;
    if (before) {
      const Dialogue* parent = by_id_.at(u->dialogue_id);
      if (parent->time_epoch >= *before) continue;
    }
    scored.push_back({u, cosine(q, *u->embedding), i});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.age < b.age;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(k);

  std::vector<SimilarityHit> hits;
  hits.reserve(scored.size());
  for (const auto& s : scored) {
    SimilarityHit h;
    h.utterance = s.u;
    h.score = s.score;
    h.same_speaker = !speaker.empty() && s.u->speaker == speaker;
    h.same_dialogue = !dialogue_id.empty() && s.u->dialogue_id == dialogue_id;
    hits.push_back(h);
  }
  return hits;
}

std::vector<const Dialogue*> DialogueStore::dialogues_involving(
    const std::string& agent, std::optional<std::int64_t> before) const {
  std::shared_lock lock(mutex_);
  std::vector<const Dialogue*> out;
  for (const auto& d : dialogues_) {
    if (!d.has_participant(agent)) continue;
    if (before && d.time_epoch >= *before) continue;
    out.push_back(&d);
  }
  std::sort(out.begin(), out.end(), [](const Dialogue* a, const Dialogue* b) {
    if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
    return a->dialogue_id < b->dialogue_id;
  });
  return out;
}

const Dialogue* DialogueStore::find(const std::string& dialogue_id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(dialogue_id);
  return it == by_id_.end() ? nullptr : it->second;
}

size_t DialogueStore::dialogue_count() const {
  std::shared_lock lock(mutex_);
  return dialogues_.size();
}

size_t DialogueStore::utterance_count() const {
  std::shared_lock lock(mutex_);
  return index_.size();
}

std::vector<const Dialogue*> DialogueStore::all_dialogues() const {
  std::shared_lock lock(mutex_);
  std::vector<const Dialogue*> out;
  out.reserve(dialogues_.size());
  for (const auto& d : dialogues_) out.push_back(&d);
  return out;
}

void DialogueStore::attach_embedding_cache(const std::filesystem::path& path) {
  cache_path_ = path;
  if (cache_path_.empty() || !std::filesystem::exists(cache_path_)) return;
  std::ifstream in(cache_path_);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      embed_cache_[j.at("hash").get<std::string>()] = j.at("vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      log_warn("embedding cache " + cache_path_.string() + ":" + std::to_string(line_no) +
               ": " + e.what() + " (entry ignored)");
    }
  }
}

void DialogueStore::load_corpus(const std::filesystem::path& corpus_path,
                                const std::filesystem::path& embedding_cache_path) {
  if (!embedding_cache_path.empty()) attach_embedding_cache(embedding_cache_path);
  for (auto& d : load_corpus_jsonl(corpus_path)) insert_dialogue(std::move(d));
}

}  // namespace sdr
