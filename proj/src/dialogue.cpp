#include "sdr/dialogue.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/text.hpp"

namespace sdr {

void validate_dialogue(const Dialogue& d, int min_utterances) {
  if (d.dialogue_id.empty()) throw ValidationError("dialogue has empty id");
  if (d.participants[0].name.empty() || d.participants[1].name.empty())
    throw ValidationError("dialogue " + d.dialogue_id + ": empty participant name");
  if (d.participants[0].name == d.participants[1].name)
    throw ValidationError("dialogue " + d.dialogue_id + ": participants must be distinct");
  if (static_cast<int>(d.utterances.size()) < min_utterances)
    throw ValidationError("dialogue " + d.dialogue_id + ": has " +
                          std::to_string(d.utterances.size()) + " utterance(s), need at least " +
                          std::to_string(min_utterances));
  int expected_turn = 0;
  for (const auto& u : d.utterances) {
    if (u.text.empty())
      throw ValidationError("dialogue " + d.dialogue_id + ": empty utterance text at turn " +
                            std::to_string(expected_turn));
    if (!d.has_participant(u.speaker))
      throw ValidationError("dialogue " + d.dialogue_id + ": speaker '" + u.speaker +
                            "' is not a participant");
    if (u.turn_index != expected_turn)
      throw ValidationError("dialogue " + d.dialogue_id + ": turn indices not consecutive from 0");
    if (u.embedding) {
      double norm2 = 0.0;
      for (double v : *u.embedding) norm2 += v * v;
      if (std::fabs(std::sqrt(norm2) - 1.0) > 1e-6)
        throw ValidationError("dialogue " + d.dialogue_id + ": embedding at turn " +
                              std::to_string(expected_turn) + " is not unit norm");
    }
    ++expected_turn;
  }
}

nlohmann::json dialogue_to_json(const Dialogue& d) {
  nlohmann::json j;
  j["dialogue_id"] = d.dialogue_id;
  j["time"] = d.time;
  j["location"] = d.location;
  j["participants"] = nlohmann::json::array();
  for (const auto& p : d.participants)
    j["participants"].push_back({{"name", p.name}, {"status", p.status}});
  j["utterances"] = nlohmann::json::array();
  for (const auto& u : d.utterances)
    j["utterances"].push_back({{"speaker", u.speaker}, {"text", u.text}});
  return j;
}

Dialogue dialogue_from_json(const nlohmann::json& j) {
  Dialogue d;
  d.dialogue_id = j.at("dialogue_id").get<std::string>();
  d.time = j.at("time").get<std::string>();
  d.time_epoch = parse_timestamp(d.time);
  d.location = j.value("location", "");
  const auto& parts = j.at("participants");
  if (!parts.is_array() || parts.size() != 2)
    throw ValidationError("dialogue " + d.dialogue_id + ": expected exactly 2 participants");
  for (size_t i = 0; i < 2; ++i) {
    d.participants[i].name = parts[i].at("name").get<std::string>();
    d.participants[i].status = parts[i].value("status", "");
  }
  int turn = 0;
  for (const auto& uj : j.at("utterances")) {
    Utterance u;
    u.dialogue_id = d.dialogue_id;
    u.speaker = uj.at("speaker").get<std::string>();
    u.text = uj.at("text").get<std::string>();
    u.turn_index = turn;
    u.utterance_id = d.dialogue_id + ":" + std::to_string(turn);
    d.utterances.push_back(std::move(u));
    ++turn;
  }
  return d;
}

std::vector<Dialogue> load_corpus_jsonl(const std::filesystem::path& path, bool skip_short) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path.string());
  std::vector<Dialogue> out;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  int skipped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Dialogue d;
    try {
      d = dialogue_from_json(nlohmann::json::parse(line));
      if (skip_short && d.utterances.size() < 2) {
        ++skipped;
        continue;
      }
      validate_dialogue(d);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_ids.insert(d.dialogue_id).second)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate dialogue_id '" + d.dialogue_id + "'");
    out.push_back(std::move(d));
  }
  if (skipped > 0)
    log_warn("skipped " + std::to_string(skipped) + " dialogue(s) with fewer than 2 utterances");
  return out;
}

void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << "\n";
}

std::string render_dialogue_text(const Dialogue& d) {
  std::string out;
  for (const auto& u : d.utterances) {
    out += u.speaker;
    out += ": ";
    out += u.text;
    out += "\n";
  }
  return out;
}

}  // namespace sdr
