#include "sdr/agents.hpp"

#include <fstream>

#include "sdr/error.hpp"
#include "sdr/text.hpp"

namespace sdr {

AgentProfile profile_from_json(const nlohmann::json& j) {
  AgentProfile p;
  p.name = j.at("name").get<std::string>();
  p.background = j.at("background").get<std::string>();
  if (p.name.empty()) throw ValidationError("agent profile has empty name");
  if (p.background.empty())
    throw ValidationError("agent '" + p.name + "' has empty background");
  for (const auto& mj : j.value("memories", nlohmann::json::array())) {
    MemoryEntry m;
    m.time = mj.value("time", "");
    m.text = mj.at("text").get<std::string>();
    p.memories.push_back(std::move(m));
  }
  p.location = j.value("location", "");
  p.status = j.value("status", "");
  return p;
}

nlohmann::json profile_to_json(const AgentProfile& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["background"] = p.background;
  j["memories"] = nlohmann::json::array();
  for (const auto& m : p.memories)
    j["memories"].push_back({{"time", m.time}, {"text", m.text}});
  j["location"] = p.location;
  j["status"] = p.status;
  return j;
}

Roster load_roster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open agents file: " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Roster roster;
  auto add = [&](const nlohmann::json& j, int line_no) {
    AgentProfile p;
    try {
      p = profile_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (roster.count(p.name))
      throw ValidationError(path.string() + ": duplicate agent name '" + p.name + "'");
    roster.emplace(p.name, std::move(p));
  };

  std::string trimmed = trim(body);
  if (!trimmed.empty() && trimmed.front() == '[') {
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(trimmed);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    for (const auto& j : arr) add(j, 1);
  } else {
    std::istringstream stream(body);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      add(j, line_no);
    }
  }
  return roster;
}

std::string render_memories(const AgentProfile& p, int count) {
  if (p.memories.empty() || count <= 0) return "";
  size_t n = std::min<size_t>(count, p.memories.size());
  std::string out;
  for (size_t i = p.memories.size() - n; i < p.memories.size(); ++i) {
    const auto& m = p.memories[i];
    if (!m.time.empty()) out += "[" + m.time + "] ";
    out += m.text;
    out += "\n";
  }
  return out;
}

}  // namespace sdr
