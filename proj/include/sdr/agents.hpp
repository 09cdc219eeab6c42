#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdr {

struct MemoryEntry {
  std::string time;
  std::string text;
};

struct AgentProfile {
  std::string name;        // full name, unique within the roster
  std::string background;  // persona text
  std::vector<MemoryEntry> memories;
  std::string location;
  std::string status;
};

// Ordered by name for deterministic iteration.
using Roster = std::map<std::string, AgentProfile>;

AgentProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const AgentProfile& p);

// Accepts either a JSON array of profile objects or JSONL (one per line).
Roster load_roster(const std::filesystem::path& path);

// The `count` most recent memory entries rendered one per line; empty
// string when there are none.
std::string render_memories(const AgentProfile& p, int count);

}  // namespace sdr
