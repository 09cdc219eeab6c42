#pragma once

#include <functional>
#include <string>

namespace sdr {

enum class LogLevel { debug, info, warn, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Default sink writes "[warn] ..." style lines to stderr.
void set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }

}  // namespace sdr
