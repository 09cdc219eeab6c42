#include "sdr/log.hpp"

#include <iostream>
#include <mutex>

namespace sdr {

namespace {

std::mutex g_mutex;
LogSink g_sink;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "[debug]";
    case LogLevel::info: return "[info]";
    case LogLevel::warn: return "[warn]";
    case LogLevel::error: return "[error]";
  }
  return "[?]";
}

}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_sink = std::move(sink);
}

void log(LogLevel level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  if (level == LogLevel::debug) return;
  std::cerr << level_tag(level) << " " << message << "\n";
}

}  // namespace sdr
