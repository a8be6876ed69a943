#include "dgen/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <string>

namespace dgen {

namespace {

std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mu;

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    case LogLevel::Off: return "off";
  }
  return "info";
}

void append_value(std::string& line, std::string_view value) {
  bool quote = value.empty() || value.find_first_of(" \t\"=") != std::string_view::npos;
  if (!quote) {
    line.append(value);
    return;
  }
  line.push_back('"');
  for (char c : value) {
    if (c == '"' || c == '\\') line.push_back('\\');
    if (c == '\n') {
      line.append("\\n");
      continue;
    }
    line.push_back(c);
  }
  line.push_back('"');
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }

void log_event(LogLevel level, std::string_view stage, std::string_view mcq_id,
               std::string_view event, std::string_view detail) {
  if (level < g_level.load() || g_level.load() == LogLevel::Off) return;
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char ts[64];
  std::snprintf(ts, sizeof ts, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));

  std::string line = "ts=";
  line += ts;
  line += " level=";
  line += level_name(level);
  line += " stage=";
  append_value(line, stage);
  line += " mcq=";
  append_value(line, mcq_id.empty() ? std::string_view("-") : mcq_id);
  line += " event=";
  append_value(line, event);
  if (!detail.empty()) {
    line += " detail=";
    append_value(line, detail);
  }
  line += '\n';
  std::lock_guard lock(g_mu);
  std::fputs(line.c_str(), stderr);
}

}  // namespace dgen
