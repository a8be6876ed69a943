#pragma once

#include <string_view>

namespace dgen {

enum class LogLevel { Debug, Info, Warn, Error, Off };

void set_log_level(LogLevel level);

// One structured line on stderr: ts=... level=... stage=... mcq=... event=... detail=...
void log_event(LogLevel level, std::string_view stage, std::string_view mcq_id,
               std::string_view event, std::string_view detail = {});

}  // namespace dgen
