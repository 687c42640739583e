#pragma once

#include <functional>
#include <string_view>

namespace it2mpc {

enum class LogLevel { debug, info, warning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink; returns the previous one. The default sink
// writes warnings to stderr and drops everything else.
LogSink set_log_sink(LogSink sink);
void log_message(LogLevel level, std::string_view message);

}  // namespace it2mpc
