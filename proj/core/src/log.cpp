#include "it2mpc/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace it2mpc {
namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s = [](LogLevel level, std::string_view msg) {
        if (level == LogLevel::warning) std::cerr << "it2mpc: warning: " << msg << '\n';
    };
    return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
    std::lock_guard lock(sink_mutex());
    return std::exchange(sink(), std::move(s));
}

void log_message(LogLevel level, std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) sink()(level, message);
}

}  // namespace it2mpc
