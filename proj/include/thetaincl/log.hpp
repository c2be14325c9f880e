#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace thetaincl {

// Process-wide log level, read once from THETA_INCL_LOG
// ("quiet" | "info" | "debug", default "info").  Warnings are suppressed only
// in quiet mode.  Header-only so the CLI and tests share one switch.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("THETA_INCL_LOG");
        if (!env) return LogLevel::info;
        const std::string v(env);
        if (v == "quiet") return LogLevel::quiet;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

inline void log_warn(const std::string& msg) {
    if (log_level() != LogLevel::quiet) std::cerr << "[warn] " << msg << '\n';
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << msg << '\n';
}

} // namespace thetaincl
