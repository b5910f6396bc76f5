// Minimal stderr logger gated by the VMFD_LOG_LEVEL environment variable
// (error | info | debug; default info).

#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace vmfd {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("VMFD_LOG_LEVEL");
        if (!env) return LogLevel::kInfo;
        const std::string v(env);
        if (v == "error") return LogLevel::kError;
        if (v == "debug") return LogLevel::kDebug;
        return LogLevel::kInfo;
    }();
    return level;
}

inline void log_error(const std::string& msg) { std::cerr << "[error] " << msg << "\n"; }

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::kDebug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace vmfd
