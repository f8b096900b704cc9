#include "fedmmx/logging.hpp"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace fedmmx {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("FEDMMX_LOG_LEVEL");
        if (env == nullptr) return LogLevel::info;
        const std::string_view v(env);
        if (v == "error") return LogLevel::error;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

namespace {
void emit(LogLevel at, const char* prefix, const std::string& message) {
    if (static_cast<int>(log_level()) >= static_cast<int>(at)) {
        std::cerr << "[fedmmx " << prefix << "] " << message << '\n';
    }
}
}  // namespace

void log_error(const std::string& message) { emit(LogLevel::error, "error", message); }
void log_info(const std::string& message) { emit(LogLevel::info, "info", message); }
void log_debug(const std::string& message) { emit(LogLevel::debug, "debug", message); }

}  // namespace fedmmx
