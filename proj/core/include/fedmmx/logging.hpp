#pragma once

#include <string>

namespace fedmmx {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from FEDMMX_LOG_LEVEL (error|info|debug), default info.
LogLevel log_level();

void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace fedmmx
