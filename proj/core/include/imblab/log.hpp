#pragma once

#include <functional>
#include <string>

namespace imblab {

enum class LogLevel { info, warn };

using LogHandler = std::function<void(LogLevel, const std::string&)>;

// Default handler writes to stderr. Tests may install a capturing handler;
// pass nullptr to restore the default. Never used for artifact output, so
// emitted files stay deterministic.
void set_log_handler(LogHandler handler);

void log_info(const std::string& msg);
void log_warn(const std::string& msg);

}  // namespace imblab
