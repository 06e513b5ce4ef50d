#pragma once

#include <string>

namespace eyelab {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Quiet = 4 };

// Resolved once from the EYELAB_LOG environment variable
// (debug|info|warn|error|quiet); defaults to info.
LogLevel log_level();

// Writes "[level] message" to stderr when `level` passes the threshold.
void log_message(LogLevel level, const std::string& message);

inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }

}  // namespace eyelab
