#include "eyelab/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace eyelab {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("EYELAB_LOG");
        if (!env) return LogLevel::Info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        if (std::strcmp(env, "info") == 0) return LogLevel::Info;
        if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "quiet") == 0) return LogLevel::Quiet;
        std::fprintf(stderr, "[warn] EYELAB_LOG='%s' not recognized (debug|info|warn|error|quiet); using info\n", env);
        return LogLevel::Info;
    }();
    return level;
}

void log_message(LogLevel level, const std::string& message) {
    if (level < log_level() || level == LogLevel::Quiet) return;
    const char* name = "info";
    switch (level) {
        case LogLevel::Debug: name = "debug"; break;
        case LogLevel::Info: name = "info"; break;
        case LogLevel::Warn: name = "warn"; break;
        case LogLevel::Error: name = "error"; break;
        case LogLevel::Quiet: return;
    }
    std::fprintf(stderr, "[%s] %s\n", name, message.c_str());
}

}  // namespace eyelab
