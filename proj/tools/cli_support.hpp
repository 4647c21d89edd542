#pragma once

#include <signal.h>

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace cli {

// Logs go to stderr; stdout is kept for machine-readable output.
// MOSAIC_LOG_LEVEL picks error, info (default) or debug.
inline void setup_logging(const std::string& name)
{
    auto logger = spdlog::stderr_color_mt(name);
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("MOSAIC_LOG_LEVEL");
    const std::string level = env ? env : "info";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        if (level != "info") {
            spdlog::warn("MOSAIC_LOG_LEVEL={} not recognised, using info", level);
        }
        spdlog::set_level(spdlog::level::info);
    }
}

// Must run before any thread starts so that every thread inherits the mask.
inline sigset_t block_stop_signals()
{
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return set;
}

inline int wait_for_stop_signal(const sigset_t& set)
{
    int sig = 0;
    sigwait(&set, &sig);
    return sig;
}

}  // namespace cli
