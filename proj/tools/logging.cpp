#include "logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string_view>

namespace edc::tools {

void init_logging(bool quiet) {
    auto logger = spdlog::stderr_color_mt("edc");
    logger->set_pattern("%n: %l: %v");
    auto level = quiet ? spdlog::level::err : spdlog::level::info;
    if (const char* env = std::getenv("EDC_LOG")) {
        const std::string_view v = env;
        if (v == "error") level = spdlog::level::err;
        else if (v == "warn") level = spdlog::level::warn;
        else if (v == "info") level = spdlog::level::info;
        else if (v == "debug") level = spdlog::level::debug;
    }
    logger->set_level(level);
    spdlog::set_default_logger(logger);
}

} // namespace edc::tools
