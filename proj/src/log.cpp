#include "epiwane/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "epiwane/error.hpp"

namespace epiwane {

namespace {

std::shared_ptr<spdlog::logger> logger()
{
    static auto l = [] {
        auto lg = spdlog::stderr_color_mt("epiwane");
        lg->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        lg->set_level(spdlog::level::warn);
        return lg;
    }();
    return l;
}

} // namespace

void set_log_level(const std::string& level)
{
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off")
        throw InvalidParameter("EPIWANE_LOG", "unknown level '" + level + "'");
    logger()->set_level(lvl);
}

void init_logging()
{
    if (const char* env = std::getenv("EPIWANE_LOG"); env && *env)
        set_log_level(env);
    else
        logger()->set_level(spdlog::level::warn);
}

void log_info(const std::string& msg) { logger()->info(msg); }
void log_debug(const std::string& msg) { logger()->debug(msg); }
void log_warn(const std::string& msg) { logger()->warn(msg); }

} // namespace epiwane
