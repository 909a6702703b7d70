#pragma once

#include <string>

namespace epiwane {

/// Sets the library log level from EPIWANE_LOG (trace, debug, info, warn,
/// error, off; default warn). Messages go to stderr.
void init_logging();
void set_log_level(const std::string& level);

void log_info(const std::string& msg);
void log_debug(const std::string& msg);
void log_warn(const std::string& msg);

} // namespace epiwane
