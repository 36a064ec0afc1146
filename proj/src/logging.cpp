#include "fspm_bridge/logging.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace fspm_bridge {

void init_logging() {
  auto logger = spdlog::stderr_logger_mt("fspm_bridge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("FSPM_BRIDGE_LOG")) {
    auto parsed = spdlog::level::from_str(env);
    // from_str maps unknown names to off; keep the default for typos.
    if (parsed != spdlog::level::off || std::string_view(env) == "off") level = parsed;
  }
  spdlog::set_level(level);
}

}  // namespace fspm_bridge
