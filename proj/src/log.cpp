#include "fvp/log.hpp"

#include <cstdlib>
#include <string>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fvp/error.hpp"

namespace fvp {

void init_logging() {
  // Diagnostics go to stderr so CSV on stdout stays clean.
  static const bool sink_ready = [] {
    spdlog::set_default_logger(spdlog::stderr_color_mt("fvp"));
    spdlog::set_pattern("[%l] %v");
    return true;
  }();
  (void)sink_ready;

  const char* env = std::getenv("FVP_LOG");
  const std::string v = env ? env : "";
  if (v.empty())
    spdlog::set_level(spdlog::level::warn);
  else if (v == "quiet")
    spdlog::set_level(spdlog::level::off);
  else if (v == "info")
    spdlog::set_level(spdlog::level::info);
  else if (v == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    throw UsageError(fmt::format("FVP_LOG must be quiet, info or debug, not '{}'", v));
}

}  // namespace fvp
