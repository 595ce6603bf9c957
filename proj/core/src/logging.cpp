#include "cras/logging.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace cras {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* raw = std::getenv("CRAS_LOG_LEVEL");
  if (!raw) return spdlog::level::info;
  const std::string_view level(raw);
  if (level == "error") return spdlog::level::err;
  if (level == "warn") return spdlog::level::warn;
  if (level == "debug") return spdlog::level::debug;
  return spdlog::level::info;
}

}  // namespace

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("cras");
    l->set_level(level_from_env());
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    return l;
  }();
  return *logger;
}

}  // namespace cras
