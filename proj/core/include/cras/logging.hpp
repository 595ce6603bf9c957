#pragma once

#include <spdlog/spdlog.h>

namespace cras {

// Shared "cras" logger on stderr; level from CRAS_LOG_LEVEL (error|warn|info|debug),
// default info.
spdlog::logger& log();

}  // namespace cras
