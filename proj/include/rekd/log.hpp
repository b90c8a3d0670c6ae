#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace rekd {

/// Process-wide logger writing to standard error.
spdlog::logger& log();

} // namespace rekd
