#pragma once

#include <string>

namespace llab {

// Renders a known report CSV as a standalone SVG. kind is "line" (single
// series) or "multi-line". Recognized schemas: alpha,beta,loss landscape
// slices; t,loss curves; epoch,... training histories;
// bit_width,variant,stressor_param,... robustness tables (one series per
// variant/level pair). Byte-deterministic for a fixed input.
std::string emit_plot(const std::string& csv, const std::string& kind);

}  // namespace llab
