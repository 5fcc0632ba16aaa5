#pragma once

// Minimal chart rendering for training curves and evaluation summaries.

#include "sst/util/image.hpp"

#include <string>
#include <vector>

namespace sst::cli {

// Polyline of (x, y) samples with axes on a light background.
util::Image render_loss_curve(const std::vector<double>& xs,
                              const std::vector<double>& ys, int width = 640,
                              int height = 400);

// One bar per (label, rate in [0, 1]) pair.
util::Image render_success_bars(const std::vector<std::pair<std::string, double>>& bars,
                                int width = 640, int height = 400);

}  // namespace sst::cli
