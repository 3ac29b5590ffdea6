#pragma once

#include <string>

#include "riskcast/net.hpp"

namespace riskcast::plot {

// Renders a per-frame risk curve with the decision threshold and, for
// positive samples, the accident-frame marker. Format chosen by extension
// (.svg or .png); output bytes are deterministic.
void write_curve(const std::string& path, const std::string& title,
                 const Eigen::VectorXd& scores, double threshold, int tau);

}  // namespace riskcast::plot
