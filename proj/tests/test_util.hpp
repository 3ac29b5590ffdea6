#pragma once

#include <Eigen/Core>
#include <functional>
#include <random>
#include <vector>

namespace testutil {

inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit(rng);
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * (2.0 * unit(rng) - 1.0);
  return m;
}

// Central finite difference of a scalar function with respect to one entry.
inline double central_diff(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// Relative error with a floor guarding the both-near-zero case.
inline double rel_err(double a, double b, double floor = 1e-6) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace testutil
