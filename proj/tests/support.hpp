#pragma once

#include <random>
#include <sstream>
#include <string>

#include "mosaic/panel.hpp"

namespace mosaic::testing {

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(eng);
  }
  return m;
}

inline std::istringstream text(const std::string& s) { return std::istringstream(s); }

}  // namespace mosaic::testing
