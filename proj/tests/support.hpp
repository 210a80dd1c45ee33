// Shared helpers for the test binaries.
#pragma once

#include <random>
#include <string>

#include "tensegrity/io.hpp"

namespace testing_support {

inline std::string data_path(const std::string& file) { return std::string(TENSEGRITY_DATA_DIR) + "/" + file; }

inline tensegrity::FrameworkFile load(const std::string& file) {
  return tensegrity::load_framework_file(data_path(file));
}

inline tensegrity::CVector random_complex(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  tensegrity::CVector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = {g(rng), g(rng)};
  return v;
}

inline tensegrity::RVector random_real(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  tensegrity::RVector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = u(rng);
  return v;
}

}  // namespace testing_support
