#include "oracles/finite_difference.hpp"

#include <algorithm>

namespace oracles {

tensegrity::CMatrix fd_jacobian(const VecFn& f, const tensegrity::CVector& z, double step) {
  const auto f0 = f(z);
  tensegrity::CMatrix j(f0.size(), z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double h = step * std::max(1.0, std::abs(z[k]));
    tensegrity::CVector zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    j.col(k) = (f(zp) - f(zm)) / (2.0 * h);
  }
  return j;
}

double relative_gap(const tensegrity::CMatrix& a, const tensegrity::CMatrix& b) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / std::max(1.0, std::abs(b(r, c))));
  return worst;
}

}  // namespace oracles
