// Central finite differences of an arbitrary complex vector function.
#pragma once

#include <functional>

#include "tensegrity/exprsys.hpp"

namespace oracles {

using VecFn = std::function<tensegrity::CVector(const tensegrity::CVector&)>;

/// Column k is (f(z + h e_k) - f(z - h e_k)) / 2h, with h scaled by max(1, |z_k|).
tensegrity::CMatrix fd_jacobian(const VecFn& f, const tensegrity::CVector& z, double step = 1e-7);

/// Max over entries of |a - b| / max(1, |b|).
double relative_gap(const tensegrity::CMatrix& a, const tensegrity::CMatrix& b);

}  // namespace oracles
