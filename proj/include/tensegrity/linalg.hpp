// Small dense kernels used on the hot paths.
#pragma once

#include "tensegrity/exprsys.hpp"

namespace tensegrity {

/// Solves a x = b in place by LU with partial pivoting; a is overwritten by
/// its factors and b by the solution. Returns false on an exactly zero pivot.
/// Faster than the blocked factorization for the n <= 30 systems here.
inline bool lu_solve_inplace(CMatrix& a, CVector& b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = 0;
    a.col(k).tail(n - k).cwiseAbs2().maxCoeff(&piv);
    piv += k;
    if (a(piv, k) == Complex(0.0)) return false;
    if (piv != k) {
      a.row(k).swap(a.row(piv));
      std::swap(b[k], b[piv]);
    }
    const Eigen::Index m = n - k - 1;
    a.col(k).tail(m) /= a(k, k);
    a.bottomRightCorner(m, m).noalias() -= a.col(k).tail(m) * a.row(k).tail(m);
    b.tail(m) -= a.col(k).tail(m) * b[k];
  }
  a.triangularView<Eigen::Upper>().solveInPlace(b);
  return true;
}

}  // namespace tensegrity
