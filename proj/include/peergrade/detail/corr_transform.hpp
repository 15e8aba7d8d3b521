#pragma once

#include <cmath>

namespace peergrade::detail {

template <typename T>
struct CorrJacobian {
  T to_cholesky;     // log |d L / d u|
  T to_correlation;  // log |d Omega / d u| = to_cholesky + log |d Omega / d L|
};

// Maps d(d-1)/2 unconstrained values to the Cholesky factor of a d x d correlation matrix
// via tanh'd canonical partial correlations, filled row by row. `chol` is row-major d x d.
template <typename T>
CorrJacobian<T> cholesky_corr_constrain(const T* u, int d, T* chol) {
  using std::log;
  using std::log1p;
  using std::sqrt;
  using std::tanh;
  T lj_chol(0.0);
  T lj_omega(0.0);
  for (int i = 0; i < d * d; ++i) chol[i] = T(0.0);
  chol[0] = T(1.0);
  int k = 0;
  for (int i = 1; i < d; ++i) {
    T z = tanh(u[k++]);
    lj_chol += log1p(-(z * z));
    chol[i * d] = z;
    T sum_sq = z * z;
    for (int j = 1; j < i; ++j) {
      T zj = tanh(u[k++]);
      lj_chol += log1p(-(zj * zj));
      T rest = T(1.0) - sum_sq;
      lj_chol += T(0.5) * log(rest);
      T entry = zj * sqrt(rest);
      chol[i * d + j] = entry;
      sum_sq += entry * entry;
    }
    T diag = sqrt(T(1.0) - sum_sq);
    chol[i * d + i] = diag;
    // Omega = L L^T: |d Omega_free / d L_free| = prod_i L_ii^(d - 1 - i)
    lj_omega += T(static_cast<double>(d - 1 - i)) * log(diag);
  }
  return {lj_chol, lj_chol + lj_omega};
}

// Inverse of cholesky_corr_constrain for a valid factor (row-major d x d).
inline void cholesky_corr_free(const double* chol, int d, double* u) {
  int k = 0;
  for (int i = 1; i < d; ++i) {
    double sum_sq = 0.0;
    for (int j = 0; j < i; ++j) {
      double entry = chol[i * d + j];
      double z = j == 0 ? entry : entry / std::sqrt(1.0 - sum_sq);
      u[k++] = std::atanh(z);
      sum_sq += entry * entry;
    }
  }
}

}  // namespace peergrade::detail
