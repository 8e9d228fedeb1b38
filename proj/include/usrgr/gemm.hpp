#pragma once

#include <Eigen/Core>

namespace usrgr {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C (+)= A(m,k) * B(k,n); all row-major contiguous.
template <typename T>
inline void gemm_nn(bool accumulate, int m, int k, int n, const T* A, const T* B, T* C) {
  Eigen::Map<const RowMat<T>> a(A, m, k);
  Eigen::Map<const RowMat<T>> b(B, k, n);
  Eigen::Map<RowMat<T>> c(C, m, n);
  if (accumulate)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

/// C (+)= A(k,m)^T * B(k,n).
template <typename T>
inline void gemm_tn(bool accumulate, int m, int k, int n, const T* A, const T* B, T* C) {
  Eigen::Map<const RowMat<T>> a(A, k, m);
  Eigen::Map<const RowMat<T>> b(B, k, n);
  Eigen::Map<RowMat<T>> c(C, m, n);
  if (accumulate)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

/// C (+)= A(m,k) * B(n,k)^T.
template <typename T>
inline void gemm_nt(bool accumulate, int m, int k, int n, const T* A, const T* B, T* C) {
  Eigen::Map<const RowMat<T>> a(A, m, k);
  Eigen::Map<const RowMat<T>> b(B, n, k);
  Eigen::Map<RowMat<T>> c(C, m, n);
  if (accumulate)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

}  // namespace usrgr
