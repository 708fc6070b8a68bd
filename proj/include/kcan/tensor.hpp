#pragma once
// Dense row-major matrix plus the handful of BLAS-1/2 kernels the model needs.
// Dimensions here are tiny (8..32), so plain loops beat any library dispatch.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace kcan {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

using Vec = std::vector<double>;

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return dot(a.data(), b.data(), static_cast<int>(a.size()));
}

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline double norm2(const double* x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * x[i];
  return s;  // squared
}

// out = W x      (W: out_n x in_n, row-major)
inline void matvec(const Matrix& W, const double* x, double* out) {
  for (int r = 0; r < W.rows; ++r) out[r] = dot(W.row(r), x, W.cols);
}

// out += W^T g   (scatter of a matvec transpose)
inline void matvec_t_acc(const Matrix& W, const double* g, double* out) {
  for (int r = 0; r < W.rows; ++r) axpy(g[r], W.row(r), out, W.cols);
}

// dW += g x^T    (rank-1 accumulate)
inline void outer_acc(Matrix& dW, const double* g, const double* x) {
  for (int r = 0; r < dW.rows; ++r) axpy(g[r], x, dW.row(r), dW.cols);
}

constexpr double kLeakySlope = 0.2;

inline double leaky_relu(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_relu_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

// Overflow-safe logistic function and ln(1 + e^x).
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace kcan
