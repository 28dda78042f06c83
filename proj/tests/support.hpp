#pragma once

#include <algorithm>
#include <random>

#include <Eigen/Dense>

#include "hpm/hankel.hpp"

namespace hpm::test {

/// Deterministic source of Gaussian vectors and matrices for property tests.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double normal() { return normal_(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (auto& x : v) x = normal();
    return v;
  }
  RowVector row(Eigen::Index n) { return vector(n).transpose(); }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) m.col(j) = vector(rows);
    return m;
  }
  Matrix low_rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index rank) {
    return matrix(rows, rank) * matrix(rank, cols);
  }
  ChannelStack stack(int samples, int channels) {
    return ChannelStack(vector(static_cast<Eigen::Index>(samples) * channels), samples, channels);
  }

  /// Sum of `order` real exponential/oscillatory modes: rank(H_{order+1}) <= order.
  Vector recurrent(int samples, int order) {
    Vector y = Vector::Zero(samples);
    for (int k = 0; k < order; ++k) {
      const double z = uniform(-1.0, 1.0);
      const double a = normal();
      for (int t = 0; t < samples; ++t) y(t) += a * std::pow(z, t);
    }
    return y;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

/// Hankel matrix straight from the 1-based definition H(i, j) = y(i + j - 1).
inline Matrix hankel_from_definition(const Vector& y, int window) {
  const int rows = window + 1;
  const int cols = static_cast<int>(y.size()) - window;
  Matrix H(rows, cols);
  for (int i = 1; i <= rows; ++i) {
    for (int j = 1; j <= cols; ++j) H(i - 1, j - 1) = y(i + j - 2);
  }
  return H;
}

/// Singular values through the divide-and-conquer SVD, independent of the library's Jacobi path.
inline Vector reference_singular_values(const Matrix& Y) {
  Eigen::BDCSVD<Matrix> svd(Y);
  return svd.singularValues();
}

inline double reference_rank_distance(const Matrix& Y, int k) {
  const Vector s = reference_singular_values(Y);
  return k >= s.size() ? 0.0 : s.tail(s.size() - k).norm();
}

/// Best rank-k approximation from the divide-and-conquer SVD.
inline Matrix reference_rank_project(const Matrix& Y, int k) {
  Eigen::BDCSVD<Matrix> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index keep = std::min<Eigen::Index>(k, svd.singularValues().size());
  return svd.matrixU().leftCols(keep) * svd.singularValues().head(keep).asDiagonal() *
         svd.matrixV().leftCols(keep).transpose();
}

/// Anti-diagonal sums straight from the 1-based definition of the Hankel adjoint.
inline Vector hankel_adjoint_from_definition(const Matrix& W) {
  Vector y = Vector::Zero(W.rows() + W.cols() - 1);
  for (int i = 1; i <= W.rows(); ++i) {
    for (int j = 1; j <= W.cols(); ++j) y(i + j - 2) += W(i - 1, j - 1);
  }
  return y;
}

}  // namespace hpm::test
