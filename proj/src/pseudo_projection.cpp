#include "hpm/pseudo_projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "hpm/errors.hpp"

namespace hpm {

StructureSetting StructureSetting::single_channel(int samples, int rank, int channel) {
  hankel_shape(samples, rank);
  if (rank < 1 || samples - rank < rank + 1) {
    throw PreconditionError("single-channel setting needs 1 <= m <= (n-1)/2");
  }
  return {Kind::kSingleChannel, samples, 1, rank, channel};
}

StructureSetting StructureSetting::coupled(int samples, int num_channels, int rank) {
  hankel_shape(samples, rank, num_channels);
  if (rank < 1 || num_channels < 1 || num_channels * (samples - rank) < rank + 1) {
    throw PreconditionError("coupled setting needs 1 <= m and N (n - m) >= m + 1");
  }
  return {Kind::kCoupled, samples, num_channels, rank, 0};
}

Matrix StructureSetting::apply(const Eigen::Ref<const Vector>& y) const {
  if (y.size() != d()) throw DimensionError("StructureSetting::apply: wrong signal length");
  if (num_channels == 1) return hankel_map(y, rank);
  return block_hankel_map(ChannelStack(y, samples, num_channels), rank);
}

Vector StructureSetting::adjoint(const Eigen::Ref<const Matrix>& Y) const {
  if (Y.rows() != p() || Y.cols() != q()) throw DimensionError("StructureSetting::adjoint: shape");
  if (num_channels == 1) return hankel_adjoint(Y);
  return block_hankel_adjoint(Y, samples).data();
}

KernelVector::KernelVector(RowVector coeffs) : coeffs_(std::move(coeffs)) {
  const double nrm = coeffs_.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) throw PreconditionError("kernel vector must be nonzero");
  coeffs_ /= nrm;
}

namespace {

void check_kernel(const Eigen::Ref<const RowVector>& R, const StructureSetting& setting) {
  if (R.size() != setting.p()) throw DimensionError("kernel length must equal p = m + 1");
  if (!(R.norm() > 0.0)) throw PreconditionError("kernel vector must be nonzero");
}

// Cholesky factor of the banded Toeplitz block of G G^T, whose entry (a, b) is the
// autocorrelation of R at lag |a - b|. Column j of the band holds L(j..j+bands, j).
class GramFactor {
 public:
  GramFactor(const Eigen::Ref<const RowVector>& R, int width)
      : width_(width), bands_(std::min<int>(static_cast<int>(R.size()) - 1, width - 1)),
        stride_(bands_ + 1), band_(static_cast<std::size_t>(stride_) * width, 0.0) {
    const auto p = static_cast<int>(R.size());
    std::vector<double> lags(bands_ + 1);
    for (int lag = 0; lag <= bands_; ++lag) lags[lag] = R.head(p - lag).dot(R.tail(p - lag));

    double anorm = 0.0;
    for (int j = 0; j < width; ++j) {
      double col = std::abs(lags[0]);
      for (int lag = 1; lag <= bands_; ++lag) {
        col += std::abs(lags[lag]) * ((j + lag < width) + (j - lag >= 0));
      }
      anorm = std::max(anorm, col);
    }

    for (int j = 0; j < width_; ++j) {
      double diag = lags[0];
      for (int k = std::max(0, j - bands_); k < j; ++k) diag -= at(j, k) * at(j, k);
      if (!(diag > 0.0)) return;  // not numerically positive definite: rcond stays 0
      const double pivot = std::sqrt(diag);
      ref(j, j) = pivot;
      for (int i = j + 1; i <= std::min(width_ - 1, j + bands_); ++i) {
        double v = lags[i - j];
        for (int k = std::max(0, i - bands_); k < j; ++k) v -= at(i, k) * at(j, k);
        ref(i, j) = v / pivot;
      }
    }
    rcond_ = 1.0 / (anorm * inverse_norm1_estimate());
  }

  double rcond() const { return rcond_; }

  void solve_in_place(double* b) const {
    for (int i = 0; i < width_; ++i) {
      double v = b[i];
      for (int k = std::max(0, i - bands_); k < i; ++k) v -= at(i, k) * b[k];
      b[i] = v / at(i, i);
    }
    for (int i = width_ - 1; i >= 0; --i) {
      double v = b[i];
      const int last = std::min(width_ - 1, i + bands_);
      for (int k = i + 1; k <= last; ++k) v -= at(k, i) * b[k];
      b[i] = v / at(i, i);
    }
  }

 private:
  double at(int i, int j) const { return band_[static_cast<std::size_t>(j) * stride_ + (i - j)]; }
  double& ref(int i, int j) { return band_[static_cast<std::size_t>(j) * stride_ + (i - j)]; }

  // Hager's estimate of |T^{-1}|_1 (T symmetric), with Higham's alternating-sign safeguard.
  double inverse_norm1_estimate() const {
    std::vector<double> x(width_, 1.0 / width_);
    std::vector<double> y(width_);
    std::vector<double> z(width_);
    double est = 0.0;
    for (int iter = 0; iter < 5; ++iter) {
      y = x;
      solve_in_place(y.data());
      double norm = 0.0;
      for (double v : y) norm += std::abs(v);
      if (iter > 0 && norm <= est) break;
      est = norm;
      for (int i = 0; i < width_; ++i) z[i] = y[i] >= 0.0 ? 1.0 : -1.0;
      solve_in_place(z.data());
      int j = 0;
      double zx = 0.0;
      for (int i = 0; i < width_; ++i) {
        if (std::abs(z[i]) > std::abs(z[j])) j = i;
        zx += z[i] * x[i];
      }
      if (iter > 0 && std::abs(z[j]) <= zx) break;
      std::fill(x.begin(), x.end(), 0.0);
      x[j] = 1.0;
    }
    for (int i = 0; i < width_; ++i) {
      y[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + (width_ > 1 ? double(i) / (width_ - 1) : 0.0));
    }
    solve_in_place(y.data());
    double alt = 0.0;
    for (double v : y) alt += std::abs(v);
    return std::max(est, 2.0 * alt / (3.0 * width_));
  }

  int width_;
  int bands_;
  int stride_;
  std::vector<double> band_;
  double rcond_ = 0.0;
};

// (G y) for one block: entry t = sum_i R(i) y(t + i).
Vector apply_block(const Eigen::Ref<const RowVector>& R, const Eigen::Ref<const Vector>& y,
                   int width) {
  const auto p = R.size();
  Vector out(width);
  for (int t = 0; t < width; ++t) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) v += R(i) * y(t + i);
    out(t) = v;
  }
  return out;
}

// (G^T lambda) for one block: entry s = sum_t lambda(t) R(s - t).
Vector apply_block_transpose(const Eigen::Ref<const RowVector>& R,
                             const Eigen::Ref<const Vector>& lambda, int samples) {
  const auto p = R.size();
  Vector out = Vector::Zero(samples);
  for (Eigen::Index t = 0; t < lambda.size(); ++t) {
    for (Eigen::Index i = 0; i < p; ++i) out(t + i) += lambda(t) * R(i);
  }
  return out;
}

constexpr double kMinReciprocalCondition = 1e-14;

}  // namespace

Matrix constraint_matrix(const Eigen::Ref<const RowVector>& R, const StructureSetting& setting) {
  check_kernel(R, setting);
  const int n = setting.samples;
  const int w = setting.block_width();
  Matrix G = Matrix::Zero(setting.q(), setting.d());
  for (int k = 0; k < setting.num_channels; ++k) {
    for (int t = 0; t < w; ++t) G.block(k * w + t, k * n + t, 1, setting.p()) = R;
  }
  return G;
}

InnerSolution inner_solve(const Eigen::Ref<const RowVector>& R, const Eigen::Ref<const Vector>& yhat,
                          const StructureSetting& setting) {
  check_kernel(R, setting);
  if (yhat.size() != setting.d()) throw DimensionError("inner_solve: wrong signal length");
  const int n = setting.samples;
  const int w = setting.block_width();

  // G G^T is block diagonal with N copies of the same Toeplitz block.
  const GramFactor gram(R, w);
  if (!(gram.rcond() >= kMinReciprocalCondition)) {
    throw ConditioningError("inner_solve: G G^T is numerically singular (rcond " +
                            std::to_string(gram.rcond()) + ")");
  }

  Matrix lambdas(w, setting.num_channels);
  for (int k = 0; k < setting.num_channels; ++k) {
    lambdas.col(k) = apply_block(R, yhat.segment(static_cast<Eigen::Index>(k) * n, n), w);
  }
  for (int k = 0; k < setting.num_channels; ++k) gram.solve_in_place(lambdas.col(k).data());

  InnerSolution sol;
  sol.multiplier = lambdas.reshaped();
  sol.y = yhat;
  for (int k = 0; k < setting.num_channels; ++k) {
    sol.y.segment(static_cast<Eigen::Index>(k) * n, n) -= apply_block_transpose(R, lambdas.col(k), n);
  }
  sol.psi = 0.5 * (sol.y - yhat).squaredNorm();
  return sol;
}

PsiEvaluation psi_value_and_gradient(const Eigen::Ref<const RowVector>& R,
                                     const Eigen::Ref<const Vector>& yhat,
                                     const StructureSetting& setting) {
  PsiEvaluation ev{inner_solve(R, yhat, setting), RowVector()};
  // Envelope formula: dPsi/dR(j) = Lambda^T (dG/dR(j)) y_R, i.e. (A(y_R) Lambda)^T.
  ev.gradient = (setting.apply(ev.inner.y) * ev.inner.multiplier).transpose();
  return ev;
}

RowVector initial_kernel(const Eigen::Ref<const Vector>& yhat, const Eigen::Ref<const Vector>& y_b,
                         const StructureSetting& setting) {
  const Matrix Ab = setting.apply(y_b);
  Eigen::JacobiSVD<Matrix> svd(Ab, Eigen::ComputeFullU);
  if (svd.info() != Eigen::Success) throw NumericalError("initial_kernel: SVD failed");
  const Vector& s = svd.singularValues();
  const int p = setting.p();
  const double tol = static_cast<double>(std::max(Ab.rows(), Ab.cols())) * s(0) * 1e-12;

  // Left null space of A(y_b); the last singular vector is always included.
  int first = p - 1;
  while (first > 0 && s(first - 1) <= tol) --first;
  const Matrix basis = svd.matrixU().rightCols(p - first);
  if (basis.cols() == 1) return basis.col(0).transpose();

  // Several directions annihilate A(y_b): pick the one closest to annihilating A(yhat).
  Eigen::JacobiSVD<Matrix> inner(basis.transpose() * setting.apply(yhat), Eigen::ComputeFullU);
  if (inner.info() != Eigen::Success) throw NumericalError("initial_kernel: SVD failed");
  const Vector u = inner.matrixU().col(basis.cols() - 1);
  return (basis * u).normalized().transpose();
}

namespace {

// Orthonormal basis (p x (p-1)) of the tangent space of the unit sphere at R.
Matrix tangent_basis(const RowVector& R) {
  const Eigen::Index p = R.size();
  Eigen::HouseholderQR<Matrix> qr(Matrix(R.transpose()));
  const Matrix Q = qr.householderQ() * Matrix::Identity(p, p);
  return Q.rightCols(p - 1);
}

RowVector tangent(const RowVector& g, const RowVector& R) { return g - g.dot(R) * R; }

// Newton direction in the tangent space with a forward-difference Hessian whose eigenvalues
// are replaced by their absolute values (floored), so the result is always a descent direction.
RowVector newton_direction(const RowVector& R, const RowVector& grad, const RowVector& g,
                           const Vector& yhat, const StructureSetting& setting, int& evaluations) {
  const Matrix B = tangent_basis(R);
  const auto k = B.cols();
  constexpr double h = 1e-7;
  Matrix H(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const RowVector dir = B.col(j).transpose();
    const RowVector gp = psi_value_and_gradient(R + h * dir, yhat, setting).gradient;
    ++evaluations;
    H.col(j) = B.transpose() * ((gp - grad).transpose() / h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
  Vector lam = eig.eigenvalues().cwiseAbs();
  const double floor = std::max(lam.maxCoeff() * 1e-10, std::numeric_limits<double>::min());
  lam = lam.cwiseMax(floor);
  const Vector gt = B.transpose() * g.transpose();
  const Vector step = eig.eigenvectors() * (eig.eigenvectors().transpose() * gt).cwiseQuotient(lam);
  return -(B * step).transpose();
}

double rank_gap_of(const Matrix& A, int m) {
  const Vector s = singular_values(A);
  if (s.size() <= m || s(m - 1) == 0.0) return 1.0;
  return s(m) / s(m - 1);
}

}  // namespace

PseudoProjectionResult pseudo_project(const Eigen::Ref<const Vector>& yhat,
                                      const Eigen::Ref<const Vector>& y_b,
                                      const StructureSetting& setting, const SphereOptions& opts) {
  if (yhat.size() != setting.d() || y_b.size() != setting.d()) {
    throw DimensionError("pseudo_project: wrong signal length");
  }
  const Matrix Ab = setting.apply(y_b);
  if (rank_distance(Ab, setting.m()) > opts.feasibility_tolerance * (1.0 + Ab.norm())) {
    throw PreconditionError("pseudo_project: reference point violates the rank constraint");
  }

  PseudoProjectionResult res;
  RowVector R = initial_kernel(yhat, y_b, setting);
  PsiEvaluation cur = psi_value_and_gradient(R, yhat, setting);
  res.evaluations = 1;
  RowVector g = tangent(cur.gradient, R);
  if (opts.record_history) res.psi_history.push_back(cur.inner.psi);
  int stalled_steps = 0;

  for (; res.iterations < opts.max_iterations; ++res.iterations) {
    const double psi = cur.inner.psi;
    if (g.norm() <= opts.gradient_tolerance * (1.0 + psi)) {
      res.converged = true;
      break;
    }
    RowVector dir = opts.method == SphereMethod::kNewton
                        ? newton_direction(R, cur.gradient, g, yhat, setting, res.evaluations)
                        : RowVector(-g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
    }

    bool accepted = false;
    double step = opts.initial_step;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt, step *= opts.shrink) {
      const RowVector trial = (R + step * dir).normalized();
      try {
        PsiEvaluation ev = psi_value_and_gradient(trial, yhat, setting);
        ++res.evaluations;
        if (ev.inner.psi <= psi + opts.armijo * step * slope) {
          R = trial;
          cur = std::move(ev);
          accepted = true;
          break;
        }
      } catch (const ConditioningError&) {
        ++res.evaluations;
      }
    }
    if (!accepted) break;  // no resolvable decrease along the direction
    g = tangent(cur.gradient, R);
    if (opts.record_history) res.psi_history.push_back(cur.inner.psi);
    stalled_steps = cur.inner.psi < psi ? 0 : stalled_steps + 1;
    if (stalled_steps >= 2) break;  // Psi no longer resolves progress
  }
  const double scale = 1.0 + cur.inner.psi;
  if (!res.converged && (g.norm() <= opts.gradient_tolerance * scale ||
                         (stalled_steps >= 2 && g.norm() <= opts.stall_gradient_tolerance * scale))) {
    res.converged = true;
  }

  res.point = cur.inner.y;
  res.kernel = KernelVector(R);
  res.multiplier = cur.inner.multiplier;
  res.objective = cur.inner.psi;
  res.tangent_gradient_norm = g.norm();
  res.improvement_ok = (res.point - yhat).norm() <= (y_b - yhat).norm() + 1e-10;
  const Matrix Astar = setting.apply(res.point);
  res.rank_gap = rank_gap_of(Astar, setting.m());
  res.stationarity_residual =
      (res.point - yhat +
       setting.adjoint(res.kernel.coeffs().transpose() * res.multiplier.transpose()))
          .norm();
  return res;
}

KktReport kkt_check(const PseudoProjectionResult& result, const Eigen::Ref<const Vector>& yhat,
                    const StructureSetting& setting) {
  const RowVector& R = result.kernel.coeffs();
  const RowVector V = result.multiplier.transpose();
  const Matrix A = setting.apply(result.point);
  KktReport rep;
  rep.gradient_residual =
      (result.point - yhat + setting.adjoint(R.transpose() * V)).norm();
  rep.multiplier_residual = (V * A.transpose()).norm();
  rep.sphere_residual = std::abs(R.squaredNorm() - 1.0);
  rep.constraint_residual = (R * A).norm();
  rep.tolerance = 1e-6 * (1.0 + yhat.norm());
  rep.stationary = rep.gradient_residual <= rep.tolerance &&
                   rep.multiplier_residual <= rep.tolerance &&
                   rep.sphere_residual <= rep.tolerance && rep.constraint_residual <= rep.tolerance;
  return rep;
}

Vector rank1_improve(const Eigen::Ref<const Vector>& yhat) {
  const auto n = yhat.size();
  if (n < 3 || numerical_rank(hankel_map(yhat, 1)) != 2) {
    throw PreconditionError("rank1_improve: H_2(yhat) must have rank 2");
  }
  Vector out = Vector::Zero(n);
  if (yhat(0) != 0.0) {
    out(0) = yhat(0);
    return out;
  }
  if (yhat(n - 1) != 0.0) {
    out(n - 1) = yhat(n - 1);
    return out;
  }
  // Interior polynomial P(z) = sum_{i=1}^{n-2} yhat(i) z^i has at most n - 2 real roots, so
  // some z in {1, ..., n - 1} avoids them.
  for (int z = 1; z < n; ++z) {
    double value = 0.0;
    double magnitude = 0.0;
    double power = 1.0;
    double norm2 = 0.0;
    Vector modes(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      modes(i) = power;
      norm2 += power * power;
      if (i > 0 && i < n - 1) {
        value += yhat(i) * power;
        magnitude += std::abs(yhat(i) * power);
      }
      power *= z;
    }
    if (std::abs(value) > 1e-12 * magnitude) {
      return (value / norm2) * modes;
    }
  }
  throw NumericalError("rank1_improve: no admissible integer z found");
}

namespace {

void merge_part(StackProjection& out, PseudoProjectionResult part) {
  out.converged = out.converged && part.converged;
  out.improvement_ok = out.improvement_ok && part.improvement_ok;
  out.parts.push_back(std::move(part));
}

}  // namespace

StackProjection project_channels(const ChannelStack& target, const ChannelStack& reference,
                                 const RankSpec& spec, const SphereOptions& opts) {
  if (target.num_channels() != spec.num_channels() ||
      reference.num_channels() != spec.num_channels() || target.samples() != spec.samples ||
      reference.samples() != spec.samples) {
    throw DimensionError("project_channels: stack does not match the rank spec");
  }
  StackProjection out{ChannelStack(spec.samples, spec.num_channels()), {}};
  for (int i = 0; i < spec.num_channels(); ++i) {
    const auto setting = StructureSetting::single_channel(spec.samples, spec.per_channel_ranks[i], i);
    PseudoProjectionResult part =
        pseudo_project(target.channel(i), reference.channel(i), setting, opts);
    out.point.channel(i) = part.point;
    merge_part(out, std::move(part));
  }
  return out;
}

StackProjection project_coupled(const ChannelStack& target, const ChannelStack& reference,
                                const RankSpec& spec, const SphereOptions& opts) {
  if (target.num_channels() != spec.num_channels() ||
      reference.num_channels() != spec.num_channels() || target.samples() != spec.samples ||
      reference.samples() != spec.samples) {
    throw DimensionError("project_coupled: stack does not match the rank spec");
  }
  const auto setting = StructureSetting::coupled(spec.samples, spec.num_channels(), spec.coupled_rank);
  PseudoProjectionResult part = pseudo_project(target.data(), reference.data(), setting, opts);
  StackProjection out{ChannelStack(part.point, spec.samples, spec.num_channels()), {}};
  merge_part(out, std::move(part));
  return out;
}

}  // namespace hpm
