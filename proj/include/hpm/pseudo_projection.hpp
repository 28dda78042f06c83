#pragma once

#include <vector>

#include "hpm/hankel.hpp"

namespace hpm {

/// Structure of a single rank constraint rank(A(y)) <= m with p = m + 1 rows.
///
/// SingleChannel: A(y) = H_{m+1}(y) for y of length n (d = n, q = n - m).
/// Coupled:       A(y) = [H_{m+1}(y_1) ... H_{m+1}(y_N)] (d = N n, q = N (n - m)).
struct StructureSetting {
  enum class Kind { kSingleChannel, kCoupled };

  Kind kind = Kind::kSingleChannel;
  int samples = 0;       // n
  int num_channels = 1;  // 1 for SingleChannel
  int rank = 0;          // m
  int channel = 0;       // which channel a SingleChannel setting belongs to (bookkeeping only)

  static StructureSetting single_channel(int samples, int rank, int channel = 0);
  static StructureSetting coupled(int samples, int num_channels, int rank);

  int d() const { return samples * num_channels; }
  int m() const { return rank; }
  int p() const { return rank + 1; }
  int q() const { return num_channels * block_width(); }
  int block_width() const { return samples - rank; }

  Matrix apply(const Eigen::Ref<const Vector>& y) const;
  Vector adjoint(const Eigen::Ref<const Matrix>& Y) const;
};

/// Unit-norm row vector R with R * A(y) = 0 certifying rank(A(y)) <= p - 1.
class KernelVector {
 public:
  KernelVector() = default;
  /// Normalizes `coeffs`; throws PreconditionError if it is zero.
  explicit KernelVector(RowVector coeffs);
  const RowVector& coeffs() const { return coeffs_; }

 private:
  RowVector coeffs_;
};

/// Dense q x d matrix G with G y = (R A(y))^T.
Matrix constraint_matrix(const Eigen::Ref<const RowVector>& R, const StructureSetting& setting);

struct InnerSolution {
  Vector y;           // argmin 1/2 |y - yhat|^2 s.t. R A(y) = 0
  double psi = 0.0;   // 1/2 |y - yhat|^2
  Vector multiplier;  // (G G^T)^{-1} G yhat, so that y = yhat - G^T multiplier
};

/// Exact minimizer of the equality-constrained least squares for fixed R.
/// Throws ConditioningError when G G^T is numerically singular.
InnerSolution inner_solve(const Eigen::Ref<const RowVector>& R, const Eigen::Ref<const Vector>& yhat,
                          const StructureSetting& setting);

struct PsiEvaluation {
  InnerSolution inner;
  RowVector gradient;  // dPsi/dR, length p
};

PsiEvaluation psi_value_and_gradient(const Eigen::Ref<const RowVector>& R,
                                     const Eigen::Ref<const Vector>& yhat,
                                     const StructureSetting& setting);

enum class SphereMethod {
  kGradient,  // projected gradient with normalization retraction
  kNewton,    // tangent-space Newton with finite-difference Hessian, eigenvalue-modified
};

struct SphereOptions {
  SphereMethod method = SphereMethod::kNewton;
  int max_iterations = 500;
  int max_backtracks = 60;
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  /// Stop once |tangent gradient| <= gradient_tolerance * (1 + Psi).
  double gradient_tolerance = 1e-9;
  /// Once two accepted steps in a row leave Psi unchanged in floating point, the descent stops
  /// and counts as converged if |tangent gradient| <= stall_gradient_tolerance * (1 + Psi).
  double stall_gradient_tolerance = 1e-6;
  /// Reference point admitted when rank_distance(A(y_b), m) <= tol * (1 + |A(y_b)|_F).
  double feasibility_tolerance = 1e-8;
  bool record_history = false;
};

/// rank(A(y*)) counts as exactly m when sigma_{m+1} <= kRankExactThreshold * sigma_m.
inline constexpr double kRankExactThreshold = 1e-6;

struct PseudoProjectionResult {
  Vector point;  // y*
  KernelVector kernel;
  Vector multiplier;
  double objective = 0.0;  // 1/2 |y* - yhat|^2
  double stationarity_residual = 0.0;
  double tangent_gradient_norm = 0.0;
  bool improvement_ok = false;
  double rank_gap = 1.0;  // sigma_{m+1} / sigma_m of A(y*)
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> psi_history;  // accepted Psi values, starting at Psi(R0)

  bool rank_exact() const { return rank_gap <= kRankExactThreshold; }
};

/// Left unit vector R0 with R0 A(y_b) = 0 used to start the sphere descent.
RowVector initial_kernel(const Eigen::Ref<const Vector>& yhat, const Eigen::Ref<const Vector>& y_b,
                         const StructureSetting& setting);

/// Pseudo-projection of yhat onto {y : rank(A(y)) <= m} with respect to the feasible point y_b.
///
/// Minimizes Psi over the unit sphere by a monotone descent started at initial_kernel(), so
/// the returned point is never farther from yhat than y_b. Throws PreconditionError if y_b is
/// not feasible and ConditioningError if an inner solve at R0 is singular.
PseudoProjectionResult pseudo_project(const Eigen::Ref<const Vector>& yhat,
                                      const Eigen::Ref<const Vector>& y_b,
                                      const StructureSetting& setting,
                                      const SphereOptions& opts = {});

struct KktReport {
  double gradient_residual = 0.0;     // |y* - yhat + A*(R*^T V*)|
  double multiplier_residual = 0.0;   // |V* A(y*)^T|
  double sphere_residual = 0.0;       // |R* R*^T - 1|
  double constraint_residual = 0.0;   // |R* A(y*)|
  double tolerance = 0.0;             // 1e-6 * (1 + |yhat|)
  bool stationary = false;
};

/// Residuals of the KKT system of the lifted problem in (y, R) with V* = multiplier^T.
KktReport kkt_check(const PseudoProjectionResult& result, const Eigen::Ref<const Vector>& yhat,
                    const StructureSetting& setting);

/// For yhat with rank(H_2(yhat)) = 2, an explicit ybar with rank(H_2(ybar)) = 1 and
/// |ybar - yhat| < |yhat|. Throws PreconditionError otherwise.
Vector rank1_improve(const Eigen::Ref<const Vector>& yhat);

/// Pseudo-projection of a whole stack onto one of the two constraint families.
struct StackProjection {
  ChannelStack point;
  std::vector<PseudoProjectionResult> parts;  // one per channel (Omega_1) or a single entry (Omega_2)
  bool converged = true;
  bool improvement_ok = true;
};

/// Omega_1 = {y : rank(H_{r_i+1}(y_i)) <= r_i for all i}; solved channel by channel.
StackProjection project_channels(const ChannelStack& target, const ChannelStack& reference,
                                 const RankSpec& spec, const SphereOptions& opts = {});

/// Omega_2 = {y : rank([H_{r+1}(y_1) ... H_{r+1}(y_N)]) <= r}.
StackProjection project_coupled(const ChannelStack& target, const ChannelStack& reference,
                                const RankSpec& spec, const SphereOptions& opts = {});

}  // namespace hpm
