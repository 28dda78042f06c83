#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hpm/hankel.hpp"
#include "hpm/loss.hpp"
#include "hpm/pseudo_projection.hpp"

namespace hpm {

/// One penalized constraint A_i(y) in C_i = {Y : rank(Y) <= bound}, with A_i acting on the
/// whole stack: either L_i(y) = H_{r_i+1}(y_i) or L(y) = [H_{r+1}(y_1) ... H_{r+1}(y_N)].
struct PenaltyTerm {
  StructureSetting setting;

  int bound() const { return setting.rank; }
  Matrix apply(const ChannelStack& y) const;
  /// out += scale * A_i^*(Y)
  void add_adjoint(const Eigen::Ref<const Matrix>& Y, double scale, ChannelStack& out) const;
};

/// Which constraints stay hard (the set Omega) and which are penalized.
enum class Domain {
  kChannels,  // Omega_1: every per-channel constraint
  kCoupled,   // Omega_2: the coupled constraint
  kWhole,     // no hard constraint
};

struct PenaltyVariant {
  enum class Tag { kI, kII, kIII };

  Tag tag = Tag::kIII;
  Domain domain = Domain::kWhole;
  std::vector<PenaltyTerm> terms;

  /// Variant I: Omega = Omega_1, penalize L.  Variant II: Omega = Omega_2, penalize each L_i.
  /// Variant III: Omega = whole space, penalize all N + 1 maps.
  static PenaltyVariant make(Tag tag, const RankSpec& spec);
  int k() const { return static_cast<int>(terms.size()); }
};

std::string to_string(PenaltyVariant::Tag tag);

struct PenaltyObjective {
  double lambda = 1.0;
  PenaltyVariant variant;
  RankSpec spec;
  std::shared_ptr<const SmoothLoss> loss;
  /// y is in Omega when every hard constraint has rank_distance <= tol * (1 + |A(y)|_F).
  double feasibility_tolerance = 1e-8;
};

/// Distance of the hard constraints: true when y lies in Omega within tolerance.
bool in_domain(const ChannelStack& y, const PenaltyObjective& obj);

/// F_lambda(y) = f(y) + sum_i dist^2(A_i(y), C_i) / (2 lambda), or +inf outside Omega.
double penalty_value(const ChannelStack& y, const PenaltyObjective& obj);

/// h(y) = f(y) + sum_i |A_i(y)|_F^2 / (2 lambda).
double smooth_part_value(const ChannelStack& y, const PenaltyObjective& obj);

/// g(y) = sum_i |P_{C_i}(A_i(y))|_F^2 / (2 lambda), the convex part subtracted from h.
double concave_part_value(const ChannelStack& y, const PenaltyObjective& obj);

/// grad h(y) = grad f(y) + sum_i A_i^*(A_i(y)) / lambda.
Vector smooth_part_grad(const ChannelStack& y, const PenaltyObjective& obj);

/// xi = sum_i A_i^*(P_{C_i}(A_i(y))) / lambda, an element of the subdifferential of g.
Vector xi_subgradient(const ChannelStack& y, const PenaltyObjective& obj);

struct PenaltyEvaluation {
  double value = 0.0;  // F_lambda(y)
  Vector xi;           // xi_subgradient(y); empty when y is outside Omega
};

/// F_lambda(y) and xi(y) sharing one SVD per penalized term.
PenaltyEvaluation evaluate_penalty(const ChannelStack& y, const PenaltyObjective& obj);

struct VnpgOptions {
  double L_min = 1e-8;
  double L_max = 1e8;
  double tau = 2.0;
  double c = 1e-4;
  int M = 4;
  long max_iters = 100000000;
  /// Stop when |y^{l+1} - y^l| / max(|y^{l+1}|, 1) < eps / Lbar_l ...
  double eps = 1e-5;
  /// ... or |F(y^{l+1}) - F(y^l)| / max(|F(y^{l+1})|, 1) < rel_objective_tol.
  double rel_objective_tol = 1e-10;
  SphereOptions sphere;

  /// Throws PreconditionError unless L_max > L_min > 0, tau > 1, c > 0, M >= 0.
  void validate() const;
};

struct StepCandidate {
  ChannelStack point;
  bool converged = true;       // pseudo-projection reported convergence
  bool improvement_ok = true;  // |u - target| <= |y - target|
  int sphere_iterations = 0;
};

/// u in P^s_Omega(y - (grad h(y) - xi) / L; y). Variant III returns the gradient step itself.
StepCandidate vnpg_step(const ChannelStack& y, double L, const PenaltyObjective& obj,
                        const SphereOptions& sphere = {});

/// Same, with the direction grad h(y) - xi supplied by the caller.
StepCandidate vnpg_step_along(const ChannelStack& y, const Vector& direction, double L,
                              const PenaltyObjective& obj, const SphereOptions& sphere);

enum class VnpgStop { kRelativeStep, kRelativeObjective, kIterationCap };

struct VnpgTrace {
  std::vector<double> objective;   // F(y^0), F(y^1), ...
  std::vector<double> accepted_L;  // Lbar_l
  std::vector<double> step_norms;  // |y^{l+1} - y^l|
  std::vector<int> backtracks;     // rejected trials before acceptance at iteration l
  int rejected_projections = 0;    // trials rejected because the pseudo-projection failed
  long sphere_iterations = 0;
};

struct VnpgResult {
  ChannelStack final_point;  // y^{l_t}
  ChannelStack extra_point;  // y^{l_t + 1}
  VnpgTrace trace;
  VnpgStop stop = VnpgStop::kIterationCap;
  long iterations = 0;
  /// Surrogate stationarity measure Lbar * |y^{l_t+1} - y^{l_t}| and the step |y^{l_t+1} - y^{l_t}|.
  double stationarity_surrogate = 0.0;
  double last_step = 0.0;
};

/// Nonmonotone proximal-gradient majorization method for min F_lambda over Omega.
/// Throws PreconditionError if y0 is outside Omega and LineSearchError if L exceeds L_max.
VnpgResult vnpg_major(const ChannelStack& y0, const PenaltyObjective& obj, const VnpgOptions& opts);

}  // namespace hpm
