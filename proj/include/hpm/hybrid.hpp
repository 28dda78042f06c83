#pragma once

#include <optional>
#include <vector>

#include "hpm/penalty.hpp"
#include "hpm/signal_lab.hpp"

namespace hpm {

struct PostProcessOptions {
  long max_iterations = 100000;
  /// Stop when max(|x^{t+1} - x^t|, |z^{t+1} - z^t|) / max(|x^t|, |z^t|, 1) < tolerance.
  double tolerance = 1e-10;
  SphereOptions sphere;
};

struct HybridConfig {
  PenaltyVariant::Tag variant = PenaltyVariant::Tag::kIII;
  double lambda0 = 0.1;
  double lambda_decay = 5.0;
  /// Switch to post-processing once lambda_t < lambda_bar. Zero disables the switch.
  double lambda_bar = 1e-4;
  double eps0 = 1e-5;
  double eps_decay = 1.5;
  double eps_floor = 1e-6;
  /// Feasible fallback point; the zero stack when unset.
  std::optional<ChannelStack> y_feas;
  VnpgOptions vnpg;
  PostProcessOptions post;
  /// Guard for lambda_bar = 0, which would otherwise never leave the penalty stage.
  int max_outer_iterations = 200;
  double error_bound_tolerance = 1e-8;

  void validate() const;
};

struct OuterRecord {
  int t = 0;
  double lambda = 0.0;
  double eps = 0.0;
  bool started_from_feasible = false;  // Step 1 picked y^feas over y^t
  double start_objective = 0.0;        // F_lambda(y^{t,0})
  double final_objective = 0.0;        // F_lambda(y^{t+1})
  double loss = 0.0;                   // f(y^{t+1})
  std::vector<double> distances;       // dist(A_i(y^{t+1}), C_i) over the penalized terms
  double error_bound = 0.0;            // sqrt(2 lambda_t f(y^feas))
  double min_slack = 0.0;
  long vnpg_iterations = 0;
  VnpgStop stop = VnpgStop::kIterationCap;
  double last_step = 0.0;
  double stationarity_surrogate = 0.0;
  bool stopping_rule_met = false;  // |step| <= eps, Lbar |step| <= eps and F decreased
  VnpgTrace trace;
};

struct PenaltyStageResult {
  ChannelStack point;
  std::vector<OuterRecord> outer;
  long inner_iterations = 0;
};

struct PostRecord {
  double gap = 0.0;         // |x^{t+1} - z^{t+1}|
  double rel_change = 0.0;  // the termination quantity
  double z_step = 0.0;      // |z^{t+1} - x^t|
  double z_reference = 0.0; // |z^t - x^t|
  double x_step = 0.0;      // |x^{t+1} - z^{t+1}|
  double x_reference = 0.0; // |x^t - z^{t+1}|
  bool z_converged = true;
  bool x_converged = true;
  bool z_failed = false;
  bool x_failed = false;
};

struct PostProcessResult {
  ChannelStack z;  // reported solution, in Omega_1
  ChannelStack x;  // companion iterate, in Omega_2
  double initial_gap = 0.0;
  std::vector<PostRecord> records;
  long iterations = 0;
  bool converged = false;
  bool aborted = false;  // both projections failed in the same sweep
  int failures = 0;
};

struct HybridReport {
  std::string method;
  std::vector<OuterRecord> outer;
  PostProcessResult post;
  ChannelStack penalty_point;
  ChannelStack final_point;
  double final_objective = 0.0;
  Violation vio_pre;
  Violation vio_post;
  double seconds = 0.0;
  double seconds_penalty = 0.0;
  double seconds_post = 0.0;
  long inner_iterations = 0;
  bool post_processed = false;
};

/// y^0 for the chosen variant: the observation projected onto Omega_1 (I), onto Omega_2 (II),
/// or the observation itself (III).
ChannelStack initial_point(PenaltyVariant::Tag variant, const ChannelStack& observed,
                           const RankSpec& spec, const SphereOptions& sphere = {});

/// Outer penalty loop with decreasing lambda_t. Throws InvariantError if the a priori
/// distance bound is violated, and rethrows subsolver errors with the outer index attached.
PenaltyStageResult penalty_stage(std::shared_ptr<const SmoothLoss> loss, const ChannelStack& y0,
                                 const RankSpec& spec, const HybridConfig& config);

/// Alternating pseudo-projections between Omega_2 (x) and Omega_1 (z), both seeded at y_in.
PostProcessResult post_process(const ChannelStack& y_in, const RankSpec& spec,
                               const PostProcessOptions& opts);

HybridReport run_hybrid(const ExperimentInstance& instance, const HybridConfig& config);

/// Alternating pseudo-projections applied directly to the observation.
HybridReport run_ap_baseline(const ExperimentInstance& instance, const HybridConfig& config);

std::string method_name(PenaltyVariant::Tag variant);

}  // namespace hpm
