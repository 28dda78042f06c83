#include "hpm/hybrid.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "hpm/errors.hpp"

namespace hpm {

void HybridConfig::validate() const {
  if (!(lambda0 > 0.0)) throw PreconditionError("HybridConfig: lambda0 must be positive");
  if (!(lambda_decay > 1.0)) throw PreconditionError("HybridConfig: lambda_decay must exceed 1");
  if (lambda_bar < 0.0) throw PreconditionError("HybridConfig: negative lambda_bar");
  if (!(eps0 > 0.0) || !(eps_decay >= 1.0) || eps_floor < 0.0) {
    throw PreconditionError("HybridConfig: bad eps schedule");
  }
  if (max_outer_iterations < 1) throw PreconditionError("HybridConfig: max_outer_iterations < 1");
  if (post.max_iterations < 1 || !(post.tolerance > 0.0)) {
    throw PreconditionError("HybridConfig: bad post-processing limits");
  }
  vnpg.validate();
}

std::string method_name(PenaltyVariant::Tag variant) {
  switch (variant) {
    case PenaltyVariant::Tag::kI: return "HB_1";
    case PenaltyVariant::Tag::kII: return "HB_2";
    case PenaltyVariant::Tag::kIII: return "HB_3";
  }
  return "HB_?";
}

ChannelStack initial_point(PenaltyVariant::Tag variant, const ChannelStack& observed,
                           const RankSpec& spec, const SphereOptions& sphere) {
  const ChannelStack origin(observed.samples(), observed.num_channels());
  switch (variant) {
    case PenaltyVariant::Tag::kI: return project_channels(observed, origin, spec, sphere).point;
    case PenaltyVariant::Tag::kII: return project_coupled(observed, origin, spec, sphere).point;
    case PenaltyVariant::Tag::kIII: return observed;
  }
  return observed;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool all_constraints_hold(const ChannelStack& y, const RankSpec& spec, double tol) {
  for (int i = 0; i < spec.num_channels(); ++i) {
    const Matrix A = hankel_map(y.channel(i), spec.per_channel_ranks[i]);
    if (rank_distance(A, spec.per_channel_ranks[i]) > tol * (1.0 + A.norm())) return false;
  }
  const Matrix L = block_hankel_map(y, spec.coupled_rank);
  return rank_distance(L, spec.coupled_rank) <= tol * (1.0 + L.norm());
}

std::string outer_context(int t, double lambda) {
  return "penalty_stage: outer iteration " + std::to_string(t) + " (lambda " + std::to_string(lambda) +
         "): ";
}

}  // namespace

PenaltyStageResult penalty_stage(std::shared_ptr<const SmoothLoss> loss, const ChannelStack& y0,
                                 const RankSpec& spec, const HybridConfig& config) {
  config.validate();
  spec.validate();
  const ChannelStack y_feas =
      config.y_feas ? *config.y_feas : ChannelStack(y0.samples(), y0.num_channels());
  if (y_feas.samples() != y0.samples() || y_feas.num_channels() != y0.num_channels()) {
    throw DimensionError("penalty_stage: y_feas shape");
  }
  if (!all_constraints_hold(y_feas, spec, config.vnpg.sphere.feasibility_tolerance)) {
    throw PreconditionError("penalty_stage: y_feas violates a constraint");
  }

  PenaltyObjective obj;
  obj.variant = PenaltyVariant::make(config.variant, spec);
  obj.spec = spec;
  obj.loss = std::move(loss);
  obj.feasibility_tolerance = config.vnpg.sphere.feasibility_tolerance;
  if (!in_domain(y0, obj)) throw PreconditionError("penalty_stage: y0 is outside Omega");

  const double f_feas = obj.loss->value(y_feas.data());
  PenaltyStageResult out;
  out.point = y0;
  double eps = config.eps0;
  for (int t = 0; t < config.max_outer_iterations; ++t) {
    const double lambda = config.lambda0 / std::pow(config.lambda_decay, t);
    if (t > 0) eps = std::max(eps / config.eps_decay, config.eps_floor);
    if (config.lambda_bar > 0.0 && lambda < config.lambda_bar) break;

    obj.lambda = lambda;
    OuterRecord rec;
    rec.t = t;
    rec.lambda = lambda;
    rec.eps = eps;
    const double F_current = penalty_value(out.point, obj);
    const double F_feas = penalty_value(y_feas, obj);
    rec.started_from_feasible = !(F_current <= F_feas);
    const ChannelStack& start = rec.started_from_feasible ? y_feas : out.point;
    rec.start_objective = std::min(F_current, F_feas);

    VnpgOptions opts = config.vnpg;
    opts.eps = eps;
    VnpgResult res;
    try {
      res = vnpg_major(start, obj, opts);
    } catch (const LineSearchError& e) {
      throw LineSearchError(outer_context(t, lambda) + e.what());
    } catch (const ConditioningError& e) {
      throw ConditioningError(outer_context(t, lambda) + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(outer_context(t, lambda) + e.what());
    } catch (const InvariantError& e) {
      throw InvariantError(outer_context(t, lambda) + e.what());
    } catch (const Error& e) {
      throw Error(outer_context(t, lambda) + e.what());
    }
    out.point = res.final_point;
    out.inner_iterations += res.iterations;

    rec.final_objective = penalty_value(out.point, obj);
    rec.loss = obj.loss->value(out.point.data());
    rec.error_bound = std::sqrt(2.0 * lambda * f_feas);
    rec.min_slack = std::numeric_limits<double>::infinity();
    for (const PenaltyTerm& term : obj.variant.terms) {
      const double dist = rank_distance(term.apply(out.point), term.bound());
      rec.distances.push_back(dist);
      rec.min_slack = std::min(rec.min_slack, rec.error_bound - dist);
    }
    rec.vnpg_iterations = res.iterations;
    rec.stop = res.stop;
    rec.last_step = res.last_step;
    rec.stationarity_surrogate = res.stationarity_surrogate;
    rec.stopping_rule_met = res.last_step <= eps && res.stationarity_surrogate <= eps &&
                            rec.final_objective <= rec.start_objective;
    rec.trace = std::move(res.trace);
    out.outer.push_back(std::move(rec));

    if (out.outer.back().min_slack < -config.error_bound_tolerance) {
      throw InvariantError("penalty_stage: distance bound violated at outer iteration " +
                           std::to_string(t) + " (slack " +
                           std::to_string(out.outer.back().min_slack) + ")");
    }
  }
  return out;
}

PostProcessResult post_process(const ChannelStack& y_in, const RankSpec& spec,
                               const PostProcessOptions& opts) {
  const ChannelStack origin(y_in.samples(), y_in.num_channels());
  PostProcessResult out;
  out.x = project_coupled(y_in, origin, spec, opts.sphere).point;
  out.z = project_channels(y_in, origin, spec, opts.sphere).point;
  out.initial_gap = (out.x.data() - out.z.data()).norm();

  for (long t = 0; t < opts.max_iterations; ++t) {
    PostRecord rec;
    ChannelStack z_next = out.z;
    try {
      const StackProjection pz = project_channels(out.x, out.z, spec, opts.sphere);
      z_next = pz.point;
      rec.z_converged = pz.converged;
    } catch (const NumericalError&) {
      rec.z_failed = true;
    }
    ChannelStack x_next = out.x;
    try {
      const StackProjection px = project_coupled(z_next, out.x, spec, opts.sphere);
      x_next = px.point;
      rec.x_converged = px.converged;
    } catch (const NumericalError&) {
      rec.x_failed = true;
    }
    out.failures += static_cast<int>(rec.z_failed) + static_cast<int>(rec.x_failed);

    const double scale = std::max({out.x.data().norm(), out.z.data().norm(), 1.0});
    rec.rel_change =
        std::max((x_next.data() - out.x.data()).norm(), (z_next.data() - out.z.data()).norm()) / scale;
    rec.z_step = (z_next.data() - out.x.data()).norm();
    rec.z_reference = (out.z.data() - out.x.data()).norm();
    rec.x_step = (x_next.data() - z_next.data()).norm();
    rec.x_reference = (out.x.data() - z_next.data()).norm();
    rec.gap = rec.x_step;

    out.x = std::move(x_next);
    out.z = std::move(z_next);
    out.records.push_back(rec);
    out.iterations = t + 1;
    if (rec.z_failed && rec.x_failed) {
      out.aborted = true;
      break;
    }
    if (rec.rel_change < opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

HybridReport run_hybrid(const ExperimentInstance& instance, const HybridConfig& config) {
  config.validate();
  HybridReport report;
  report.method = method_name(config.variant);
  auto loss = std::make_shared<const WeightedLoss>(instance.observed, instance.weights);

  const auto start = Clock::now();
  const ChannelStack y0 =
      initial_point(config.variant, instance.observed, instance.spec, config.vnpg.sphere);
  PenaltyStageResult stage = penalty_stage(loss, y0, instance.spec, config);
  report.seconds_penalty = seconds_since(start);
  report.outer = std::move(stage.outer);
  report.inner_iterations = stage.inner_iterations;
  report.penalty_point = stage.point;
  report.vio_pre = violation(stage.point, instance.spec);

  const auto post_start = Clock::now();
  if (config.lambda_bar > 0.0) {
    report.post = post_process(stage.point, instance.spec, config.post);
    report.final_point = report.post.z;
    report.post_processed = true;
  } else {
    report.final_point = stage.point;
  }
  report.seconds_post = seconds_since(post_start);
  report.seconds = seconds_since(start);
  report.final_objective = loss->value(report.final_point.data());
  report.vio_post = violation(report.final_point, instance.spec);
  return report;
}

HybridReport run_ap_baseline(const ExperimentInstance& instance, const HybridConfig& config) {
  config.validate();
  HybridReport report;
  report.method = "AP";
  const WeightedLoss loss(instance.observed, instance.weights);
  report.penalty_point = instance.observed;
  report.vio_pre = violation(instance.observed, instance.spec);

  const auto start = Clock::now();
  report.post = post_process(instance.observed, instance.spec, config.post);
  report.seconds_post = seconds_since(start);
  report.seconds = report.seconds_post;
  report.post_processed = true;
  report.final_point = report.post.z;
  report.final_objective = loss.value(report.final_point.data());
  report.vio_post = violation(report.final_point, instance.spec);
  return report;
}

}  // namespace hpm
