#include "hpm/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hpm/errors.hpp"

namespace hpm {

Matrix PenaltyTerm::apply(const ChannelStack& y) const {
  if (setting.kind == StructureSetting::Kind::kSingleChannel) {
    return hankel_map(y.channel(setting.channel), setting.rank);
  }
  return block_hankel_map(y, setting.rank);
}

void PenaltyTerm::add_adjoint(const Eigen::Ref<const Matrix>& Y, double scale,
                              ChannelStack& out) const {
  if (setting.kind == StructureSetting::Kind::kSingleChannel) {
    out.channel(setting.channel) += scale * hankel_adjoint(Y);
  } else {
    out.data() += scale * block_hankel_adjoint(Y, out.samples()).data();
  }
}

namespace {

std::vector<PenaltyTerm> channel_terms(const RankSpec& spec) {
  std::vector<PenaltyTerm> terms;
  for (int i = 0; i < spec.num_channels(); ++i) {
    terms.push_back({StructureSetting::single_channel(spec.samples, spec.per_channel_ranks[i], i)});
  }
  return terms;
}

PenaltyTerm coupled_term(const RankSpec& spec) {
  return {StructureSetting::coupled(spec.samples, spec.num_channels(), spec.coupled_rank)};
}

bool within(const Matrix& A, int bound, double tol) {
  return rank_distance(A, bound) <= tol * (1.0 + A.norm());
}

}  // namespace

PenaltyVariant PenaltyVariant::make(Tag tag, const RankSpec& spec) {
  spec.validate();
  PenaltyVariant v;
  v.tag = tag;
  switch (tag) {
    case Tag::kI:
      v.domain = Domain::kChannels;
      v.terms = {coupled_term(spec)};
      break;
    case Tag::kII:
      v.domain = Domain::kCoupled;
      v.terms = channel_terms(spec);
      break;
    case Tag::kIII:
      v.domain = Domain::kWhole;
      v.terms = channel_terms(spec);
      v.terms.push_back(coupled_term(spec));
      break;
  }
  return v;
}

std::string to_string(PenaltyVariant::Tag tag) {
  switch (tag) {
    case PenaltyVariant::Tag::kI:
      return "I";
    case PenaltyVariant::Tag::kII:
      return "II";
    case PenaltyVariant::Tag::kIII:
      return "III";
  }
  return "?";
}

bool in_domain(const ChannelStack& y, const PenaltyObjective& obj) {
  const RankSpec& spec = obj.spec;
  switch (obj.variant.domain) {
    case Domain::kWhole:
      return true;
    case Domain::kChannels:
      for (int i = 0; i < spec.num_channels(); ++i) {
        if (!within(hankel_map(y.channel(i), spec.per_channel_ranks[i]), spec.per_channel_ranks[i],
                    obj.feasibility_tolerance)) {
          return false;
        }
      }
      return true;
    case Domain::kCoupled:
      return within(block_hankel_map(y, spec.coupled_rank), spec.coupled_rank,
                    obj.feasibility_tolerance);
  }
  return false;
}

double penalty_value(const ChannelStack& y, const PenaltyObjective& obj) {
  if (!in_domain(y, obj)) return std::numeric_limits<double>::infinity();
  double penalty = 0.0;
  for (const PenaltyTerm& term : obj.variant.terms) {
    const double dist = rank_distance(term.apply(y), term.bound());
    penalty += dist * dist;
  }
  return obj.loss->value(y.data()) + penalty / (2.0 * obj.lambda);
}

double smooth_part_value(const ChannelStack& y, const PenaltyObjective& obj) {
  double quad = 0.0;
  for (const PenaltyTerm& term : obj.variant.terms) quad += term.apply(y).squaredNorm();
  return obj.loss->value(y.data()) + quad / (2.0 * obj.lambda);
}

double concave_part_value(const ChannelStack& y, const PenaltyObjective& obj) {
  double total = 0.0;
  for (const PenaltyTerm& term : obj.variant.terms) {
    const Vector s = singular_values(term.apply(y));
    total += s.head(std::min<Eigen::Index>(term.bound(), s.size())).squaredNorm();
  }
  return total / (2.0 * obj.lambda);
}

Vector smooth_part_grad(const ChannelStack& y, const PenaltyObjective& obj) {
  ChannelStack acc(y.samples(), y.num_channels());
  for (const PenaltyTerm& term : obj.variant.terms) {
    term.add_adjoint(term.apply(y), 1.0 / obj.lambda, acc);
  }
  return obj.loss->gradient(y.data()) + acc.data();
}

Vector xi_subgradient(const ChannelStack& y, const PenaltyObjective& obj) {
  ChannelStack acc(y.samples(), y.num_channels());
  for (const PenaltyTerm& term : obj.variant.terms) {
    term.add_adjoint(rank_project(term.apply(y), term.bound()), 1.0 / obj.lambda, acc);
  }
  return acc.data();
}

PenaltyEvaluation evaluate_penalty(const ChannelStack& y, const PenaltyObjective& obj) {
  PenaltyEvaluation ev;
  if (!in_domain(y, obj)) {
    ev.value = std::numeric_limits<double>::infinity();
    return ev;
  }
  ChannelStack acc(y.samples(), y.num_channels());
  double penalty = 0.0;
  for (const PenaltyTerm& term : obj.variant.terms) {
    const RankSplit split = rank_split(term.apply(y), term.bound());
    penalty += split.distance * split.distance;
    term.add_adjoint(split.projection, 1.0 / obj.lambda, acc);
  }
  ev.value = obj.loss->value(y.data()) + penalty / (2.0 * obj.lambda);
  ev.xi = std::move(acc.data());
  return ev;
}

void VnpgOptions::validate() const {
  if (!(L_min > 0.0) || !(L_max > L_min)) throw PreconditionError("vnpg: need L_max > L_min > 0");
  if (!(tau > 1.0)) throw PreconditionError("vnpg: need tau > 1");
  if (!(c > 0.0)) throw PreconditionError("vnpg: need c > 0");
  if (M < 0) throw PreconditionError("vnpg: need M >= 0");
}

StepCandidate vnpg_step_along(const ChannelStack& y, const Vector& direction, double L,
                              const PenaltyObjective& obj, const SphereOptions& sphere) {
  ChannelStack target(y.data() - direction / L, y.samples(), y.num_channels());
  StepCandidate out;
  switch (obj.variant.domain) {
    case Domain::kWhole:
      out.point = std::move(target);
      return out;
    case Domain::kChannels:
    case Domain::kCoupled: {
      StackProjection proj = obj.variant.domain == Domain::kChannels
                                 ? project_channels(target, y, obj.spec, sphere)
                                 : project_coupled(target, y, obj.spec, sphere);
      out.point = std::move(proj.point);
      out.converged = proj.converged;
      out.improvement_ok = proj.improvement_ok;
      for (const auto& part : proj.parts) out.sphere_iterations += part.iterations;
      return out;
    }
  }
  return out;
}

StepCandidate vnpg_step(const ChannelStack& y, double L, const PenaltyObjective& obj,
                        const SphereOptions& sphere) {
  const Vector direction = smooth_part_grad(y, obj) - xi_subgradient(y, obj);
  return vnpg_step_along(y, direction, L, obj, sphere);
}

namespace {
constexpr double kRoundingStep = 1e-14;
}  // namespace

VnpgResult vnpg_major(const ChannelStack& y0, const PenaltyObjective& obj, const VnpgOptions& opts) {
  opts.validate();
  VnpgResult res;
  ChannelStack y = y0;
  PenaltyEvaluation current = evaluate_penalty(y, obj);
  double F = current.value;
  if (!std::isfinite(F)) throw PreconditionError("vnpg_major: starting point is outside Omega");
  res.trace.objective.push_back(F);

  ChannelStack y_prev;
  Vector grad_prev;
  for (long l = 0;; ++l) {
    if (l >= opts.max_iters) {
      res.final_point = y;
      res.extra_point = y;
      res.stop = VnpgStop::kIterationCap;
      res.iterations = l;
      return res;
    }
    const Vector grad_h = smooth_part_grad(y, obj);
    const Vector direction = grad_h - current.xi;

    double L0 = 1.0;
    if (l > 0) {
      const Vector s = y.data() - y_prev.data();
      const double ss = s.squaredNorm();
      L0 = ss > 0.0 ? s.dot(grad_h - grad_prev) / ss : opts.L_min;
    }
    L0 = std::clamp(L0, opts.L_min, opts.L_max);

    // Nonmonotone reference: max of the last M + 1 accepted objective values.
    const auto& hist = res.trace.objective;
    const auto window = std::min<std::size_t>(hist.size(), static_cast<std::size_t>(opts.M) + 1);
    const double F_ref = *std::max_element(hist.end() - static_cast<std::ptrdiff_t>(window), hist.end());

    int rejected = 0;
    double L = L0;
    StepCandidate cand;
    PenaltyEvaluation cand_eval;
    double F_cand = 0.0;
    for (;; L *= opts.tau, ++rejected) {
      if (L > opts.L_max) {
        throw LineSearchError("vnpg_major: curvature estimate exceeded L_max at iteration " +
                              std::to_string(l));
      }
      try {
        cand = vnpg_step_along(y, direction, L, obj, opts.sphere);
      } catch (const NumericalError&) {
        ++res.trace.rejected_projections;
        continue;
      }
      res.trace.sphere_iterations += cand.sphere_iterations;
      if (!cand.converged || !cand.improvement_ok) {
        ++res.trace.rejected_projections;
        continue;
      }
      cand_eval = evaluate_penalty(cand.point, obj);
      F_cand = cand_eval.value;
      const double step2 = (cand.point.data() - y.data()).squaredNorm();
      if (F_cand <= F_ref - 0.5 * opts.c * step2) break;
      // A step at rounding level cannot decrease F measurably; accept it and let the
      // relative-step rule stop the loop instead of inflating L up to L_max.
      if (std::sqrt(step2) <= kRoundingStep * std::max(y.data().norm(), 1.0)) break;
    }

    const double step = (cand.point.data() - y.data()).norm();
    res.trace.objective.push_back(F_cand);
    res.trace.accepted_L.push_back(L);
    res.trace.step_norms.push_back(step);
    res.trace.backtracks.push_back(rejected);

    const double rel_step = step / std::max(cand.point.data().norm(), 1.0);
    const double rel_obj = std::abs(F_cand - F) / std::max(std::abs(F_cand), 1.0);
    const bool small_step = rel_step < opts.eps / L;
    const bool flat = rel_obj < opts.rel_objective_tol;
    if (small_step || flat) {
      res.final_point = std::move(y);
      res.extra_point = std::move(cand.point);
      res.stop = small_step ? VnpgStop::kRelativeStep : VnpgStop::kRelativeObjective;
      res.iterations = l + 1;
      res.last_step = step;
      res.stationarity_surrogate = L * step;
      return res;
    }
    y_prev = std::move(y);
    grad_prev = grad_h;
    y = std::move(cand.point);
    F = F_cand;
    current = std::move(cand_eval);
  }
}

}  // namespace hpm
