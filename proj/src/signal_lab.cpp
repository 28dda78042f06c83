#include "hpm/signal_lab.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "hpm/errors.hpp"

namespace hpm {

WeightedLoss::WeightedLoss(ChannelStack observed, Vector weights)
    : observed_(std::move(observed)), weights_(std::move(weights)) {
  if (weights_.size() != observed_.samples()) throw PreconditionError("WeightedLoss: weight length");
  if (!(weights_.array() > 0.0).all()) throw PreconditionError("WeightedLoss: weights must be positive");
  stacked_weights_ = weights_.replicate(observed_.num_channels(), 1);
}

double WeightedLoss::value(const Vector& y) const {
  const Vector r = y - observed_.data();
  return 0.5 * r.dot(stacked_weights_.cwiseProduct(r));
}

Vector WeightedLoss::gradient(const Vector& y) const {
  return stacked_weights_.cwiseProduct(y - observed_.data());
}

Vector WeightedLoss::alternating_weights(int samples) {
  Vector w(samples);
  for (int i = 0; i < samples; ++i) w(i) = (i % 2 == 0) ? 1.0 : 10.0;
  return w;
}

void SystemSpec::validate() const {
  if (n1 < 0 || n2 < 0 || nc < 0) throw PreconditionError("SystemSpec: negative order");
  if (nc + std::min(n1, n2) < 1) throw PreconditionError("SystemSpec: every channel needs order >= 1");
  if (n1 + n2 + nc > (samples - 1) / 2) {
    throw PreconditionError("SystemSpec: n1 + n2 + nc exceeds floor((n - 1) / 2)");
  }
  if (sigma < 0.0) throw PreconditionError("SystemSpec: negative noise factor");
}

RankSpec SystemSpec::rank_spec() const { return {{n1 + nc, n2 + nc}, n1 + n2 + nc, samples}; }

namespace {

using Pole = std::complex<double>;

void draw_poles(int order, std::mt19937_64& rng, std::vector<Pole>& out) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::bernoulli_distribution sign(0.5);
  for (int k = 0; k < order / 2; ++k) {
    const double theta = angle(rng);
    out.push_back(std::polar(1.0, theta));
    out.push_back(std::polar(1.0, -theta));
  }
  if (order % 2 == 1) out.emplace_back(sign(rng) ? 1.0 : -1.0, 0.0);
}

// Real combination of the modes of `poles` (conjugate pairs contribute cos/sin terms).
Vector synthesize(const std::vector<Pole>& poles, int samples, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector y = Vector::Zero(samples);
  for (const Pole& z : poles) {
    if (z.imag() < 0.0) continue;
    const double theta = std::arg(z);
    if (z.imag() == 0.0) {
      const double a = normal(rng);
      for (int t = 0; t < samples; ++t) y(t) += a * std::pow(z.real(), t);
    } else {
      const double a = normal(rng);
      const double b = normal(rng);
      for (int t = 0; t < samples; ++t) y(t) += a * std::cos(theta * t) + b * std::sin(theta * t);
    }
  }
  const double rms = y.norm() / std::sqrt(static_cast<double>(samples));
  if (rms > 0.0) y /= rms;
  return y;
}

bool well_separated(const std::vector<Pole>& poles, double min_gap) {
  for (std::size_t a = 0; a < poles.size(); ++a) {
    for (std::size_t b = a + 1; b < poles.size(); ++b) {
      if (std::abs(poles[a] - poles[b]) < min_gap) return false;
    }
  }
  return true;
}

bool satisfies(const Matrix& A, int m) {
  return rank_distance(A, m) <= 1e-8 * A.norm();
}

}  // namespace

GeneratedSignals generate_signals(const SystemSpec& spec) {
  spec.validate();
  const RankSpec ranks = spec.rank_spec();
  std::mt19937_64 rng(spec.seed);
  constexpr int kMaxAttempts = 100;
  constexpr double kMinPoleGap = 0.05;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    std::vector<Pole> common;
    draw_poles(spec.nc, rng, common);
    std::vector<Pole> private1;
    std::vector<Pole> private2;
    draw_poles(spec.n1, rng, private1);
    draw_poles(spec.n2, rng, private2);

    // Separation is enforced within each channel only. A private pole that happens to appear in
    // both channels merely lowers the coupled rank, and the only real unit poles are +-1, so three
    // odd-order groups could never be mutually separated.
    GeneratedSignals out;
    out.poles = {common, common};
    out.poles[0].insert(out.poles[0].end(), private1.begin(), private1.end());
    out.poles[1].insert(out.poles[1].end(), private2.begin(), private2.end());
    if (!well_separated(out.poles[0], kMinPoleGap) || !well_separated(out.poles[1], kMinPoleGap)) continue;
    out.clean = ChannelStack::from_channels(
        {synthesize(out.poles[0], spec.samples, rng), synthesize(out.poles[1], spec.samples, rng)});
    out.attempts = attempt;

    bool ok = true;
    for (int i = 0; i < 2; ++i) {
      const int r = ranks.per_channel_ranks[i];
      ok = ok && satisfies(hankel_map(out.clean.channel(i), r), r);
    }
    ok = ok && satisfies(block_hankel_map(out.clean, ranks.coupled_rank), ranks.coupled_rank);
    if (ok) return out;
  }
  throw NumericalError("generate_signals: no admissible draw after " +
                       std::to_string(kMaxAttempts) + " attempts");
}

ChannelStack add_noise(const ChannelStack& y, double sigma, const Vector& weights, std::uint64_t seed) {
  if (weights.size() != y.samples()) throw DimensionError("add_noise: weight length");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ChannelStack out = y;
  if (sigma == 0.0) return out;
  const Vector scale = weights.cwiseSqrt().cwiseInverse();
  for (int i = 0; i < y.num_channels(); ++i) {
    for (int t = 0; t < y.samples(); ++t) out.channel(i)(t) += sigma * scale(t) * normal(rng);
  }
  return out;
}

namespace {

double normalized_distance(const Matrix& A, int m) {
  const Vector s = singular_values(A);
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  if (m >= s.size()) return 0.0;
  return s.tail(s.size() - m).norm() / s(0);
}

}  // namespace

Violation violation(const ChannelStack& y, const RankSpec& spec) {
  Violation v;
  for (int i = 0; i < spec.num_channels(); ++i) {
    const int r = spec.per_channel_ranks[i];
    v.components.push_back(normalized_distance(hankel_map(y.channel(i), r), r));
  }
  v.components.push_back(
      normalized_distance(block_hankel_map(y, spec.coupled_rank), spec.coupled_rank));
  for (double c : v.components) v.vio = std::max(v.vio, c);
  return v;
}

ExperimentInstance make_instance(const GeneratedSignals& signals, const SystemSpec& spec, int index,
                                 std::uint64_t noise_seed) {
  ExperimentInstance inst;
  inst.index = index;
  inst.clean = signals.clean;
  inst.weights = WeightedLoss::alternating_weights(spec.samples);
  inst.observed = add_noise(signals.clean, spec.sigma, inst.weights, noise_seed);
  inst.spec = spec.rank_spec();
  inst.signal_seed = spec.seed;
  inst.noise_seed = noise_seed;
  return inst;
}

}  // namespace hpm
