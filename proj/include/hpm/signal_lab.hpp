#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "hpm/hankel.hpp"
#include "hpm/loss.hpp"

namespace hpm {

/// f(y) = sum_i 1/2 |y_i - ybar_i|_W^2 with a diagonal weight W shared by all channels.
class WeightedLoss final : public SmoothLoss {
 public:
  /// Throws PreconditionError unless every weight is positive and matches the channel length.
  WeightedLoss(ChannelStack observed, Vector weights);

  double value(const Vector& y) const override;
  Vector gradient(const Vector& y) const override;

  const ChannelStack& observed() const { return observed_; }
  const Vector& weights() const { return weights_; }

  /// W(i, i) = 1 on odd (1-based) samples and 10 on even ones.
  static Vector alternating_weights(int samples);

 private:
  ChannelStack observed_;
  Vector weights_;
  Vector stacked_weights_;
};

/// Two channels with private orders n1, n2 and n_c shared poles.
struct SystemSpec {
  int n1 = 2;
  int n2 = 2;
  int nc = 2;
  int samples = 50;
  double sigma = 0.1;
  std::uint64_t seed = 1;

  /// Throws PreconditionError unless orders are nonnegative, n_c + min(n1, n2) >= 1 and
  /// n1 + n2 + n_c <= floor((n - 1) / 2).
  void validate() const;
  /// r_i = n_i + n_c, r = n1 + n2 + n_c.
  RankSpec rank_spec() const;
};

struct GeneratedSignals {
  ChannelStack clean;
  std::vector<std::vector<std::complex<double>>> poles;  // per channel
  int attempts = 0;
};

/// Marginally stable signals whose Hankel matrices meet every constraint of rank_spec().
/// Throws NumericalError after 100 degenerate draws.
GeneratedSignals generate_signals(const SystemSpec& spec);

/// ybar = y + sigma * W^{-1/2} xi with xi i.i.d. standard normal drawn from `seed`.
ChannelStack add_noise(const ChannelStack& y, double sigma, const Vector& weights, std::uint64_t seed);

struct Violation {
  double vio = 0.0;
  /// One entry per channel constraint, then the coupled constraint.
  std::vector<double> components;
};

/// Largest of dist(A(y), rank <= m) / |A(y)|_2 over the constraints; a zero matrix scores 0.
Violation violation(const ChannelStack& y, const RankSpec& spec);

/// Everything needed to run the solvers on one noisy realization.
struct ExperimentInstance {
  int index = 0;
  ChannelStack clean;
  ChannelStack observed;
  Vector weights;
  RankSpec spec;
  std::uint64_t signal_seed = 0;
  std::uint64_t noise_seed = 0;
};

ExperimentInstance make_instance(const GeneratedSignals& signals, const SystemSpec& spec, int index,
                                 std::uint64_t noise_seed);

}  // namespace hpm
