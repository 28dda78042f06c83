#include <doctest.h>

#include <cmath>
#include <complex>

#include "hpm/errors.hpp"
#include "hpm/signal_lab.hpp"
#include "support.hpp"

using namespace hpm;

namespace {

Matrix coupled_matrix(const ChannelStack& y, int window) {
  Matrix L(window + 1, y.num_channels() * (y.samples() - window));
  for (int i = 0; i < y.num_channels(); ++i) {
    L.middleCols(i * (y.samples() - window), y.samples() - window) =
        test::hankel_from_definition(y.channel(i), window);
  }
  return L;
}

double oracle_component(const Matrix& A, int bound) {
  const Vector s = test::reference_singular_values(A);
  return s(0) == 0.0 ? 0.0 : test::reference_rank_distance(A, bound) / s(0);
}

}  // namespace

TEST_CASE("WeightedLoss value and gradient") {
  const ChannelStack observed = ChannelStack::from_channels({Vector::Ones(4), Vector::Zero(4)});
  const Vector w = WeightedLoss::alternating_weights(4);
  CHECK(w == (Vector(4) << 1, 10, 1, 10).finished());
  const WeightedLoss loss(observed, w);
  const Vector y = Vector::Zero(8);
  // Channel 1 contributes (1 + 10 + 1 + 10) / 2, channel 2 nothing.
  CHECK(loss.value(y) == doctest::Approx(11.0));
  CHECK(loss.value(observed.data()) == 0.0);
  const Vector g = loss.gradient(y);
  CHECK(g == (Vector(8) << -1, -10, -1, -10, 0, 0, 0, 0).finished());
  CHECK_THROWS_AS(WeightedLoss(observed, Vector::Ones(3)), PreconditionError);
  CHECK_THROWS_AS(WeightedLoss(observed, (Vector(4) << 1, 0, 1, 1).finished()), PreconditionError);
}

TEST_CASE("SystemSpec bounds and induced ranks") {
  SystemSpec spec;
  CHECK_NOTHROW(spec.validate());
  const RankSpec ranks = spec.rank_spec();
  CHECK(ranks.per_channel_ranks == std::vector<int>{4, 4});
  CHECK(ranks.coupled_rank == 6);
  CHECK(ranks.samples == 50);

  spec.n1 = 10;
  spec.n2 = 10;
  spec.nc = 5;  // 25 > floor(49 / 2)
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
  spec = {};
  spec.n1 = -1;
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
  spec = {};
  spec.sigma = -0.1;
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
}

TEST_CASE("generated signals meet every rank constraint") {
  for (const auto& [n1, n2, nc] : {std::tuple{2, 2, 2}, std::tuple{2, 6, 4}, std::tuple{3, 1, 1}, std::tuple{0, 0, 3}}) {
    for (std::uint64_t seed : {1u, 7u, 42u}) {
      SystemSpec spec;
      spec.n1 = n1;
      spec.n2 = n2;
      spec.nc = nc;
      spec.seed = seed;
      const GeneratedSignals sig = generate_signals(spec);
      const RankSpec ranks = spec.rank_spec();
      for (int i = 0; i < 2; ++i) {
        const Matrix H = test::hankel_from_definition(sig.clean.channel(i), ranks.per_channel_ranks[i]);
        CHECK(test::reference_rank_distance(H, ranks.per_channel_ranks[i]) <= 1e-8 * H.norm());
        // Unit RMS per channel.
        CHECK(sig.clean.channel(i).squaredNorm() / spec.samples == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(static_cast<int>(sig.poles[i].size()) == ranks.per_channel_ranks[i]);
        for (const auto& z : sig.poles[i]) CHECK(std::abs(std::abs(z) - 1.0) <= 1e-12);
      }
      for (int k = 0; k < nc; ++k) CHECK(sig.poles[0][k] == sig.poles[1][k]);
      const Matrix L = coupled_matrix(sig.clean, ranks.coupled_rank);
      CHECK(test::reference_rank_distance(L, ranks.coupled_rank) <= 1e-8 * L.norm());
      CHECK(sig.attempts >= 1);
      CHECK(violation(sig.clean, ranks).vio <= 1e-8);
    }
  }
}

TEST_CASE("channels sharing every pole keep the coupled rank at n_c") {
  SystemSpec spec;
  spec.n1 = 0;
  spec.n2 = 0;
  spec.nc = 3;
  const GeneratedSignals sig = generate_signals(spec);
  const Matrix L = coupled_matrix(sig.clean, 5);
  const Vector s = test::reference_singular_values(L);
  CHECK(s(3) <= 1e-8 * s(0));
  CHECK(s(2) > 1e-8 * s(0));
}

TEST_CASE("generation is deterministic per seed") {
  SystemSpec spec;
  spec.seed = 123;
  const GeneratedSignals a = generate_signals(spec);
  const GeneratedSignals b = generate_signals(spec);
  CHECK(a.clean.data() == b.clean.data());
  spec.seed = 124;
  CHECK(generate_signals(spec).clean.data() != a.clean.data());

  const Vector w = WeightedLoss::alternating_weights(spec.samples);
  CHECK(add_noise(a.clean, 0.1, w, 9).data() == add_noise(a.clean, 0.1, w, 9).data());
  CHECK(add_noise(a.clean, 0.1, w, 9).data() != add_noise(a.clean, 0.1, w, 10).data());
}

TEST_CASE("add_noise scales standard normals by sigma W^(-1/2)") {
  const GeneratedSignals sig = generate_signals(SystemSpec{});
  const Vector w = WeightedLoss::alternating_weights(50);
  CHECK(add_noise(sig.clean, 0.0, w, 3).data() == sig.clean.data());

  // 100 draws of 100 entries give 10^4 whitened samples.
  const double sigma = 0.1;
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ChannelStack noisy = add_noise(sig.clean, sigma, w, seed);
    for (int k = 0; k < 100; ++k) {
      const double e = std::sqrt(w(k % 50)) * (noisy.data()(k) - sig.clean.data()(k)) / sigma;
      sum += e;
      sum2 += e * e;
      ++count;
    }
  }
  const double mean = sum / count;
  const double variance = sum2 / count - mean * mean;
  CHECK(std::abs(variance - 1.0) <= 0.05);
  CHECK(std::abs(mean) <= 0.05);

  // Unit weights: the perturbation is sigma times the same normals.
  const Vector ones = Vector::Ones(50);
  const ChannelStack plain = add_noise(sig.clean, sigma, ones, 5);
  const ChannelStack weighted = add_noise(sig.clean, sigma, w, 5);
  for (int k = 0; k < 100; ++k) {
    const double xi = (plain.data()(k) - sig.clean.data()(k)) / sigma;
    CHECK(std::sqrt(w(k % 50)) * (weighted.data()(k) - sig.clean.data()(k)) / sigma == doctest::Approx(xi).epsilon(1e-12));
  }
}

TEST_CASE("violation metric") {
  const RankSpec spec{{1, 1}, 2, 9};
  CHECK(violation(ChannelStack(9, 2), spec).vio == 0.0);

  // Channel 1 breaks its rank-1 constraint; channel 2 is zero; the coupled rank-2 bound holds.
  Vector c1 = Vector::Zero(9);
  c1(4) = 1.0;
  const ChannelStack one_bad = ChannelStack::from_channels({c1, Vector::Zero(9)});
  const Violation v = violation(one_bad, spec);
  REQUIRE(v.components.size() == 3);
  CHECK(v.components[0] > 0.0);
  CHECK(v.components[1] == 0.0);
  CHECK(v.vio == v.components[0]);

  test::Sampler rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const ChannelStack y = rng.stack(9, 2);
    const Violation got = violation(y, spec);
    const double c0 = oracle_component(test::hankel_from_definition(y.channel(0), 1), 1);
    const double c1v = oracle_component(test::hankel_from_definition(y.channel(1), 1), 1);
    const double cc = oracle_component(coupled_matrix(y, 2), 2);
    CHECK(std::abs(got.components[0] - c0) <= 1e-12);
    CHECK(std::abs(got.components[1] - c1v) <= 1e-12);
    CHECK(std::abs(got.components[2] - cc) <= 1e-12);
    CHECK(got.vio == std::max({got.components[0], got.components[1], got.components[2]}));
  }
}

TEST_CASE("make_instance wires seeds and weights") {
  SystemSpec spec;
  spec.seed = 5;
  const GeneratedSignals sig = generate_signals(spec);
  const ExperimentInstance inst = make_instance(sig, spec, 3, 99);
  CHECK(inst.index == 3);
  CHECK(inst.signal_seed == 5);
  CHECK(inst.noise_seed == 99);
  CHECK(inst.clean.data() == sig.clean.data());
  CHECK(inst.weights == WeightedLoss::alternating_weights(50));
  CHECK(inst.observed.data() == add_noise(sig.clean, spec.sigma, inst.weights, 99).data());
  CHECK(inst.spec.coupled_rank == 6);
}
