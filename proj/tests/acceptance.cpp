// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hpm/errors.hpp"
#include "hpm/experiment.hpp"
#include "support.hpp"

using namespace hpm;
using hpm::test::Sampler;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("criterion %2d %s  %-34s %8.2fs  %s\n", id, v.pass ? "PASS" : "FAIL", name.c_str(), secs,
              v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every channel obeys one random recurrence of order m, so the stacked Hankel matrix has a
// common left kernel.
Vector feasible_signal(Sampler& rng, const StructureSetting& s) {
  Vector y(s.d());
  const RowVector R = rng.row(s.p());
  for (int k = 0; k < s.num_channels; ++k) {
    Vector c = rng.vector(s.samples);
    for (int t = 0; t + s.m() < s.samples; ++t) {
      double acc = 0.0;
      for (int i = 0; i < s.m(); ++i) acc += R(i) * c(t + i);
      c(t + s.m()) = -acc / R(s.m());
    }
    y.segment(k * s.samples, s.samples) = c / c.norm();
  }
  return y;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double log_gap_slope(const std::vector<PostRecord>& records) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t t = 0; t < records.size(); ++t) {
    if (!(records[t].gap > 0.0)) continue;
    const double x = static_cast<double>(t), y = std::log10(records[t].gap);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

bool is_hb(const ResultRow& r) { return r.method != "AP"; }

Verdict adjoint_identities() {
  Sampler rng(101);
  const int sizes[] = {5, 20, 50};
  int trials = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = sizes[trial % 3];
    const int N = 1 + (trial / 3) % 3;
    const int window = rng.integer(0, (n - 1) / 2);
    // Per-channel operator.
    const Vector y = rng.vector(n);
    const Matrix W = rng.matrix(window + 1, n - window);
    const double lhs = (hankel_map(y, window).array() * W.array()).sum();
    const double rhs = y.dot(hankel_adjoint(W));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs) + y.norm() * W.norm()));
    // Block operator on N channels.
    const ChannelStack ys = rng.stack(n, N);
    const Matrix Wb = rng.matrix(window + 1, N * (n - window));
    const double lb = (block_hankel_map(ys, window).array() * Wb.array()).sum();
    const double rb = ys.data().dot(block_hankel_adjoint(Wb, n).data());
    worst = std::max(worst, std::abs(lb - rb) / std::max(1.0, std::abs(lb) + ys.data().norm() * Wb.norm()));
    ++trials;
  }
  return {worst <= 1e-12, fmt("%d instances, worst relative gap %.2e (tol 1e-12)", trials, worst)};
}

Verdict eckart_young() {
  Sampler rng(102);
  int beaten = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = rng.integer(2, 12), cols = rng.integer(2, 12);
    const Matrix Y = rng.matrix(rows, cols);
    const int k = rng.integer(0, std::min(rows, cols));
    const double best = (Y - rank_project(Y, k)).norm();
    for (int c = 0; c < 50; ++c) {
      // Half the candidates are random, half perturb the optimum.
      Matrix C = c % 2 ? rng.low_rank(rows, cols, k) : test::reference_rank_project(Y + 1e-3 * rng.matrix(rows, cols), k);
      const double margin = best - (Y - C).norm();
      worst = std::max(worst, margin);
      if (margin > 1e-10) ++beaten;
    }
  }
  return {beaten == 0, fmt("200 matrices x 50 candidates, %d beat the projection, max margin %.2e (tol 1e-10)",
                           beaten, worst)};
}

Verdict psi_gradient() {
  Sampler rng(103);
  constexpr double h = 1e-6;
  double worst = 0.0;
  int points = 0;
  for (const auto& setting : {StructureSetting::single_channel(50, 4), StructureSetting::coupled(50, 2, 6)}) {
    for (int trial = 0; trial < 100; ++trial) {
      const RowVector R = rng.row(setting.p()).normalized();
      const Vector yhat = rng.vector(setting.d());
      const RowVector grad = psi_value_and_gradient(R, yhat, setting).gradient;
      for (int j = 0; j < setting.p(); ++j) {
        const RowVector e = RowVector::Unit(setting.p(), j);
        const double fd =
            (inner_solve(R + h * e, yhat, setting).psi - inner_solve(R - h * e, yhat, setting).psi) / (2 * h);
        worst = std::max(worst, std::abs(grad(j) - fd));
      }
      ++points;
    }
  }
  return {worst <= 1e-5, fmt("%d points, worst |analytic - central FD| %.2e (tol 1e-5)", points, worst)};
}

Verdict projection_contract() {
  Sampler rng(104);
  int improved = 0, exact = 0, kkt_ok = 0, silent = 0, flagged = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto setting = trial % 2 ? StructureSetting::single_channel(50, 4) : StructureSetting::coupled(50, 2, 6);
    const Vector y_b = feasible_signal(rng, setting);
    const Vector yhat = y_b + rng.uniform(0.01, 1.0) * rng.vector(setting.d()) / std::sqrt(setting.d());
    const PseudoProjectionResult r = pseudo_project(yhat, y_b, setting);
    if ((r.point - yhat).norm() <= (y_b - yhat).norm() + 1e-12 * (1.0 + yhat.norm())) ++improved;
    if (!r.rank_exact()) continue;
    ++exact;
    const KktReport kkt = kkt_check(r, yhat, setting);
    const bool ok = kkt.gradient_residual <= 1e-6 && kkt.multiplier_residual <= 1e-6 &&
                    kkt.sphere_residual <= 1e-6 && kkt.constraint_residual <= 1e-6;
    if (ok) {
      ++kkt_ok;
    } else if (r.converged) {
      ++silent;
    } else {
      ++flagged;
    }
  }
  const bool pass = improved == 200 && kkt_ok >= 0.95 * exact && silent == 0;
  return {pass, fmt("improvement %d/200; KKT <= 1e-6 on %d/%d rank-exact solves (need 95%%), %d flagged, %d unflagged",
                    improved, kkt_ok, exact, flagged, silent)};
}

Verdict tiny_oracle() {
  Sampler rng(105);
  const auto setting = StructureSetting::single_channel(3, 1);
  double worst = 0.0;
  int rank_one = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector yhat = rng.vector(3);
    // Rank-1 Hankel vectors: c [1, z, z^2] and the limit [0, 0, c]. For fixed z the best c is
    // a least-squares coefficient, so scanning z covers the whole variety.
    double best = 0.5 * (yhat(0) * yhat(0) + yhat(1) * yhat(1));
    for (double z = -100.0; z <= 100.0; z += 1e-4) {
      const double v2 = 1.0 + z * z + z * z * z * z;
      const double p = yhat(0) + z * yhat(1) + z * z * yhat(2);
      best = std::min(best, 0.5 * (yhat.squaredNorm() - p * p / v2));
    }
    const PseudoProjectionResult r = pseudo_project(yhat, Vector::Zero(3), setting);
    worst = std::max(worst, std::abs(r.objective - best));
    if (numerical_rank(hankel_map(r.point, 1)) == 1) ++rank_one;
  }
  return {worst <= 1e-4 && rank_one == 20,
          fmt("20 targets, worst |objective - grid| %.2e (tol 1e-4), rank one on %d/20", worst, rank_one)};
}

struct Batch {
  std::vector<ResultRow> rows;
  double seconds = 0.0;
};

Batch run_reproduction() {
  RunManifest m;
  m.experiment = "acceptance";
  m.instances = 20;
  m.base_seed = 2024;
  m.workers = 1;
  const auto start = std::chrono::steady_clock::now();
  Batch b;
  b.rows = run_manifest(m);
  b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return b;
}

Verdict error_bound(const Batch& batch) {
  int runs = 0, records = 0, violations = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : batch.rows) {
    if (!is_hb(r) || r.instance >= 10) continue;
    if (r.flag.rfind("error:", 0) == 0) return {false, "run failed: " + r.message};
    ++runs;
    for (const auto& rec : r.report.outer) {
      ++records;
      worst = std::min(worst, rec.min_slack);
      if (rec.min_slack < -1e-8) ++violations;
    }
  }
  return {runs == 30 && violations == 0,
          fmt("%d HB runs, %d outer iterations, min slack %.2e (need >= -1e-8)", runs, records, worst)};
}

Verdict line_search(const Batch& batch) {
  int exhausted = 0, steps = 0, bad = 0, calls = 0;
  for (const auto& r : batch.rows) {
    if (r.flag == "error:line_search") ++exhausted;
    for (const auto& rec : r.report.outer) {
      ++calls;
      const auto& tr = rec.trace;
      const auto& F = tr.objective;
      constexpr int M = 4;
      constexpr double c = 1e-4;
      for (std::size_t l = 0; l < tr.step_norms.size(); ++l) {
        const std::size_t lo = l >= M ? l - M : 0;
        const double ref = *std::max_element(F.begin() + static_cast<std::ptrdiff_t>(lo),
                                             F.begin() + static_cast<std::ptrdiff_t>(l) + 1);
        const double s = tr.step_norms[l];
        ++steps;
        // Slack only for evaluation rounding of F.
        if (F[l + 1] > ref - 0.5 * c * s * s + 1e-12 * (1.0 + std::abs(ref))) ++bad;
        if (tr.accepted_L[l] > 1e8) ++bad;
      }
    }
  }
  return {exhausted == 0 && bad == 0,
          fmt("%d vNPG calls, %d accepted steps, %d exhausted L_max, %d replay violations", calls, steps, exhausted, bad)};
}

Verdict reproduction(const Batch& batch) {
  std::vector<double> ap(20, std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : batch.rows) {
    if (r.method == "AP") ap[r.instance] = r.objective;
  }
  int beats[3] = {0, 0, 0};
  std::vector<double> pre, post;
  double worst_vio = 0.0;
  int errors = 0;
  for (const auto& r : batch.rows) {
    if (r.flag.rfind("error:", 0) == 0) ++errors;
    if (!is_hb(r)) continue;
    const int v = r.method.back() - '1';
    if (r.objective <= ap[r.instance]) ++beats[v];
    pre.push_back(r.vio_pre);
    post.push_back(r.vio_post);
    worst_vio = std::max(worst_vio, std::isnan(r.vio_post) ? std::numeric_limits<double>::infinity() : r.vio_post);
  }
  const double med_pre = median(pre), med_post = median(post);
  const bool a = beats[0] >= 18 && beats[1] >= 18 && beats[2] >= 18;
  const bool b = med_post <= 1e-2 * med_pre;
  const bool c = worst_vio <= 1e-6;
  return {a && b && c && errors == 0,
          fmt("(a) HB <= AP on %d/%d/%d of 20 (need 18) %s; (b) median vio %.2e -> %.2e %s; (c) max HB vio %.2e %s; "
              "%d errors; batch %.0fs",
              beats[0], beats[1], beats[2], a ? "ok" : "no", med_pre, med_post, b ? "ok" : "no", worst_vio,
              c ? "ok" : "no", errors, batch.seconds)};
}

Verdict post_rate(const Batch& batch) {
  int good = 0, total = 0;
  double worst = -std::numeric_limits<double>::infinity();
  std::vector<double> slopes;
  for (const auto& r : batch.rows) {
    if (!is_hb(r) || !r.report.post_processed) continue;
    ++total;
    const double slope = log_gap_slope(r.report.post.records);
    slopes.push_back(slope);
    if (slope <= -0.05) ++good;
    if (!std::isnan(slope)) worst = std::max(worst, slope);
  }
  return {total > 0 && good >= 0.8 * total,
          fmt("slope <= -0.05 on %d/%d post-processing runs (need 80%%), median slope %.3f, worst %.3f", good, total,
              median(slopes), worst)};
}

Verdict determinism(const Batch& first) {
  const Batch second = run_reproduction();
  if (second.rows.size() != first.rows.size()) return {false, "row count differs"};
  double worst = 0.0;
  for (std::size_t k = 0; k < first.rows.size(); ++k) {
    const auto& a = first.rows[k];
    const auto& b = second.rows[k];
    if (a.method != b.method || a.instance != b.instance || a.flag != b.flag) return {false, "row keys differ"};
    for (const auto& [x, y] : {std::pair{a.objective, b.objective}, std::pair{a.vio_pre, b.vio_pre},
                               std::pair{a.vio_post, b.vio_post}}) {
      worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(x)));
    }
  }
  return {worst <= 1e-10, fmt("%zu rows rerun, max difference %.2e (tol 1e-10)", first.rows.size(), worst)};
}

}  // namespace

int main() {
  report(1, "operator adjoint identities", adjoint_identities);
  report(2, "Eckart-Young oracle", eckart_young);
  report(3, "Psi gradient vs finite differences", psi_gradient);
  report(4, "pseudo-projection contract", projection_contract);
  report(5, "n = 3 grid oracle", tiny_oracle);

  std::printf("running the 20-instance reproduction batch...\n");
  std::fflush(stdout);
  Batch batch;
  try {
    batch = run_reproduction();
  } catch (const std::exception& e) {
    std::printf("reproduction batch failed: %s\n", e.what());
  }
  report(6, "penalty distance bound", [&] { return error_bound(batch); });
  report(7, "line search well-defined", [&] { return line_search(batch); });
  report(8, "reproduction at desk scale", [&] { return reproduction(batch); });
  report(9, "post-processing rate", [&] { return post_rate(batch); });
  report(10, "determinism", [&] { return determinism(batch); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
