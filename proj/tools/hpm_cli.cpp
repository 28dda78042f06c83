// Batch driver: `run` a manifest, `project` one signal, turn results into `plotdata`.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpm/errors.hpp"
#include "hpm/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kSolverFailure = 3 };

int run_guarded(auto&& body) {
  try {
    body();
    return kOk;
  } catch (const hpm::NumericalError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const hpm::LineSearchError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const hpm::InvariantError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hankel rank-constrained estimation: penalty and alternating-projection solvers"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run every method of a manifest over its instances");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string methods;
  std::string out_dir;
  long long seed = -1;
  int workers = 0;
  bool traces = false;
  run->add_option("--config", config_path, "Manifest file (key = value)")->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Base seed");
  run->add_option("--methods", methods, "Comma-separated subset of AP,HB_1,HB_2,HB_3");
  run->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--traces", traces, "Store per-iteration traces in results.json");
  run->add_option("--set", overrides, "Override a manifest key, e.g. --set lambda_bar=1e-5");

  auto* project = app.add_subcommand("project", "Pseudo-project one signal onto a rank set");
  hpm::ProjectRequest request;
  project->add_option("input", request.input, "Signal file, one channel per line")->required();
  project->add_option("--rank", request.rank, "Rank bound m")->required();
  project->add_flag("--coupled", request.coupled, "Use the block Hankel matrix of all channels");
  project->add_option("--channel", request.channel, "Channel for the single-channel setting");
  project->add_option("--reference", request.reference, "Feasible reference signal (default: zero)");
  project->add_option("--out", request.output, "Projected signal file; a .json summary is written next to it");

  auto* plot = app.add_subcommand("plotdata", "Emit figure data files from results.csv");
  std::string results_csv;
  std::string plot_dir = ".";
  plot->add_option("results", results_csv, "results.csv produced by `run`")->required();
  plot->add_option("--out", plot_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*run) {
    return run_guarded([&] {
      hpm::RunManifest manifest =
          config_path.empty() ? hpm::RunManifest{} : hpm::load_manifest_file(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw hpm::PreconditionError("--set expects key=value");
        manifest.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (seed >= 0) manifest.base_seed = static_cast<std::uint64_t>(seed);
      if (!methods.empty()) manifest.set("methods", methods);
      if (!out_dir.empty()) manifest.out_dir = out_dir;
      if (workers > 0) manifest.workers = workers;
      if (traces) manifest.traces = true;
      hpm::cmd_run(manifest);
      std::cout << "wrote " << manifest.out_dir << "/results.csv\n";
    });
  }
  if (*project) {
    return run_guarded([&] { std::cout << hpm::cmd_project(request).summary_json << '\n'; });
  }
  return run_guarded([&] { hpm::cmd_plotdata(results_csv, plot_dir); });
}
