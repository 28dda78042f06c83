#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hpm/hybrid.hpp"
#include "hpm/signal_lab.hpp"

namespace hpm {

/// Batch description read from a key = value file. Every solver default is baked in.
struct RunManifest {
  std::string experiment = "default";
  SystemSpec system;
  int instances = 1;
  /// Clean signals come from base_seed; instance k adds noise drawn from base_seed + 1 + k.
  std::uint64_t base_seed = 1;
  std::vector<std::string> methods = {"AP", "HB_1", "HB_2", "HB_3"};
  HybridConfig solver;
  std::string out_dir = "results";
  int workers = 1;
  bool traces = false;

  /// Throws PreconditionError on unknown methods, a negative instance count or workers < 1.
  void validate() const;
  /// Applies one `key = value` setting; throws PreconditionError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
};

RunManifest load_manifest(std::istream& in);
RunManifest load_manifest_file(const std::string& path);

struct ResultRow {
  std::string experiment;
  int instance = 0;
  std::uint64_t seed = 0;
  std::string method;
  double objective = 0.0;
  double vio_pre = 0.0;
  double vio_post = 0.0;
  double seconds = 0.0;
  long outer_iters = 0;
  long inner_iters = 0;
  /// "converged", "not_converged" or "error:<kind>".
  std::string flag;
  std::string message;
  HybridReport report;  // empty when the run failed
};

/// Generates the instances of a manifest (shared clean signals, per-instance noise).
std::vector<ExperimentInstance> make_instances(const RunManifest& manifest);

/// Runs every (instance, method) pair on `manifest.workers` threads. Rows come back ordered by
/// instance, then by the manifest's method order, regardless of completion order. A failing
/// run yields an error row instead of aborting the batch.
std::vector<ResultRow> run_manifest(const RunManifest& manifest);

/// Same, on explicit instances.
std::vector<ResultRow> run_instances(const RunManifest& manifest,
                                     const std::vector<ExperimentInstance>& instances);

ResultRow run_single(const RunManifest& manifest, const ExperimentInstance& instance,
                     const std::string& method);

extern const char* const kCsvHeader;
void write_csv(const std::vector<ResultRow>& rows, std::ostream& out);
void write_json(const RunManifest& manifest, const std::vector<ResultRow>& rows, bool traces,
                std::ostream& out);

/// Writes <out_dir>/results.csv and <out_dir>/results.json.
void cmd_run(const RunManifest& manifest);

/// Signal file: one channel per line, values separated by spaces or commas; '#' starts a comment.
/// Throws DimensionError on ragged or empty input and PreconditionError on malformed numbers.
ChannelStack read_signal(std::istream& in);
ChannelStack read_signal_file(const std::string& path);
void write_signal(const ChannelStack& y, std::ostream& out);

struct ProjectRequest {
  std::string input;
  std::string reference;  // empty: the zero signal
  std::string output;     // empty: no signal file
  int rank = 1;
  bool coupled = false;
  int channel = 0;
  SphereOptions sphere;
};

struct ProjectOutcome {
  ChannelStack point;
  PseudoProjectionResult result;
  KktReport kkt;
  std::string summary_json;
};

/// One pseudo-projection of the input (channel `channel`, or all channels when coupled).
ProjectOutcome cmd_project(const ProjectRequest& request);

/// Parsed results.csv: column name -> values, in row order.
struct ResultTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // throws PreconditionError if missing
};

ResultTable read_result_table(std::istream& in);

/// Writes figure1_objective.csv, figure2_vio.csv and figure2_time.csv into `out_dir`.
void cmd_plotdata(const std::string& results_csv, const std::string& out_dir);
void write_plotdata(const ResultTable& table, std::ostream& objective, std::ostream& vio,
                    std::ostream& time);

}  // namespace hpm
