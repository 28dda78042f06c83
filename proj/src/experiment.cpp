#include "hpm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpm/errors.hpp"

namespace hpm {

namespace {

const std::vector<std::string> kKnownMethods = {"AP", "HB_1", "HB_2", "HB_3"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\"'");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n\"'");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw PreconditionError("manifest: bad value for '" + key + "': '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw PreconditionError("manifest: bad boolean for '" + key + "': '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty() && item != "[" && item != "]") out.push_back(item);
  }
  return out;
}

PenaltyVariant::Tag tag_of(const std::string& method) {
  if (method == "HB_1") return PenaltyVariant::Tag::kI;
  if (method == "HB_2") return PenaltyVariant::Tag::kII;
  if (method == "HB_3") return PenaltyVariant::Tag::kIII;
  throw PreconditionError("unknown method '" + method + "'");
}

}  // namespace

namespace {

void check_methods(const std::vector<std::string>& methods) {
  for (const auto& m : methods) {
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end()) {
      throw PreconditionError("manifest: unknown method '" + m + "'");
    }
  }
}

}  // namespace

void RunManifest::validate() const {
  if (instances < 0) throw PreconditionError("manifest: negative instance count");
  if (workers < 1) throw PreconditionError("manifest: workers must be >= 1");
  if (methods.empty()) throw PreconditionError("manifest: empty method list");
  check_methods(methods);
  system.validate();
  solver.validate();
}

void RunManifest::set(const std::string& key, const std::string& value) {
  auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, value); };
  HybridConfig& s = solver;
  if (key == "experiment") experiment = trim(value);
  else if (key == "n1") num(system.n1);
  else if (key == "n2") num(system.n2);
  else if (key == "nc") num(system.nc);
  else if (key == "samples") num(system.samples);
  else if (key == "sigma") num(system.sigma);
  else if (key == "instances") num(instances);
  else if (key == "seed") num(base_seed);
  else if (key == "methods") {
    methods = split_list(value);
    check_methods(methods);
  }
  else if (key == "out") out_dir = trim(value);
  else if (key == "workers") num(workers);
  else if (key == "traces") traces = parse_bool(key, value);
  else if (key == "lambda0") num(s.lambda0);
  else if (key == "lambda_decay") num(s.lambda_decay);
  else if (key == "lambda_bar") num(s.lambda_bar);
  else if (key == "eps0") num(s.eps0);
  else if (key == "eps_decay") num(s.eps_decay);
  else if (key == "eps_floor") num(s.eps_floor);
  else if (key == "max_outer") num(s.max_outer_iterations);
  else if (key == "L_min") num(s.vnpg.L_min);
  else if (key == "L_max") num(s.vnpg.L_max);
  else if (key == "tau") num(s.vnpg.tau);
  else if (key == "c") num(s.vnpg.c);
  else if (key == "M") num(s.vnpg.M);
  else if (key == "inner_max_iters") num(s.vnpg.max_iters);
  else if (key == "inner_rel_tol") num(s.vnpg.rel_objective_tol);
  else if (key == "post_max_iters") num(s.post.max_iterations);
  else if (key == "post_tol") num(s.post.tolerance);
  else if (key == "sphere_max_iters") {
    num(s.vnpg.sphere.max_iterations);
    s.post.sphere.max_iterations = s.vnpg.sphere.max_iterations;
  } else if (key == "sphere_method") {
    const std::string m = trim(value);
    SphereMethod method;
    if (m == "newton") method = SphereMethod::kNewton;
    else if (m == "gradient") method = SphereMethod::kGradient;
    else throw PreconditionError("manifest: sphere_method must be newton or gradient");
    s.vnpg.sphere.method = method;
    s.post.sphere.method = method;
  } else {
    throw PreconditionError("manifest: unknown key '" + key + "'");
  }
}

RunManifest load_manifest(std::istream& in) {
  RunManifest manifest;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw PreconditionError(std::string("manifest: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string value;
    for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
    manifest.set(item.fullname(), value);
  }
  return manifest;
}

RunManifest load_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open manifest '" + path + "'");
  return load_manifest(in);
}

std::vector<ExperimentInstance> make_instances(const RunManifest& manifest) {
  SystemSpec spec = manifest.system;
  spec.seed = manifest.base_seed;
  const GeneratedSignals signals = generate_signals(spec);
  std::vector<ExperimentInstance> out;
  for (int k = 0; k < manifest.instances; ++k) {
    out.push_back(make_instance(signals, spec, k, manifest.base_seed + 1 + static_cast<std::uint64_t>(k)));
  }
  return out;
}

ResultRow run_single(const RunManifest& manifest, const ExperimentInstance& instance,
                     const std::string& method) {
  ResultRow row;
  row.experiment = manifest.experiment;
  row.instance = instance.index;
  row.seed = instance.noise_seed;
  row.method = method;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  row.objective = row.vio_pre = row.vio_post = row.seconds = nan;
  try {
    HybridConfig config = manifest.solver;
    if (method == "AP") {
      row.report = run_ap_baseline(instance, config);
    } else {
      config.variant = tag_of(method);
      row.report = run_hybrid(instance, config);
    }
    const HybridReport& r = row.report;
    row.objective = r.final_objective;
    row.vio_pre = r.vio_pre.vio;
    row.vio_post = r.vio_post.vio;
    row.seconds = r.seconds;
    row.outer_iters = static_cast<long>(r.outer.size());
    row.inner_iters = r.inner_iterations + r.post.iterations;
    bool converged = !r.post_processed || (r.post.converged && !r.post.aborted);
    for (const auto& o : r.outer) converged = converged && o.stop != VnpgStop::kIterationCap;
    row.flag = converged ? "converged" : "not_converged";
  } catch (const LineSearchError& e) {
    row.flag = "error:line_search";
    row.message = e.what();
  } catch (const InvariantError& e) {
    row.flag = "error:invariant";
    row.message = e.what();
  } catch (const NumericalError& e) {
    row.flag = "error:numerical";
    row.message = e.what();
  } catch (const PreconditionError& e) {
    row.flag = "error:precondition";
    row.message = e.what();
  } catch (const std::exception& e) {
    row.flag = "error:other";
    row.message = e.what();
  }
  return row;
}

std::vector<ResultRow> run_instances(const RunManifest& manifest,
                                     const std::vector<ExperimentInstance>& instances) {
  const std::size_t per_instance = manifest.methods.size();
  std::vector<ResultRow> rows(instances.size() * per_instance);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < rows.size(); task = next++) {
      rows[task] = run_single(manifest, instances[task / per_instance],
                              manifest.methods[task % per_instance]);
    }
  };
  const int threads = std::max(1, std::min<int>(manifest.workers, static_cast<int>(rows.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  return rows;
}

std::vector<ResultRow> run_manifest(const RunManifest& manifest) {
  manifest.validate();
  return run_instances(manifest, make_instances(manifest));
}

const char* const kCsvHeader =
    "experiment,instance,seed,method,objective,vio_pre,vio_post,seconds,outer_iters,inner_iters,flag";

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json channels_json(const ChannelStack& y) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < y.num_channels(); ++i) {
    const Vector c = y.channel(i);
    out.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  return out;
}

const char* stop_name(VnpgStop stop) {
  switch (stop) {
    case VnpgStop::kRelativeStep: return "relative_step";
    case VnpgStop::kRelativeObjective: return "relative_objective";
    case VnpgStop::kIterationCap: return "iteration_cap";
  }
  return "?";
}

nlohmann::json trace_json(const HybridReport& r) {
  nlohmann::json outer = nlohmann::json::array();
  for (const auto& o : r.outer) {
    outer.push_back({{"t", o.t},
                     {"lambda", o.lambda},
                     {"eps", o.eps},
                     {"started_from_feasible", o.started_from_feasible},
                     {"start_objective", o.start_objective},
                     {"final_objective", o.final_objective},
                     {"loss", o.loss},
                     {"distances", o.distances},
                     {"error_bound", o.error_bound},
                     {"min_slack", o.min_slack},
                     {"vnpg_iterations", o.vnpg_iterations},
                     {"stop", stop_name(o.stop)},
                     {"stationarity_surrogate", o.stationarity_surrogate},
                     {"objective_trace", o.trace.objective},
                     {"accepted_L", o.trace.accepted_L},
                     {"backtracks", o.trace.backtracks}});
  }
  std::vector<double> gaps;
  for (const auto& p : r.post.records) gaps.push_back(p.gap);
  return {{"outer", outer},
          {"post", {{"initial_gap", r.post.initial_gap},
                    {"gaps", gaps},
                    {"iterations", r.post.iterations},
                    {"converged", r.post.converged},
                    {"failures", r.post.failures}}}};
}

}  // namespace

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.instance << ',' << r.seed << ',' << r.method << ','
        << fmt(r.objective) << ',' << fmt(r.vio_pre) << ',' << fmt(r.vio_post) << ','
        << fmt(r.seconds) << ',' << r.outer_iters << ',' << r.inner_iters << ',' << r.flag << '\n';
  }
}

void write_json(const RunManifest& manifest, const std::vector<ResultRow>& rows, bool traces,
                std::ostream& out) {
  nlohmann::json doc;
  doc["experiment"] = manifest.experiment;
  doc["system"] = {{"n1", manifest.system.n1},        {"n2", manifest.system.n2},
                   {"nc", manifest.system.nc},        {"samples", manifest.system.samples},
                   {"sigma", manifest.system.sigma},  {"instances", manifest.instances},
                   {"seed", manifest.base_seed}};
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"instance", r.instance}, {"seed", r.seed},   {"method", r.method},
                        {"objective", r.objective}, {"vio_pre", r.vio_pre}, {"vio_post", r.vio_post},
                        {"seconds", r.seconds},   {"outer_iters", r.outer_iters},
                        {"inner_iters", r.inner_iters}, {"flag", r.flag}};
    if (!r.message.empty()) j["message"] = r.message;
    if (r.flag.rfind("error:", 0) != 0) {
      j["vio_pre_components"] = r.report.vio_pre.components;
      j["vio_post_components"] = r.report.vio_post.components;
      j["penalty_point"] = channels_json(r.report.penalty_point);
      j["final_point"] = channels_json(r.report.final_point);
      if (traces) j["trace"] = trace_json(r.report);
    }
    results.push_back(std::move(j));
  }
  doc["results"] = std::move(results);
  out << doc.dump(1) << '\n';
}

void cmd_run(const RunManifest& manifest) {
  const auto rows = run_manifest(manifest);
  std::filesystem::create_directories(manifest.out_dir);
  const std::filesystem::path dir(manifest.out_dir);
  std::ofstream csv(dir / "results.csv");
  std::ofstream json(dir / "results.json");
  if (!csv || !json) throw PreconditionError("cannot write into '" + manifest.out_dir + "'");
  write_csv(rows, csv);
  write_json(manifest, rows, manifest.traces, json);
}

ChannelStack read_signal(std::istream& in) {
  std::vector<Vector> channels;
  std::string line;
  while (std::getline(in, line)) {
    line = line.substr(0, line.find('#'));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) values.push_back(parse_number<double>("signal", token));
    if (values.empty()) continue;
    channels.push_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (channels.empty()) throw DimensionError("signal file: no data");
  for (const auto& c : channels) {
    if (c.size() != channels.front().size()) throw DimensionError("signal file: ragged channels");
  }
  return ChannelStack::from_channels(channels);
}

ChannelStack read_signal_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open signal file '" + path + "'");
  return read_signal(in);
}

void write_signal(const ChannelStack& y, std::ostream& out) {
  for (int i = 0; i < y.num_channels(); ++i) {
    for (int t = 0; t < y.samples(); ++t) out << (t ? " " : "") << fmt(y.channel(i)(t));
    out << '\n';
  }
}

ProjectOutcome cmd_project(const ProjectRequest& request) {
  const ChannelStack input = read_signal_file(request.input);
  const ChannelStack reference = request.reference.empty()
                                     ? ChannelStack(input.samples(), input.num_channels())
                                     : read_signal_file(request.reference);
  if (reference.samples() != input.samples() || reference.num_channels() != input.num_channels()) {
    throw DimensionError("reference signal shape differs from input");
  }
  if (!request.coupled && (request.channel < 0 || request.channel >= input.num_channels())) {
    throw DimensionError("channel index out of range");
  }

  ProjectOutcome out;
  out.point = input;
  if (request.coupled) {
    const auto setting = StructureSetting::coupled(input.samples(), input.num_channels(), request.rank);
    out.result = pseudo_project(input.data(), reference.data(), setting, request.sphere);
    out.kkt = kkt_check(out.result, input.data(), setting);
    out.point.data() = out.result.point;
  } else {
    const auto setting = StructureSetting::single_channel(input.samples(), request.rank, request.channel);
    const Vector target = input.channel(request.channel);
    out.result = pseudo_project(target, reference.channel(request.channel), setting, request.sphere);
    out.kkt = kkt_check(out.result, target, setting);
    out.point.channel(request.channel) = out.result.point;
  }

  const nlohmann::json summary = {
      {"psi", out.result.objective},
      {"converged", out.result.converged},
      {"iterations", out.result.iterations},
      {"improvement_ok", out.result.improvement_ok},
      {"rank_gap", out.result.rank_gap},
      {"kkt", {{"gradient", out.kkt.gradient_residual},
               {"multiplier", out.kkt.multiplier_residual},
               {"sphere", out.kkt.sphere_residual},
               {"constraint", out.kkt.constraint_residual},
               {"tolerance", out.kkt.tolerance},
               {"stationary", out.kkt.stationary}}},
      {"point", channels_json(out.point)}};
  out.summary_json = summary.dump(1);

  if (!request.output.empty()) {
    std::ofstream signal(request.output);
    std::ofstream json(request.output + ".json");
    if (!signal || !json) throw PreconditionError("cannot write '" + request.output + "'");
    write_signal(out.point, signal);
    json << out.summary_json << '\n';
  }
  return out;
}

int ResultTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw PreconditionError("results: missing column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

ResultTable read_result_table(std::istream& in) {
  ResultTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream fields(s);
    while (std::getline(fields, cell, ',')) out.push_back(trim(cell));
    return out;
  };
  while (std::getline(in, line) && trim(line).empty()) {
  }
  if (trim(line).empty()) throw PreconditionError("results: missing header");
  table.header = split(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto row = split(line);
    if (row.size() != table.header.size()) throw PreconditionError("results: ragged row");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_plotdata(const ResultTable& table, std::ostream& objective, std::ostream& vio,
                    std::ostream& time) {
  const int c_instance = table.column("instance");
  const int c_method = table.column("method");
  const int c_objective = table.column("objective");
  const int c_pre = table.column("vio_pre");
  const int c_post = table.column("vio_post");
  const int c_seconds = table.column("seconds");

  std::map<int, std::map<std::string, const std::vector<std::string>*>> by_instance;
  for (const auto& row : table.rows) {
    by_instance[parse_number<int>("instance", row[c_instance])][row[c_method]] = &row;
  }
  auto cell = [&](const std::map<std::string, const std::vector<std::string>*>& rows,
                  const std::string& method, int column) -> std::string {
    const auto it = rows.find(method);
    return it == rows.end() ? "nan" : (*it->second)[column];
  };
  auto log10_cell = [&](const auto& rows, const std::string& method, int column) {
    const std::string raw = cell(rows, method, column);
    const double v = std::strtod(raw.c_str(), nullptr);
    return fmt(std::log10(v));
  };

  const std::vector<std::string> hb = {"HB_1", "HB_2", "HB_3"};
  objective << "instance,AP,HB_1,HB_2,HB_3\n";
  vio << "instance";
  for (const auto& m : hb) vio << ',' << m << "_log10_vio_pre," << m << "_log10_vio_post";
  vio << '\n';
  time << "instance,HB_1,HB_2,HB_3\n";
  for (const auto& [instance, rows] : by_instance) {
    objective << instance;
    for (const auto& m : kKnownMethods) objective << ',' << cell(rows, m, c_objective);
    objective << '\n';
    vio << instance;
    for (const auto& m : hb) vio << ',' << log10_cell(rows, m, c_pre) << ',' << log10_cell(rows, m, c_post);
    vio << '\n';
    time << instance;
    for (const auto& m : hb) time << ',' << cell(rows, m, c_seconds);
    time << '\n';
  }
}

void cmd_plotdata(const std::string& results_csv, const std::string& out_dir) {
  std::ifstream in(results_csv);
  if (!in) throw PreconditionError("cannot open results '" + results_csv + "'");
  const ResultTable table = read_result_table(in);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  std::ofstream objective(dir / "figure1_objective.csv");
  std::ofstream vio(dir / "figure2_vio.csv");
  std::ofstream time(dir / "figure2_time.csv");
  if (!objective || !vio || !time) throw PreconditionError("cannot write into '" + out_dir + "'");
  write_plotdata(table, objective, vio, time);
}

}  // namespace hpm
