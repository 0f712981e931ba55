#include "npresid/cli.hpp"

#include "npresid/csv_io.hpp"
#include "npresid/dcov.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace npresid::cli {

// ---------------------------------------------------------------------------
// Experiment config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  if (!(alpha > 0.0 && alpha < 1.0)) problems.push_back("alpha must lie in (0, 1)");
  if (replications < 1) problems.push_back("replications must be >= 1");
  if (sigma_w.empty()) problems.push_back("sigma_w grid must be nonempty");
  if (dims.empty()) problems.push_back("dims must be nonempty");
  for (double s : sigma_w) {
    if (!(s >= 0.0) || !std::isfinite(s)) problems.push_back("sigma_w values must be >= 0");
  }
  for (std::size_t d : dims) {
    if (d < 1) problems.push_back("dims entries must be >= 1");
  }
  if (B < kMinBootstrapReplicates) {
    problems.push_back("B must be >= " + std::to_string(kMinBootstrapReplicates));
  }
  if (permutations < kMinPermutations) {
    problems.push_back("permutations must be >= " + std::to_string(kMinPermutations));
  }
  if (n < kMinTestSampleSize) problems.push_back("n must be >= " + std::to_string(kMinTestSampleSize));
  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : " ") + problems[i];
    throw ValidationError(msg);
  }
}

ExperimentConfig parse_experiment_config(const std::string& json_text, bool paper_scale) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");

  static const std::set<std::string> known{
      "scenario", "sigma_w", "dims",   "sigma_e", "sigma_z",          "n",    "replications",
      "B",        "alpha",   "bandwidth", "refit_bandwidths", "seed", "out",  "method",
      "permutations"};
  std::vector<std::string> unknown;
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "schema error: unknown config keys:";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ValidationError(msg);
  }

  ExperimentConfig c;
  if (paper_scale) {
    c.n = kPaperN;
    c.B = kPaperB;
    c.replications = kPaperReplications;
  }
  std::vector<std::string> bad;
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      bad.push_back(key);
    }
  };
  read("scenario", c.scenario);
  read("dims", c.dims);
  read("sigma_e", c.sigma_e);
  read("sigma_z", c.sigma_z);
  read("n", c.n);
  read("replications", c.replications);
  read("B", c.B);
  read("alpha", c.alpha);
  read("refit_bandwidths", c.refit_bandwidths);
  read("out", c.out);
  read("permutations", c.permutations);
  if (j.contains("sigma_w")) {
    if (j["sigma_w"].is_number()) {
      c.sigma_w = {j["sigma_w"].get<double>()};
    } else {
      read("sigma_w", c.sigma_w);
    }
  }
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read("seed", s);
    c.seed = s;
  }
  if (j.contains("bandwidth")) {
    std::string name;
    read("bandwidth", name);
    if (!name.empty()) c.bandwidth = parse_bandwidth_method(name);
  }
  if (j.contains("method")) {
    std::string name;
    read("method", name);
    if (!name.empty()) c.method = parse_histogram_method(name);
  }
  if (!bad.empty()) {
    std::string msg = "schema error: wrong type for config keys:";
    for (const auto& k : bad) msg += " '" + k + "'";
    throw ValidationError(msg);
  }
  make_scenario(c.scenario);  // rejects unknown names
  return c;
}

// ---------------------------------------------------------------------------
// Power table
// ---------------------------------------------------------------------------

std::string power_table_header() {
  return "d,sigma_w,n,replications,rejection_rate,mean_p_value,seed";
}

std::string format_power_row(const PowerRow& r) {
  return std::to_string(r.d) + "," + format_double(r.sigma_w) + "," + std::to_string(r.n) + "," +
         std::to_string(r.replications) + "," + format_double(r.rejection_rate) + "," +
         format_double(r.mean_p_value) + "," + std::to_string(r.seed);
}

std::vector<PowerRow> read_power_table(std::istream& in) {
  std::vector<PowerRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != power_table_header()) {
    throw ValidationError("existing power table has an unexpected header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) break;  // truncated trailing row from an interrupted run
    PowerRow r;
    r.d = std::stoul(cells[0]);
    r.sigma_w = std::stod(cells[1]);
    r.n = std::stoul(cells[2]);
    r.replications = std::stoul(cells[3]);
    r.rejection_rate = std::stod(cells[4]);
    r.mean_p_value = std::stod(cells[5]);
    r.seed = std::stoull(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

SeedSpec grid_job(std::uint64_t seed, std::size_t d, double sigma_w) {
  return {seed, hash_combine(d, std::bit_cast<std::uint64_t>(sigma_w))};
}

CiTestConfig test_config(const ExperimentConfig& c, const SeedSpec& seed) {
  CiTestConfig t;
  t.bootstrap_replicates = c.B;
  t.bandwidth_method = c.bandwidth;
  t.refit_bandwidths = c.refit_bandwidths;
  t.seed = seed;
  return t;
}

Scenario experiment_scenario(const ExperimentConfig& c, std::size_t d, double sigma_w) {
  if (c.scenario == "gaussian-latent") {
    return make_scenario(c.scenario, {{"sigma_w", sigma_w},
                                      {"sigma_e", c.sigma_e},
                                      {"sigma_z", c.sigma_z},
                                      {"d", static_cast<double>(d)}});
  }
  return make_scenario(c.scenario);
}

}  // namespace

std::vector<PowerRow> run_power(const ExperimentConfig& config,
                                const std::vector<PowerRow>& existing,
                                const std::function<void(const PowerRow&)>& emit) {
  config.validate();
  if (!config.seed) throw Error("run_power: seed must be resolved");
  std::vector<PowerRow> rows;
  for (std::size_t d : config.dims) {
    for (double sw : config.sigma_w) {
      const auto done = std::find_if(existing.begin(), existing.end(), [&](const PowerRow& r) {
        return r.d == d && r.sigma_w == sw;
      });
      if (done != existing.end()) {
        if (done->n != config.n || done->replications != config.replications ||
            done->seed != *config.seed) {
          throw ValidationError("existing power table was produced by a different config");
        }
        rows.push_back(*done);
        continue;
      }
      const Scenario scenario = experiment_scenario(config, d, sw);
      const std::vector<double> p =
          pvalue_histogram(scenario, config.n, config.replications,
                           test_config(config, grid_job(*config.seed, d, sw)), config.method,
                           config.permutations);
      PowerRow row{d, sw, config.n, config.replications, 0.0, 0.0, *config.seed};
      for (double v : p) {
        row.rejection_rate += v <= config.alpha ? 1.0 : 0.0;
        row.mean_p_value += v;
      }
      row.rejection_rate /= static_cast<double>(p.size());
      row.mean_p_value /= static_cast<double>(p.size());
      rows.push_back(row);
      emit(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

namespace {

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or to `out` when path is empty.
template <typename Fn>
void write_output(const std::string& path, std::ostream& out, Fn&& fn) {
  if (path.empty()) {
    fn(out);
    return;
  }
  std::ofstream file(path);
  if (!file) throw ValidationError("cannot write '" + path + "'");
  fn(file);
}

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> B;
  std::optional<double> alpha;
  std::optional<std::string> bandwidth;
  bool paper_scale = false;
  int threads = 0;
  std::string out;
};

void add_seed(CLI::App* app, CommonFlags& f) {
  app->add_option("--seed", f.seed, "Master seed (drawn from entropy and recorded when omitted)");
}
void add_threads_out(CLI::App* app, CommonFlags& f) {
  app->add_option("--threads", f.threads, "Worker threads (default: NPRESID_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--out", f.out, "Output file (default: stdout)");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& a,
                           const std::optional<std::uint64_t>& b = std::nullopt) {
  if (a) return *a;
  if (b) return *b;
  return entropy_seed();
}

int cmd_test(const std::string& csv, const CommonFlags& f, bool freeze, std::ostream& out) {
  const Dataset data = read_dataset_csv_file(csv);
  CiTestConfig config;
  config.bootstrap_replicates = f.B.value_or(kDeskB);
  if (f.bandwidth) config.bandwidth_method = parse_bandwidth_method(*f.bandwidth);
  config.refit_bandwidths = !freeze;
  config.seed = {resolve_seed(f.seed), 0};
  const CiTestResult result = run_test(data, config);
  write_output(f.out, out, [&](std::ostream& o) { o << to_json_string(result) << '\n'; });
  return kSuccess;
}

int cmd_residuals(const std::string& csv, const CommonFlags& f, const std::string& diag_path,
                  std::ostream& out, std::ostream& err) {
  const Dataset data = read_dataset_csv_file(csv);
  const BandwidthMethod method =
      f.bandwidth ? parse_bandwidth_method(*f.bandwidth) : BandwidthMethod::LeastSquaresCv;
  const TransformModels models = fit_transform_models(data, method);
  const ResidualVector rv = build_residual_vector(data, *models.fx, *models.fy, models.fz);
  write_output(f.out, out, [&](std::ostream& o) { write_residual_csv(o, rv); });

  nlohmann::ordered_json diag;
  diag["n"] = data.size();
  diag["d"] = data.dim();
  diag["clip_epsilon"] = rv.clip_epsilon;
  diag["residual_ks"] = residual_ks_distances(rv);
  diag["bandwidth"] = to_string(method);
  nlohmann::ordered_json bws = nlohmann::ordered_json::array();
  for (const auto& b : model_bandwidths(models)) {
    bws.push_back({{"response", b.response}, {"conditioning", b.conditioning}});
  }
  diag["bandwidths"] = bws;
  if (diag_path.empty()) {
    err << diag.dump() << '\n';
  } else {
    write_output(diag_path, err, [&](std::ostream& o) { o << diag.dump(2) << '\n'; });
  }
  return kSuccess;
}

ExperimentConfig load_config(const std::string& path, const CommonFlags& f) {
  ExperimentConfig c = parse_experiment_config(read_file(path), f.paper_scale);
  if (f.B) c.B = *f.B;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.bandwidth) c.bandwidth = parse_bandwidth_method(*f.bandwidth);
  if (!f.out.empty()) c.out = f.out;
  c.seed = resolve_seed(f.seed, c.seed);
  c.validate();
  return c;
}

int cmd_power(const std::string& config_path, const CommonFlags& f, std::ostream& out) {
  const ExperimentConfig c = load_config(config_path, f);
  if (c.out.empty()) {
    out << power_table_header() << '\n';
    run_power(c, {}, [&](const PowerRow& r) { out << format_power_row(r) << '\n' << std::flush; });
    return kSuccess;
  }
  std::vector<PowerRow> existing;
  if (std::filesystem::exists(c.out)) {
    std::ifstream in(c.out);
    existing = read_power_table(in);
  }
  // Rewrite the completed rows so a truncated trailing line is dropped.
  {
    std::ofstream file(c.out, std::ios::trunc);
    if (!file) throw ValidationError("cannot write '" + c.out + "'");
    file << power_table_header() << '\n';
  }
  auto append = [&](const PowerRow& r) {
    std::ofstream file(c.out, std::ios::app);
    file << format_power_row(r) << '\n';
  };
  // Keep canonical grid order: completed rows are re-emitted in place.
  std::vector<PowerRow> emitted;
  const auto rows = run_power(c, existing, [&](const PowerRow& r) { emitted.push_back(r); append(r); });
  // A resumed run appended fresh rows after the old ones; rewrite in grid order.
  if (!existing.empty()) {
    std::ofstream file(c.out, std::ios::trunc);
    file << power_table_header() << '\n';
    for (const auto& r : rows) file << format_power_row(r) << '\n';
  }
  return kSuccess;
}

int cmd_hist(const std::string& config_path, const CommonFlags& f,
             const std::optional<std::string>& method, std::ostream& out) {
  ExperimentConfig c = load_config(config_path, f);
  if (method) c.method = parse_histogram_method(*method);
  if (c.scenario != "modulo-counterexample") {
    throw ValidationError("hist reproduces the modulo counterexample; set scenario to "
                          "'modulo-counterexample'");
  }
  const Scenario scenario = make_scenario(c.scenario);
  CiTestConfig t = test_config(c, {*c.seed, 0});
  const std::vector<double> p =
      pvalue_histogram(scenario, c.n, c.replications, t, c.method, c.permutations);
  write_output(c.out, out, [&](std::ostream& o) {
    o << "replicate,method,n,seed,p_value\n";
    for (std::size_t r = 0; r < p.size(); ++r) {
      o << r << ',' << to_string(c.method) << ',' << c.n << ',' << *c.seed << ','
        << format_double(p[r]) << '\n';
    }
  });
  return kSuccess;
}

int cmd_gen(const std::string& scenario_name, std::size_t n,
            const std::vector<std::string>& params, const CommonFlags& f, std::ostream& out,
            std::ostream& err) {
  std::map<std::string, double> values;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ValidationError("--param expects key=value, got '" + p + "'");
    try {
      values[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    } catch (const std::exception&) {
      throw ValidationError("--param " + p + ": value is not a number");
    }
  }
  const Scenario s = make_scenario(scenario_name, values);
  const std::uint64_t seed = resolve_seed(f.seed);
  if (!f.seed) err << "seed: " << seed << '\n';
  const Dataset data = generate(s, n, {seed, 0});
  write_output(f.out, out, [&](std::ostream& o) { write_dataset_csv(o, data); });
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonparametric residuals and conditional independence testing", "npresid"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string input;
  bool freeze = false;
  std::string diag_path;
  std::optional<std::string> method;
  std::string scenario = "gaussian-latent";
  std::size_t gen_n = 200;
  std::vector<std::string> params;

  auto* test = app.add_subcommand("test", "Run the conditional independence test on a CSV file");
  test->add_option("csv", input, "CSV with header x,y,z1..zd")->required();
  add_seed(test, f);
  test->add_option("--B", f.B, "Bootstrap replicates");
  test->add_option("--bandwidth", f.bandwidth, "least-squares-cv (default) or rule-of-thumb");
  test->add_flag("--freeze-bandwidths", freeze, "Reuse the observed-data bandwidths in the bootstrap");
  add_threads_out(test, f);

  auto* residuals = app.add_subcommand("residuals", "Export the residual transform of a CSV file");
  residuals->add_option("csv", input, "CSV with header x,y,z1..zd")->required();
  residuals->add_option("--bandwidth", f.bandwidth, "least-squares-cv (default) or rule-of-thumb");
  residuals->add_option("--diag", diag_path, "Write KS diagnostics JSON here (default: stderr)");
  add_threads_out(residuals, f);

  auto* power = app.add_subcommand("power", "Power curve over a (d, sigma_w) grid");
  auto* hist = app.add_subcommand("hist", "p-value list for the modulo counterexample");
  for (auto* sub : {power, hist}) {
    sub->add_option("config", input, "JSON experiment config")->required();
    add_seed(sub, f);
    sub->add_option("--B", f.B, "Bootstrap replicates");
    sub->add_option("--alpha", f.alpha, "Significance level");
    sub->add_option("--bandwidth", f.bandwidth, "rule-of-thumb or least-squares-cv");
    sub->add_flag("--paper-scale", f.paper_scale, "n=500, B=1000, replications=500 presets");
    add_threads_out(sub, f);
  }
  hist->add_option("--method", method, "full-test or partial-dcov");

  auto* gen = app.add_subcommand("gen", "Generate a scenario dataset as CSV");
  gen->add_option("--scenario", scenario, "Scenario name")->capture_default_str();
  gen->add_option("--n", gen_n, "Sample size")->capture_default_str();
  gen->add_option("--param", params, "Scenario parameter key=value (repeatable)");
  add_seed(gen, f);
  add_threads_out(gen, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUserError;
  }

  try {
    set_thread_count(f.threads);
    if (test->parsed()) return cmd_test(input, f, freeze, out);
    if (residuals->parsed()) return cmd_residuals(input, f, diag_path, out, err);
    if (power->parsed()) return cmd_power(input, f, out);
    if (hist->parsed()) return cmd_hist(input, f, method, out);
    if (gen->parsed()) return cmd_gen(scenario, gen_n, params, f, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace npresid::cli
