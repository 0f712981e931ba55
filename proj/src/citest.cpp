#include "npresid/citest.hpp"

#include "npresid/dcov.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>

namespace npresid {

void CiTestConfig::validate() const {
  if (bootstrap_replicates < kMinBootstrapReplicates) {
    throw ValidationError("bootstrap replicates must be at least " +
                          std::to_string(kMinBootstrapReplicates) + ", got " +
                          std::to_string(bootstrap_replicates));
  }
}

double bootstrap_p_value(double statistic, std::span<const double> bootstrap_statistics) {
  const auto count = std::count_if(bootstrap_statistics.begin(), bootstrap_statistics.end(),
                                   [&](double b) { return b >= statistic; });
  return (1.0 + static_cast<double>(count)) /
         (static_cast<double>(bootstrap_statistics.size()) + 1.0);
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

namespace {

std::optional<Matrix> weight_cache(const CdfPtr& model, const Matrix& z) {
  const auto* kernel = dynamic_cast<const KernelCdfModel*>(model.get());
  if (!kernel) return std::nullopt;
  const auto n_rows = static_cast<std::size_t>(z.rows());
  const auto d = static_cast<std::size_t>(z.cols());
  Matrix w(z.rows(), static_cast<Eigen::Index>(kernel->size()));
  parallel_for(n_rows, [&](std::size_t r) {
    kernel->weights(std::span<const double>(z.data() + r * d, d),
                    std::span<double>(w.data() + r * kernel->size(), kernel->size()));
  });
  return w;
}

}  // namespace

BootstrapSampler::BootstrapSampler(TransformModels models, Matrix z)
    : models_(std::move(models)), z_(std::move(z)) {
  if (models_.fx->conditioning_dim() != static_cast<std::size_t>(z_.cols()) ||
      models_.fy->conditioning_dim() != static_cast<std::size_t>(z_.cols())) {
    throw Error("bootstrap: model dimensions do not match the conditioning sample");
  }
  fx_weights_ = weight_cache(models_.fx, z_);
  fy_weights_ = weight_cache(models_.fy, z_);
}

double BootstrapSampler::invert(const ConditionalCdf& model, const Matrix* cache, double u,
                                std::size_t row) const {
  if (cache) {
    const auto& kernel = static_cast<const KernelCdfModel&>(model);
    return kernel.quantile_with_weights(
        u, std::span<const double>(cache->data() + row * kernel.size(), kernel.size()));
  }
  const auto d = static_cast<std::size_t>(z_.cols());
  return model.quantile(u, std::span<const double>(z_.data() + row * d, d));
}

Dataset BootstrapSampler::draw(RandomStream& rng, std::vector<std::size_t>* rows) const {
  const auto n = static_cast<std::size_t>(z_.rows());
  std::vector<double> x(n), y(n);
  Matrix z(z_.rows(), z_.cols());
  if (rows) rows->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = rng.index(n);
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    z.row(static_cast<Eigen::Index>(i)) = z_.row(static_cast<Eigen::Index>(src));
    x[i] = invert(*models_.fx, fx_weights_ ? &*fx_weights_ : nullptr, u1, src);
    y[i] = invert(*models_.fy, fy_weights_ ? &*fy_weights_ : nullptr, u2, src);
    if (rows) (*rows)[i] = src;
  }
  return Dataset(std::move(x), std::move(y), std::move(z));
}

double bootstrap_replicate(const BootstrapSampler& sampler, std::size_t replicate,
                           const CiTestConfig& config) {
  try {
    RandomStream rng = make_stream(substream(config.seed, replicate));
    const Dataset boot = sampler.draw(rng);
    std::optional<std::vector<Bandwidths>> frozen;
    if (!config.refit_bandwidths) frozen = model_bandwidths(sampler.models());
    const TransformModels refit = fit_transform_models(boot, config.bandwidth_method, frozen);
    const ResidualVector rv = build_residual_vector(boot, *refit.fx, *refit.fy, refit.fz);
    return energy_statistic(rv.t).statistic;
  } catch (const std::exception& e) {
    throw Error("bootstrap replicate " + std::to_string(replicate) + ": " + e.what());
  }
}

double bootstrap_replicate(const TransformModels& models, const Matrix& z,
                           std::size_t replicate, const CiTestConfig& config) {
  return bootstrap_replicate(BootstrapSampler(models, z), replicate, config);
}

// ---------------------------------------------------------------------------
// run_test
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> canonical_order(const Dataset& ds) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Matrix& z = ds.z();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (z(a, j) != z(b, j)) return z(a, j) < z(b, j);
    }
    if (ds.x()[a] != ds.x()[b]) return ds.x()[a] < ds.x()[b];
    return ds.y()[a] < ds.y()[b];
  });
  return order;
}

void collect_warnings(const CdfPtr& model, std::vector<std::string>& out) {
  if (const auto* k = dynamic_cast<const KernelCdfModel*>(model.get())) {
    for (const auto& w : k->warnings()) {
      if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
    }
  }
}

}  // namespace

CiTestResult run_test(const Dataset& dataset, const CiTestConfig& config) {
  config.validate();
  if (!dataset.has_y()) throw ValidationError("conditional independence test needs a y column");
  if (dataset.size() < kMinTestSampleSize) {
    throw ValidationError("conditional independence test needs n >= " +
                          std::to_string(kMinTestSampleSize) + ", got " +
                          std::to_string(dataset.size()));
  }
  const Dataset data = dataset.reordered(canonical_order(dataset));

  CiTestResult result;
  result.config = config;
  result.n = data.size();
  result.d = data.dim();

  TransformModels models = fit_transform_models(data, config.bandwidth_method);
  const ResidualVector rv = build_residual_vector(data, *models.fx, *models.fy, models.fz);
  result.energy = energy_statistic(rv.t);
  result.statistic = result.energy.statistic;
  result.residual_ks = residual_ks_distances(rv);
  result.clip_epsilon = rv.clip_epsilon;
  result.bandwidths = model_bandwidths(models);
  collect_warnings(models.fx, result.warnings);
  collect_warnings(models.fy, result.warnings);
  for (const auto& s : models.fz.stages()) collect_warnings(s, result.warnings);

  const BootstrapSampler sampler(std::move(models), data.z());
  result.bootstrap_statistics.resize(config.bootstrap_replicates);
  parallel_for(config.bootstrap_replicates, [&](std::size_t r) {
    result.bootstrap_statistics[r] = bootstrap_replicate(sampler, r, config);
  });
  result.p_value = bootstrap_p_value(result.statistic, result.bootstrap_statistics);
  return result;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json bandwidth_json(const Bandwidths& b) {
  return {{"response", b.response}, {"conditioning", b.conditioning}};
}

}  // namespace

std::string to_json_string(const CiTestResult& r, int indent) {
  using nlohmann::ordered_json;
  ordered_json bw;
  if (r.bandwidths.size() >= 2) {
    bw["x"] = bandwidth_json(r.bandwidths[0]);
    bw["y"] = bandwidth_json(r.bandwidths[1]);
    ordered_json stages = ordered_json::array();
    for (std::size_t j = 2; j < r.bandwidths.size(); ++j) stages.push_back(bandwidth_json(r.bandwidths[j]));
    bw["z"] = stages;
  }
  std::vector<std::string> order;
  for (std::size_t j = 0; j < r.d; ++j) order.push_back("z" + std::to_string(j + 1));

  ordered_json j;
  j["statistic"] = r.statistic;
  j["p_value"] = r.p_value;
  j["B"] = r.config.bootstrap_replicates;
  j["seed"] = {{"master", r.config.seed.master}, {"stream", r.config.seed.stream}};
  j["bandwidths"] = bw;
  j["diagnostics"] = {
      {"n", r.n},
      {"d", r.d},
      {"residual_ks", r.residual_ks},
      {"clip_epsilon", r.clip_epsilon},
      {"rosenblatt_order", order},
      {"mean_expected_distance", r.energy.mean_expected_distance},
      {"mean_pairwise_distance", r.energy.mean_pairwise_distance},
      {"null_pair_expectation", r.energy.null_pair_expectation},
      {"warnings", r.warnings},
  };
  j["config"] = {{"bandwidth", to_string(r.config.bandwidth_method)},
                 {"refit_bandwidths", r.config.refit_bandwidths}};
  j["bootstrap_statistics"] = r.bootstrap_statistics;
  return j.dump(indent);
}

// ---------------------------------------------------------------------------
// Replicated experiments
// ---------------------------------------------------------------------------

HistogramMethod parse_histogram_method(const std::string& name) {
  if (name == "full-test") return HistogramMethod::FullTest;
  if (name == "partial-dcov") return HistogramMethod::PartialDcov;
  throw ValidationError("unknown method '" + name + "' (expected full-test or partial-dcov)");
}

std::string to_string(HistogramMethod method) {
  return method == HistogramMethod::FullTest ? "full-test" : "partial-dcov";
}

std::pair<SeedSpec, SeedSpec> replication_seeds(const SeedSpec& job, std::size_t r) {
  const SeedSpec rep = substream(job, r);
  return {substream(rep, 0), substream(rep, 1)};
}

std::vector<double> pvalue_histogram(const Scenario& scenario, std::size_t n,
                                     std::size_t replications, const CiTestConfig& config,
                                     HistogramMethod method, std::size_t permutations) {
  config.validate();
  std::vector<double> p(replications);
  parallel_for(replications, [&](std::size_t r) {
    const auto [data_seed, test_seed] = replication_seeds(config.seed, r);
    const Dataset data = generate(scenario, n, data_seed);
    if (method == HistogramMethod::FullTest) {
      CiTestConfig c = config;
      c.seed = test_seed;
      p[r] = run_test(data, c).p_value;
    } else {
      const auto fx = KernelCdfModel::fit(data.x(), data.z(), std::nullopt, config.bandwidth_method);
      const auto fy = KernelCdfModel::fit(data.y(), data.z(), std::nullopt, config.bandwidth_method);
      p[r] = *partial_dcov(data, fx, fy, permutations, test_seed).p_value;
    }
  });
  return p;
}

}  // namespace npresid
