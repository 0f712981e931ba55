#pragma once

#include "npresid/core.hpp"
#include "npresid/energy.hpp"
#include "npresid/kernel_cde.hpp"
#include "npresid/simgen.hpp"
#include "npresid/transform.hpp"

#include <string>
#include <vector>

namespace npresid {

inline constexpr std::size_t kMinBootstrapReplicates = 99;
inline constexpr std::size_t kMinTestSampleSize = 30;

struct CiTestConfig {
  std::size_t bootstrap_replicates = 199;
  BandwidthMethod bandwidth_method = BandwidthMethod::LeastSquaresCv;
  /// Reselect bandwidths inside every replicate; otherwise reuse the
  /// bandwidths chosen on the observed data.
  bool refit_bandwidths = true;
  SeedSpec seed{};

  void validate() const;
};

struct CiTestResult {
  double statistic = 0.0;
  EnergyGofResult energy;
  std::vector<double> bootstrap_statistics;
  double p_value = 1.0;
  CiTestConfig config;
  std::size_t n = 0;
  std::size_t d = 0;
  /// Ordered (x|z, y|z, z_1, z_2|z_1, ...).
  std::vector<Bandwidths> bandwidths;
  /// KS distance of each u column against U(0, 1).
  std::vector<double> residual_ks;
  double clip_epsilon = 0.0;
  std::vector<std::string> warnings;
};

/// (1 + #{b >= statistic}) / (B + 1).
double bootstrap_p_value(double statistic, std::span<const double> bootstrap_statistics);

/// Draws bootstrap samples from the fitted null model: Z* resampled from the
/// observed rows, X* = F_x^{-1}(U_1 | Z*), Y* = F_y^{-1}(U_2 | Z*).
class BootstrapSampler {
 public:
  BootstrapSampler(TransformModels models, Matrix z);

  const TransformModels& models() const { return models_; }
  const Matrix& observed_z() const { return z_; }

  /// One bootstrap sample; `rows`, when given, receives the resampled row indices.
  Dataset draw(RandomStream& rng, std::vector<std::size_t>* rows = nullptr) const;

 private:
  double invert(const ConditionalCdf& model, const Matrix* weight_cache, double u,
                std::size_t row) const;

  TransformModels models_;
  Matrix z_;
  // Kernel weights of fx and fy at every observed row, when they are kernel models.
  std::optional<Matrix> fx_weights_;
  std::optional<Matrix> fy_weights_;
};

/// E*_n for replicate `replicate`, using substream(config.seed, replicate).
double bootstrap_replicate(const BootstrapSampler& sampler, std::size_t replicate,
                           const CiTestConfig& config);
double bootstrap_replicate(const TransformModels& models, const Matrix& z,
                           std::size_t replicate, const CiTestConfig& config);

/// Fit, transform, energy statistic, bootstrap calibration. Rows are put in
/// a canonical order first so results do not depend on input row order.
CiTestResult run_test(const Dataset& dataset, const CiTestConfig& config);

std::string to_json_string(const CiTestResult& result, int indent = 2);

enum class HistogramMethod { FullTest, PartialDcov };
HistogramMethod parse_histogram_method(const std::string& name);
std::string to_string(HistogramMethod method);

/// Seeds for replication r of an experiment job: (data, test).
std::pair<SeedSpec, SeedSpec> replication_seeds(const SeedSpec& job, std::size_t r);

/// p-values of `replications` tests on fresh draws of the scenario.
std::vector<double> pvalue_histogram(const Scenario& scenario, std::size_t n,
                                     std::size_t replications, const CiTestConfig& config,
                                     HistogramMethod method = HistogramMethod::FullTest,
                                     std::size_t permutations = 999);

}  // namespace npresid
