#pragma once

#include "npresid/core.hpp"
#include "npresid/kernel_cde.hpp"
#include "npresid/transform.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace npresid {

inline constexpr double kDefaultSigmaE = 0.3;
inline constexpr double kDefaultSigmaZ = 0.2;

/// Z ~ N(0, sigma_z^2 I_d), W ~ N(0, sigma_w^2), eps, eps' ~ N(0, sigma_e^2);
/// X = W + Z_1 + eps, Y = W + Z_1 + eps'. X and Y are conditionally
/// independent given Z iff sigma_w = 0.
Dataset gen_gaussian_latent(std::size_t n, std::size_t d, double sigma_w, double sigma_e,
                            double sigma_z, const SeedSpec& seed);

/// W_1, W_2, W_3 i.i.d. U(0,1); X = W_1 + W_3, Y = W_2, Z = (W_1 + W_2) mod 1.
/// Pairwise independent, yet X and Y are dependent given Z.
Dataset gen_modulo_counterexample(std::size_t n, const SeedSpec& seed);

/// Z ~ N(0, I_d), X = rho Z_1 + sqrt(1 - rho^2) eps; no y column.
Dataset gen_pairwise_gaussian(std::size_t n, double rho, const SeedSpec& seed,
                              std::size_t d = 1);

/// Exact Gaussian conditional CDF of X given Z for (X, Z) jointly normal:
/// Phi((x - mu1 - b'(z - mu2)) / s), b = Sigma22^{-1} sigma12,
/// s^2 = sigma11 - sigma12' b.
class GaussianOracleCdf final : public ConditionalCdf {
 public:
  GaussianOracleCdf(double mu1, Vector mu2, double sigma11, Vector sigma12, Matrix sigma22);

  std::size_t conditioning_dim() const override { return static_cast<std::size_t>(mu2_.size()); }
  double cdf(double x, std::span<const double> z) const override;
  double quantile(double u, std::span<const double> z) const override;

  double conditional_mean(std::span<const double> z) const;
  double conditional_sd() const { return sd_; }

 private:
  double mu1_;
  Vector mu2_;
  Vector coef_;
  double sd_;
};

/// CDF that ignores its conditioning argument (a marginal law presented with
/// a given conditioning dimension).
class MarginalOracleCdf final : public ConditionalCdf {
 public:
  MarginalOracleCdf(std::size_t conditioning_dim, std::function<double(double)> cdf,
                    std::function<double(double)> quantile);

  std::size_t conditioning_dim() const override { return dim_; }
  double cdf(double x, std::span<const double>) const override { return cdf_(x); }
  double quantile(double u, std::span<const double>) const override;

 private:
  std::size_t dim_;
  std::function<double(double)> cdf_;
  std::function<double(double)> quantile_;
};

/// True conditional CDFs for the Gaussian latent scenario.
TransformModels gaussian_latent_oracles(std::size_t d, double sigma_w, double sigma_e,
                                        double sigma_z);

/// True conditional CDFs for the modulo counterexample (all equal their marginals).
TransformModels modulo_counterexample_oracles();

// ---------------------------------------------------------------------------
// Scenario registry
// ---------------------------------------------------------------------------

struct Scenario {
  std::string name;
  std::map<std::string, double> parameters;
  bool oracle_available = false;

  std::size_t dim() const;
  double parameter(const std::string& key) const;
};

/// Registered names: "gaussian-latent" (sigma_w, sigma_e, sigma_z, d),
/// "modulo-counterexample" (no parameters), "pairwise-gaussian" (rho, d).
std::vector<std::string> scenario_names();

/// Validates parameters and fills defaults; unknown names or keys are errors.
Scenario make_scenario(const std::string& name, const std::map<std::string, double>& params = {});

Dataset generate(const Scenario& scenario, std::size_t n, const SeedSpec& seed);

/// Oracle models, when the scenario has them and a y column.
std::optional<TransformModels> scenario_oracles(const Scenario& scenario);

}  // namespace npresid
