#include "npresid/simgen.hpp"

#include <algorithm>
#include <cmath>

namespace npresid {

namespace {

void check_sigma(double s, const char* name) {
  if (!(s >= 0.0) || !std::isfinite(s)) {
    throw ValidationError(std::string(name) + " must be a finite nonnegative number");
  }
}

void check_n(std::size_t n) {
  if (n < 1) throw ValidationError("sample size must be at least 1");
}

}  // namespace

Dataset gen_gaussian_latent(std::size_t n, std::size_t d, double sigma_w, double sigma_e,
                            double sigma_z, const SeedSpec& seed) {
  check_n(n);
  if (d < 1) throw ValidationError("scenario dimension d must be >= 1");
  check_sigma(sigma_w, "sigma_w");
  check_sigma(sigma_e, "sigma_e");
  check_sigma(sigma_z, "sigma_z");
  RandomStream rng = make_stream(seed);
  std::vector<double> x(n), y(n);
  Matrix z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z(i, j) = sigma_z * rng.normal();
    const double w = sigma_w * rng.normal();
    x[i] = w + z(i, 0) + sigma_e * rng.normal();
    y[i] = w + z(i, 0) + sigma_e * rng.normal();
  }
  return Dataset(std::move(x), std::move(y), std::move(z));
}

Dataset gen_modulo_counterexample(std::size_t n, const SeedSpec& seed) {
  check_n(n);
  RandomStream rng = make_stream(seed);
  std::vector<double> x(n), y(n);
  Matrix z(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double w1 = rng.uniform();
    const double w2 = rng.uniform();
    const double w3 = rng.uniform();
    x[i] = w1 + w3;
    y[i] = w2;
    z(i, 0) = std::fmod(w1 + w2, 1.0);
  }
  return Dataset(std::move(x), std::move(y), std::move(z));
}

Dataset gen_pairwise_gaussian(std::size_t n, double rho, const SeedSpec& seed, std::size_t d) {
  check_n(n);
  if (!(std::abs(rho) < 1.0)) throw ValidationError("rho must satisfy |rho| < 1");
  if (d < 1) throw ValidationError("dimension d must be >= 1");
  RandomStream rng = make_stream(seed);
  std::vector<double> x(n);
  Matrix z(n, d);
  const double noise = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z(i, j) = rng.normal();
    x[i] = rho * z(i, 0) + noise * rng.normal();
  }
  return Dataset(std::move(x), std::nullopt, std::move(z), default_column_names(d, false));
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

GaussianOracleCdf::GaussianOracleCdf(double mu1, Vector mu2, double sigma11, Vector sigma12,
                                     Matrix sigma22)
    : mu1_(mu1), mu2_(std::move(mu2)) {
  const Eigen::Index d = mu2_.size();
  if (sigma12.size() != d || sigma22.rows() != d || sigma22.cols() != d) {
    throw ValidationError("Gaussian oracle: covariance blocks have inconsistent sizes");
  }
  Eigen::MatrixXd full(d + 1, d + 1);
  full(0, 0) = sigma11;
  full.block(0, 1, 1, d) = sigma12.transpose();
  full.block(1, 0, d, 1) = sigma12;
  full.block(1, 1, d, d) = sigma22;
  Eigen::LLT<Eigen::MatrixXd> llt(full);
  if (llt.info() != Eigen::Success || !full.allFinite()) {
    throw ValidationError("Gaussian oracle: covariance matrix is not positive definite");
  }
  if (d > 0) {
    coef_ = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(sigma22)).solve(sigma12);
    sd_ = std::sqrt(sigma11 - sigma12.dot(coef_));
  } else {
    coef_ = Vector(0);
    sd_ = std::sqrt(sigma11);
  }
}

double GaussianOracleCdf::conditional_mean(std::span<const double> z) const {
  if (static_cast<Eigen::Index>(z.size()) != mu2_.size()) {
    throw Error("Gaussian oracle: conditioning point has wrong dimension");
  }
  double m = mu1_;
  for (Eigen::Index j = 0; j < mu2_.size(); ++j) m += coef_(j) * (z[j] - mu2_(j));
  return m;
}

double GaussianOracleCdf::cdf(double x, std::span<const double> z) const {
  return std_normal_cdf((x - conditional_mean(z)) / sd_);
}

double GaussianOracleCdf::quantile(double u, std::span<const double> z) const {
  return conditional_mean(z) + sd_ * std_normal_quantile(u);
}

MarginalOracleCdf::MarginalOracleCdf(std::size_t conditioning_dim,
                                     std::function<double(double)> cdf,
                                     std::function<double(double)> quantile)
    : dim_(conditioning_dim), cdf_(std::move(cdf)), quantile_(std::move(quantile)) {}

double MarginalOracleCdf::quantile(double u, std::span<const double>) const {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile: probability must lie in (0, 1)");
  return quantile_(u);
}

TransformModels gaussian_latent_oracles(std::size_t d, double sigma_w, double sigma_e,
                                        double sigma_z) {
  if (d < 1) throw ValidationError("scenario dimension d must be >= 1");
  check_sigma(sigma_w, "sigma_w");
  check_sigma(sigma_e, "sigma_e");
  check_sigma(sigma_z, "sigma_z");
  const auto dd = static_cast<Eigen::Index>(d);
  const double vz = sigma_z * sigma_z;
  const double vx = sigma_w * sigma_w + vz + sigma_e * sigma_e;
  Vector cross = Vector::Zero(dd);
  cross(0) = vz;
  const Matrix sz = Matrix::Identity(dd, dd) * vz;
  auto fx = std::make_shared<GaussianOracleCdf>(0.0, Vector::Zero(dd), vx, cross, sz);
  auto fy = std::make_shared<GaussianOracleCdf>(0.0, Vector::Zero(dd), vx, cross, sz);
  std::vector<CdfPtr> stages;
  for (Eigen::Index j = 0; j < dd; ++j) {
    stages.push_back(std::make_shared<GaussianOracleCdf>(0.0, Vector::Zero(j), vz,
                                                         Vector::Zero(j),
                                                         Matrix::Identity(j, j) * vz));
  }
  return {std::move(fx), std::move(fy), RosenblattChain(std::move(stages))};
}

TransformModels modulo_counterexample_oracles() {
  // X = W1 + W3 is triangular on [0, 2]; Y and Z are uniform on [0, 1].
  auto tri_cdf = [](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 2.0) return 1.0;
    return x <= 1.0 ? 0.5 * x * x : 1.0 - 0.5 * (2.0 - x) * (2.0 - x);
  };
  auto tri_quantile = [](double u) {
    return u <= 0.5 ? std::sqrt(2.0 * u) : 2.0 - std::sqrt(2.0 * (1.0 - u));
  };
  auto unif_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  auto unif_quantile = [](double u) { return u; };
  auto fx = std::make_shared<MarginalOracleCdf>(1, tri_cdf, tri_quantile);
  auto fy = std::make_shared<MarginalOracleCdf>(1, unif_cdf, unif_quantile);
  std::vector<CdfPtr> stages{std::make_shared<MarginalOracleCdf>(0, unif_cdf, unif_quantile)};
  return {std::move(fx), std::move(fy), RosenblattChain(std::move(stages))};
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

struct ScenarioSpec {
  std::map<std::string, double> defaults;
  bool oracle;
};

const std::map<std::string, ScenarioSpec>& registry() {
  static const std::map<std::string, ScenarioSpec> specs{
      {"gaussian-latent",
       {{{"sigma_w", 0.0}, {"sigma_e", kDefaultSigmaE}, {"sigma_z", kDefaultSigmaZ}, {"d", 1.0}},
        true}},
      {"modulo-counterexample", {{}, true}},
      {"pairwise-gaussian", {{{"rho", 0.0}, {"d", 1.0}}, false}},
  };
  return specs;
}

}  // namespace

std::size_t Scenario::dim() const {
  const auto it = parameters.find("d");
  return it == parameters.end() ? 1 : static_cast<std::size_t>(it->second);
}

double Scenario::parameter(const std::string& key) const {
  const auto it = parameters.find(key);
  if (it == parameters.end()) throw Error("scenario '" + name + "' has no parameter " + key);
  return it->second;
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const auto& [name, spec] : registry()) names.push_back(name);
  return names;
}

Scenario make_scenario(const std::string& name, const std::map<std::string, double>& params) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ValidationError("unknown scenario '" + name + "'");
  Scenario s{name, it->second.defaults, it->second.oracle};
  for (const auto& [key, value] : params) {
    if (!s.parameters.contains(key)) {
      throw ValidationError("scenario '" + name + "' has no parameter '" + key + "'");
    }
    s.parameters[key] = value;
  }
  for (const auto& [key, value] : s.parameters) {
    if (!std::isfinite(value)) throw ValidationError("scenario parameter " + key + " is not finite");
    if (key.starts_with("sigma")) check_sigma(value, key.c_str());
    if (key == "d" && (value < 1.0 || value != std::floor(value))) {
      throw ValidationError("scenario parameter d must be a positive integer");
    }
    if (key == "rho" && !(std::abs(value) < 1.0)) throw ValidationError("rho must satisfy |rho| < 1");
  }
  return s;
}

Dataset generate(const Scenario& s, std::size_t n, const SeedSpec& seed) {
  if (s.name == "gaussian-latent") {
    return gen_gaussian_latent(n, s.dim(), s.parameter("sigma_w"), s.parameter("sigma_e"),
                               s.parameter("sigma_z"), seed);
  }
  if (s.name == "modulo-counterexample") return gen_modulo_counterexample(n, seed);
  if (s.name == "pairwise-gaussian") return gen_pairwise_gaussian(n, s.parameter("rho"), seed, s.dim());
  throw ValidationError("unknown scenario '" + s.name + "'");
}

std::optional<TransformModels> scenario_oracles(const Scenario& s) {
  if (s.name == "gaussian-latent") {
    return gaussian_latent_oracles(s.dim(), s.parameter("sigma_w"), s.parameter("sigma_e"),
                                   s.parameter("sigma_z"));
  }
  if (s.name == "modulo-counterexample") return modulo_counterexample_oracles();
  return std::nullopt;
}

}  // namespace npresid
