#include <catch2/catch_amalgamated.hpp>

#include "npresid/dcov.hpp"
#include "npresid/simgen.hpp"

#include <cmath>

using namespace npresid;
using Catch::Approx;

namespace {

std::vector<double> zcol(const Dataset& ds, Eigen::Index j) {
  std::vector<double> v(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) v[i] = ds.z()(i, j);
  return v;
}

double variance(const std::vector<double>& v) {
  const double s = sample_sd(v);
  return s * s;
}

// Sample mean and variance within 4 standard errors of the analytic values;
// mu4 is the fourth central moment, for the SE of the sample variance.
void check_moments(const std::vector<double>& v, double mean, double var, double mu4) {
  const double n = static_cast<double>(v.size());
  CHECK(std::abs(sample_mean(v) - mean) <= 4.0 * std::sqrt(var / n));
  CHECK(std::abs(variance(v) - var) <= 4.0 * std::sqrt((mu4 - var * var) / n));
}

void check_normal_moments(const std::vector<double>& v, double var) {
  check_moments(v, 0.0, var, 3.0 * var * var);
}

bool same(const Dataset& a, const Dataset& b) {
  return a.x() == b.x() && a.z() == b.z() && (!a.has_y() || a.y() == b.y());
}

}  // namespace

TEST_CASE("gaussian latent: conditional independence at sigma_w = 0") {
  const Dataset ds = gen_gaussian_latent(10000, 1, 0.0, 0.3, 0.2, {501, 0});
  std::vector<double> ex(ds.size()), ey(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ex[i] = ds.x()[i] - ds.z()(i, 0);
    ey[i] = ds.y()[i] - ds.z()(i, 0);
  }
  CHECK(std::abs(sample_correlation(ex, ey)) <= 0.03);
}

TEST_CASE("gaussian latent: moments at n = 10^5") {
  for (double sw : {0.0, 0.25}) {
    for (std::size_t d : {1u, 3u}) {
      const Dataset ds = gen_gaussian_latent(100000, d, sw, 0.3, 0.2, {502, d});
      const double vx = sw * sw + 0.04 + 0.09;
      check_normal_moments(ds.x(), vx);
      check_normal_moments(ds.y(), vx);
      for (std::size_t j = 0; j < d; ++j) check_normal_moments(zcol(ds, static_cast<Eigen::Index>(j)), 0.04);
      // cov(X, Y) = sigma_w^2 + sigma_z^2
      const double cov = sample_correlation(ds.x(), ds.y()) * sample_sd(ds.x()) * sample_sd(ds.y());
      const double target = sw * sw + 0.04;
      CHECK(std::abs(cov - target) <= 4.0 * std::sqrt((vx * vx + target * target) / 1e5));
    }
  }
}

TEST_CASE("gaussian latent: determinism and validation") {
  CHECK(same(gen_gaussian_latent(50, 2, 0.1, 0.3, 0.2, {1, 2}),
             gen_gaussian_latent(50, 2, 0.1, 0.3, 0.2, {1, 2})));
  CHECK_FALSE(same(gen_gaussian_latent(50, 2, 0.1, 0.3, 0.2, {1, 2}),
                   gen_gaussian_latent(50, 2, 0.1, 0.3, 0.2, {1, 3})));
  CHECK_THROWS_AS(gen_gaussian_latent(50, 1, -0.1, 0.3, 0.2, {1, 2}), ValidationError);
  CHECK_THROWS_AS(gen_gaussian_latent(50, 0, 0.1, 0.3, 0.2, {1, 2}), ValidationError);
}

TEST_CASE("modulo counterexample: pairwise uncorrelated, moments, range") {
  const Dataset ds = gen_modulo_counterexample(100000, {503, 0});
  const auto z = zcol(ds, 0);
  CHECK(std::abs(sample_correlation(ds.x(), z)) <= 0.01);
  CHECK(std::abs(sample_correlation(ds.y(), z)) <= 0.01);
  CHECK(std::abs(sample_correlation(ds.x(), ds.y())) <= 0.01);
  for (double v : z) {
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
  // Uniform: var 1/12, mu4 1/80. Sum of two uniforms: var 1/6, mu4 1/40 + 6/144.
  check_moments(ds.y(), 0.5, 1.0 / 12.0, 1.0 / 80.0);
  check_moments(z, 0.5, 1.0 / 12.0, 1.0 / 80.0);
  check_moments(ds.x(), 1.0, 1.0 / 6.0, 1.0 / 40.0 + 6.0 / 144.0);
}

TEST_CASE("modulo counterexample: conditional mean spot check at n = 10^6") {
  const Dataset ds = gen_modulo_counterexample(1000000, {504, 0});
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (std::abs(ds.y()[i] - 0.2) < 0.01 && std::abs(ds.z()(i, 0) - 0.7) < 0.01) {
      sum += ds.x()[i];
      ++count;
    }
  }
  REQUIRE(count > 100);
  // E[X | Y = y, Z = z] = z - y + 0.5 when y <= z.
  CHECK(std::abs(sum / count - 1.0) <= 0.05);
}

TEST_CASE("modulo counterexample: Z is marginally independent of X and of Y") {
  int accept_x = 0, accept_y = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const Dataset ds = gen_modulo_counterexample(200, {505, r});
    const Matrix z = ds.z();
    const Matrix x = Eigen::Map<const Matrix>(ds.x().data(), 200, 1);
    const Matrix y = Eigen::Map<const Matrix>(ds.y().data(), 200, 1);
    accept_x += *permutation_independence_test(x, z, 199, {505, 1000 + r}).p_value > 0.01;
    accept_y += *permutation_independence_test(y, z, 199, {505, 2000 + r}).p_value > 0.01;
  }
  CHECK(accept_x >= 95);
  CHECK(accept_y >= 95);
}

TEST_CASE("pairwise gaussian correlations") {
  const Dataset d0 = gen_pairwise_gaussian(10000, 0.0, {506, 0});
  CHECK_FALSE(d0.has_y());
  CHECK(std::abs(sample_correlation(d0.x(), zcol(d0, 0))) <= 0.03);
  const Dataset d9 = gen_pairwise_gaussian(10000, 0.9, {506, 1});
  CHECK(std::abs(sample_correlation(d9.x(), zcol(d9, 0)) - 0.9) <= 0.02);
  check_normal_moments(gen_pairwise_gaussian(100000, 0.6, {506, 2}, 2).x(), 1.0);
  CHECK(same(gen_pairwise_gaussian(100, 0.5, {1, 1}), gen_pairwise_gaussian(100, 0.5, {1, 1})));
  CHECK_THROWS_AS(gen_pairwise_gaussian(100, 1.0, {1, 1}), ValidationError);
}

TEST_CASE("gaussian oracle cdf") {
  // Zero cross-covariance: marginal cdf whatever z is.
  const GaussianOracleCdf indep(1.0, Vector::Zero(1), 4.0, Vector::Zero(1), Matrix::Identity(1, 1));
  for (double z : {-3.0, 0.0, 2.0}) {
    CHECK(indep.cdf(2.0, std::span<const double>(&z, 1)) ==
          Approx(0.5 * std::erfc(-0.5 / std::sqrt(2.0))).epsilon(1e-14));
  }
  const GaussianOracleCdf half(0.0, Vector::Zero(1), 1.0, Vector::Constant(1, 0.5),
                               Matrix::Identity(1, 1));
  for (double z : {-3.0, 0.1, 2.0}) {
    CHECK(half.cdf(0.5 * z, std::span<const double>(&z, 1)) == Approx(0.5).margin(1e-15));
    const double q = half.quantile(0.8, std::span<const double>(&z, 1));
    CHECK(half.cdf(q, std::span<const double>(&z, 1)) == Approx(0.8).epsilon(1e-12));
  }
  // Joint covariance [[1, 1], [1, 1]] is singular.
  CHECK_THROWS_AS(GaussianOracleCdf(0.0, Vector::Zero(1), 1.0, Vector::Constant(1, 1.0),
                                    Matrix::Identity(1, 1)),
                  ValidationError);
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(GaussianOracleCdf(0.0, Vector::Zero(2), 1.0, Vector::Zero(2), bad),
                  ValidationError);
}

TEST_CASE("gaussian oracle residuals of 10^4 draws are uniform") {
  const Dataset ds = gen_pairwise_gaussian(10000, 0.7, {507, 0});
  const GaussianOracleCdf oracle(0.0, Vector::Zero(1), 1.0, Vector::Constant(1, 0.7),
                                 Matrix::Identity(1, 1));
  std::vector<double> u(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) u[i] = oracle.cdf(ds.x()[i], ds.z_row(i));
  CHECK(ks_uniform_distance(u) <= 0.02);
}

TEST_CASE("scenario registry") {
  const auto names = scenario_names();
  CHECK(names == std::vector<std::string>{"gaussian-latent", "modulo-counterexample",
                                          "pairwise-gaussian"});
  const Scenario g = make_scenario("gaussian-latent", {{"sigma_w", 0.25}, {"d", 3}});
  CHECK(g.parameter("sigma_e") == 0.3);
  CHECK(g.parameter("sigma_z") == 0.2);
  CHECK(g.dim() == 3);
  CHECK(g.oracle_available);
  CHECK(same(generate(g, 40, {8, 8}), gen_gaussian_latent(40, 3, 0.25, 0.3, 0.2, {8, 8})));
  CHECK(scenario_oracles(g).has_value());
  CHECK_FALSE(scenario_oracles(make_scenario("pairwise-gaussian", {{"rho", 0.3}})).has_value());
  CHECK(scenario_oracles(make_scenario("modulo-counterexample")).has_value());

  CHECK_THROWS_AS(make_scenario("heavy-tails"), ValidationError);
  CHECK_THROWS_AS(make_scenario("gaussian-latent", {{"sigma_w", -1.0}}), ValidationError);
  CHECK_THROWS_AS(make_scenario("gaussian-latent", {{"d", 0}}), ValidationError);
  CHECK_THROWS_AS(make_scenario("gaussian-latent", {{"d", 1.5}}), ValidationError);
  CHECK_THROWS_AS(make_scenario("gaussian-latent", {{"rho", 0.1}}), ValidationError);
  CHECK_THROWS_AS(make_scenario("pairwise-gaussian", {{"rho", -1.0}}), ValidationError);
}

TEST_CASE("property: generators are pure functions of parameters and seed") {
  for (std::uint64_t c = 0; c < 1000; ++c) {
    const SeedSpec seed{c * 7919, c};
    const std::size_t n = 5 + c % 20;
    switch (c % 3) {
      case 0:
        REQUIRE(same(gen_gaussian_latent(n, 1 + c % 4, 0.1, 0.3, 0.2, seed),
                     gen_gaussian_latent(n, 1 + c % 4, 0.1, 0.3, 0.2, seed)));
        break;
      case 1:
        REQUIRE(same(gen_modulo_counterexample(n, seed), gen_modulo_counterexample(n, seed)));
        break;
      default:
        REQUIRE(same(gen_pairwise_gaussian(n, 0.4, seed, 2), gen_pairwise_gaussian(n, 0.4, seed, 2)));
    }
  }
}
