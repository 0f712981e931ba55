#include "npresid/energy.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

namespace npresid {

namespace {

constexpr std::size_t kMaxSeriesTerms = 1200;

void check_dim(long long k) {
  if (k <= 0) throw DomainError("dimension must be positive, got " + std::to_string(k));
}

}  // namespace

NormalDistanceSeries::NormalDistanceSeries(std::size_t dim) : dim_(dim) {
  check_dim(static_cast<long long>(dim));
  const long double m = static_cast<long double>(dim);
  const long double lg_half_m1 = std::lgamma((m + 1.0L) / 2.0L);
  leading_ = static_cast<double>(std::sqrt(2.0L) * std::exp(lg_half_m1 - std::lgamma(m / 2.0L)));

  // |c_k| = sqrt(2/pi) / (k! 2^k (2k+1)(2k+2)) * Gamma((m+1)/2) Gamma(k+3/2) / Gamma(k+m/2+1)
  log_coef_.resize(kMaxSeriesTerms);
  const long double log_sqrt_2_over_pi = 0.5L * std::log(2.0L / std::numbers::pi_v<long double>);
  for (std::size_t k = 0; k < kMaxSeriesTerms; ++k) {
    const long double kk = static_cast<long double>(k);
    log_coef_[k] = log_sqrt_2_over_pi - std::lgamma(kk + 1.0L) - kk * std::log(2.0L) -
                   std::log((2.0L * kk + 1.0L) * (2.0L * kk + 2.0L)) + lg_half_m1 +
                   std::lgamma(kk + 1.5L) - std::lgamma(kk + m / 2.0L + 1.0L);
  }
}

double NormalDistanceSeries::evaluate(double r2) const {
  if (!(r2 >= 0.0) || !std::isfinite(r2)) throw DomainError("squared norm must be finite");
  if (r2 == 0.0) return leading_;
  const long double log_r2 = std::log(static_cast<long double>(r2));
  long double sum = leading_;
  for (std::size_t k = 0; k < log_coef_.size(); ++k) {
    const long double magnitude = std::exp(log_coef_[k] + static_cast<long double>(k + 1) * log_r2);
    sum += (k % 2 == 0) ? magnitude : -magnitude;
    // Terms grow until k ~ r2/2 before decaying.
    if (static_cast<double>(k) > 0.5 * r2 + 1.0 && magnitude < 1e-14L * std::abs(sum)) break;
  }
  return static_cast<double>(sum);
}

double expected_distance_quadrature(double r2, std::size_t dim) {
  check_dim(static_cast<long long>(dim));
  if (!(r2 >= 0.0) || !std::isfinite(r2)) throw DomainError("squared norm must be finite");
  const double m = static_cast<double>(dim);
  using boost::math::quadrature::gauss_kronrod;

  // sqrt(q) = pi^{-1/2} int_0^inf (1 - exp(-s^2 q)) / s^2 ds, and
  // E exp(-t |a - Z|^2) = (1 + 2t)^{-m/2} exp(-r2 t / (1 + 2t)).
  // With s = x / (1 - x) the integrand is bounded on [0, 1].
  auto integrand = [&](double x) {
    if (x <= 0.0) return m + r2;
    if (x >= 1.0) return 1.0;
    const double s = x / (1.0 - x);
    const double t = s * s;
    const double log_mgf = -0.5 * m * std::log1p(2.0 * t) - r2 * t / (1.0 + 2.0 * t);
    return -std::expm1(log_mgf) / (x * x);
  };
  // Split where the transform starts to decay so the adaptive rule sees
  // the feature on both sides.
  const double s0 = 1.0 / std::sqrt(m + r2);
  const double x0 = s0 / (1.0 + s0);
  constexpr unsigned max_depth = 15;
  constexpr double tol = 1e-12;
  const double left = gauss_kronrod<double, 31>::integrate(integrand, 0.0, x0, max_depth, tol);
  const double right = gauss_kronrod<double, 31>::integrate(integrand, x0, 1.0, max_depth, tol);
  return (left + right) / std::sqrt(std::numbers::pi);
}

namespace {

double expected_distance(const NormalDistanceSeries& series, double r2) {
  if (r2 > static_cast<double>(series.dim()) + kSeriesSwitchExcess) {
    return expected_distance_quadrature(r2, series.dim());
  }
  return series.evaluate(r2);
}

}  // namespace

double expected_distance_to_std_normal(std::span<const double> a) {
  check_dim(static_cast<long long>(a.size()));
  double r2 = 0.0;
  for (double v : a) {
    if (!std::isfinite(v)) throw DomainError("point must be finite");
    r2 += v * v;
  }
  return expected_distance(NormalDistanceSeries(a.size()), r2);
}

double null_pair_expectation(int k) {
  check_dim(k);
  const double m = static_cast<double>(k);
  return 2.0 * std::exp(std::lgamma((m + 1.0) / 2.0) - std::lgamma(m / 2.0));
}

EnergyGofResult energy_statistic(const Matrix& t) {
  const auto n = static_cast<std::size_t>(t.rows());
  const auto k = static_cast<std::size_t>(t.cols());
  if (n == 0 || k == 0) throw Error("energy_statistic: empty sample");
  if (!t.allFinite()) throw DomainError("energy_statistic: non-finite entries");

  const NormalDistanceSeries series(k);
  std::vector<double> expected(n), pair_rows(n);
  parallel_for(n, [&](std::size_t i) {
    const double* ti = t.data() + i * k;
    double r2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) r2 += ti[c] * ti[c];
    expected[i] = expected_distance(series, r2);
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* tj = t.data() + j * k;
      double d2 = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double diff = ti[c] - tj[c];
        d2 += diff * diff;
      }
      s += std::sqrt(d2);
    }
    pair_rows[i] = s;
  });

  double expected_sum = 0.0, pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    expected_sum += expected[i];
    pair_sum += pair_rows[i];
  }
  pair_sum *= 2.0;  // both orders of each pair; the diagonal contributes zero

  const double nd = static_cast<double>(n);
  EnergyGofResult r;
  r.n = n;
  r.k = k;
  r.null_pair_expectation = null_pair_expectation(static_cast<int>(k));
  r.mean_expected_distance = expected_sum / nd;
  r.mean_pairwise_distance = pair_sum / (nd * nd);
  r.statistic = 2.0 * expected_sum - pair_sum / nd - nd * r.null_pair_expectation;
  return r;
}

}  // namespace npresid
