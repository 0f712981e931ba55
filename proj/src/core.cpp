#include "npresid/core.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

namespace npresid {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

namespace {

void require_finite(std::span<const double> values, const std::string& column) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("non-finite value in column '" + column + "' at row " +
                            std::to_string(i + 1));
    }
  }
}

}  // namespace

std::vector<std::string> default_column_names(std::size_t d, bool with_y) {
  std::vector<std::string> names{"x"};
  if (with_y) names.emplace_back("y");
  for (std::size_t j = 0; j < d; ++j) names.push_back("z" + std::to_string(j + 1));
  return names;
}

Dataset::Dataset(std::vector<double> x, std::optional<std::vector<double>> y, Matrix z,
                 std::vector<std::string> column_names)
    : x_(std::move(x)), y_(std::move(y)), z_(std::move(z)), names_(std::move(column_names)) {
  const std::size_t n = x_.size();
  if (n < 2) throw ValidationError("dataset needs at least 2 rows, got " + std::to_string(n));
  if (y_ && y_->size() != n) throw ValidationError("column y has a different length than x");
  if (static_cast<std::size_t>(z_.rows()) != n) {
    throw ValidationError("conditioning matrix has " + std::to_string(z_.rows()) +
                          " rows, expected " + std::to_string(n));
  }
  if (z_.cols() < 1) throw ValidationError("conditioning vector must have d >= 1");
  if (names_.empty()) names_ = default_column_names(dim(), has_y());

  require_finite(x_, "x");
  if (y_) require_finite(*y_, "y");
  for (Eigen::Index j = 0; j < z_.cols(); ++j) {
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      if (!std::isfinite(z_(i, j))) {
        throw ValidationError("non-finite value in column 'z" + std::to_string(j + 1) +
                              "' at row " + std::to_string(i + 1));
      }
    }
  }
}

const std::vector<double>& Dataset::y() const {
  if (!y_) throw Error("dataset has no y column");
  return *y_;
}

Dataset Dataset::reordered(std::span<const std::size_t> order) const {
  const std::size_t n = size();
  if (order.size() != n) throw Error("row order has wrong length");
  std::vector<double> x(n);
  std::optional<std::vector<double>> y;
  if (y_) y.emplace(n);
  Matrix z(n, dim());
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = x_[order[i]];
    if (y_) (*y)[i] = (*y_)[order[i]];
    z.row(i) = z_.row(order[i]);
  }
  return Dataset(std::move(x), std::move(y), std::move(z), names_);
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

RandomStream::RandomStream(const SeedSpec& seed) {
  const std::uint64_t a = splitmix64(seed.master);
  const std::uint64_t b = splitmix64(a ^ splitmix64(seed.stream + 0x5851f42d4c957f2dULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  engine_.seed(seq);
}

double RandomStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::size_t RandomStream::index(std::size_t n) {
  if (n == 0) throw Error("RandomStream::index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % range);
}

// ---------------------------------------------------------------------------
// Standard normal
// ---------------------------------------------------------------------------

double std_normal_pdf(double t) {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double t) {
  if (std::isnan(t)) throw DomainError("std_normal_cdf: NaN argument");
  if (std::isinf(t)) throw DomainError("std_normal_cdf: infinite argument");
  return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

double std_normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("std_normal_quantile: probability must lie in (0, 1), got " +
                      std::to_string(u));
  }
  // 1 - u is exact for u >= 0.5, so work in the lower tail where erfc keeps
  // full relative precision.
  if (u > 0.5) return -std_normal_quantile(1.0 - u);

  // Acklam's rational approximation (relative error < 1.2e-9) ...
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }

  // ... refined by one Halley step on the exact cdf.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
  const double step = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - step / (1.0 + 0.5 * x * step);
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

namespace {

int g_threads = 0;

int default_thread_count() {
  if (const char* env = std::getenv("NPRESID_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

void set_thread_count(int threads) { g_threads = threads > 0 ? threads : 0; }

int thread_count() { return g_threads > 0 ? g_threads : default_thread_count(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int threads = thread_count();
  if (threads <= 1 || n < 2 || omp_in_parallel()) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  // Report the failure with the lowest index so errors are thread-count independent.
  std::mutex mu;
  std::exception_ptr first_error;
  std::size_t first_index = n;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (static_cast<std::size_t>(i) < first_index) {
        first_index = static_cast<std::size_t>(i);
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

double ks_uniform_distance(std::span<const double> sample) {
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = std::clamp(s[i], 0.0, 1.0);
    dist = std::max({dist, (static_cast<double>(i) + 1.0) / n - u, u - static_cast<double>(i) / n});
  }
  return dist;
}

double ks_two_sample_distance(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double dist = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= v) ++i;
    while (j < sb.size() && sb[j] <= v) ++j;
    dist = std::max(dist, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return dist;
}

double sample_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double sample_correlation(std::span<const double> a, std::span<const double> b) {
  const double ma = sample_mean(a), mb = sample_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace npresid
