#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace npresid {

// Row-major so that one observation is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied data or configuration (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// n observations of scalar x, optional scalar y, and a d-dimensional
/// conditioning vector z. Immutable once constructed.
class Dataset {
 public:
  Dataset(std::vector<double> x, std::optional<std::vector<double>> y, Matrix z,
          std::vector<std::string> column_names = {});

  std::size_t size() const { return x_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(z_.cols()); }
  bool has_y() const { return y_.has_value(); }

  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const;
  const Matrix& z() const { return z_; }
  std::span<const double> z_row(std::size_t i) const {
    return {z_.data() + i * dim(), dim()};
  }
  const std::vector<std::string>& column_names() const { return names_; }

  /// Rows reordered as out[i] = this[order[i]].
  Dataset reordered(std::span<const std::size_t> order) const;

 private:
  std::vector<double> x_;
  std::optional<std::vector<double>> y_;
  Matrix z_;
  std::vector<std::string> names_;
};

std::vector<std::string> default_column_names(std::size_t d, bool with_y = true);

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

struct SeedSpec {
  std::uint64_t master = 0;
  std::uint64_t stream = 0;

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

/// Order-sensitive 64-bit mix of two words (splitmix64 finalizer).
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

/// Stream id for sub-task `task` of job `job`.
inline SeedSpec substream(const SeedSpec& job, std::uint64_t task) {
  return {job.master, hash_combine(job.stream, task)};
}

class RandomStream {
 public:
  explicit RandomStream(const SeedSpec& seed);

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, n), unbiased.
  std::size_t index(std::size_t n);
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RandomStream make_stream(const SeedSpec& seed) { return RandomStream(seed); }

// ---------------------------------------------------------------------------
// Standard normal special functions
// ---------------------------------------------------------------------------

double std_normal_pdf(double t);
double std_normal_cdf(double t);
/// Inverse of std_normal_cdf; u must lie strictly inside (0, 1).
double std_normal_quantile(double u);

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

/// 0 restores the default (NPRESID_THREADS, else hardware concurrency).
void set_thread_count(int threads);
int thread_count();

/// Calls body(i) for i in [0, n) on the worker pool. Bodies must write only
/// to index-owned storage; callers reduce in index order afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Small statistics helpers shared by diagnostics and tests
// ---------------------------------------------------------------------------

/// Kolmogorov-Smirnov distance of a sample against U(0, 1).
double ks_uniform_distance(std::span<const double> sample);
/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample_distance(std::span<const double> a, std::span<const double> b);

double sample_mean(std::span<const double> v);
/// Unbiased (n - 1) standard deviation.
double sample_sd(std::span<const double> v);
double sample_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace npresid
