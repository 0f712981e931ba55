#pragma once

#include "npresid/core.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace npresid {

/// A conditional distribution function x -> F(x | z) together with its inverse.
/// Implemented by the kernel estimator here and by the exact Gaussian oracle
/// in simgen.
class ConditionalCdf {
 public:
  virtual ~ConditionalCdf() = default;

  /// Dimension of z; 0 for a marginal distribution.
  virtual std::size_t conditioning_dim() const = 0;
  virtual double cdf(double x, std::span<const double> z) const = 0;
  /// Inverse of cdf in x; u must lie in (0, 1).
  virtual double quantile(double u, std::span<const double> z) const = 0;
};

using CdfPtr = std::shared_ptr<const ConditionalCdf>;

enum class BandwidthMethod { RuleOfThumb, LeastSquaresCv };

std::string to_string(BandwidthMethod method);
/// Accepts "rule-of-thumb" and "least-squares-cv" (also "lscv").
BandwidthMethod parse_bandwidth_method(const std::string& name);

struct Bandwidths {
  double response = 0.0;                ///< smoothing in the response coordinate
  std::vector<double> conditioning;     ///< one per conditioning coordinate

  void validate() const;
  friend bool operator==(const Bandwidths&, const Bandwidths&) = default;
};

/// Rule-of-thumb constant c in h = c * sd * n^rate.
inline constexpr double kRuleOfThumbConstant = 1.06;
/// Multiplier grid searched by least-squares cross-validation.
inline constexpr int kCvGridSize = 9;
inline constexpr double kCvGridMin = 0.25;
inline constexpr double kCvGridMax = 4.0;
/// Response grid of the cross-validation criterion.
inline constexpr int kCvResponseGridSize = 50;

/// Data-driven bandwidths. Least-squares CV needs n >= 10 and otherwise falls
/// back to the rule of thumb, appending a message to `warnings` when given.
Bandwidths select_bandwidths(std::span<const double> responses, const Matrix& conditioners,
                             BandwidthMethod method,
                             std::vector<std::string>* warnings = nullptr);

/// Leave-one-out CDF criterion minimised by the cross-validated selector;
/// exposed for testing.
double cv_criterion(std::span<const double> responses, const Matrix& conditioners,
                    const Bandwidths& bandwidths);

struct CdfEvaluation {
  double value = 0.0;
  bool extrapolated = false;  ///< kernel weights underflowed; nearest-conditioner fallback
};

/// Kernel estimate of F(x | z): sum_i w_i(z) K((x - X_i) / h_response), with
/// Gaussian K and product-Gaussian Nadaraya-Watson weights w_i(z).
class KernelCdfModel final : public ConditionalCdf {
 public:
  /// Bandwidths are selected with `method` when not supplied.
  static KernelCdfModel fit(std::vector<double> responses, Matrix conditioners,
                            std::optional<Bandwidths> bandwidths = std::nullopt,
                            BandwidthMethod method = BandwidthMethod::RuleOfThumb);

  std::size_t size() const { return responses_.size(); }
  std::size_t conditioning_dim() const override {
    return static_cast<std::size_t>(conditioners_.cols());
  }
  const Bandwidths& bandwidths() const { return bandwidths_; }
  const std::vector<double>& responses() const { return responses_; }
  const Matrix& conditioners() const { return conditioners_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double cdf(double x, std::span<const double> z) const override;
  CdfEvaluation cdf_checked(double x, std::span<const double> z) const;
  double quantile(double u, std::span<const double> z) const override;

  /// Writes the normalised weights w_i(z) into `out` (size n); returns true
  /// when the nearest-conditioner fallback was used.
  bool weights(std::span<const double> z, std::span<double> out) const;
  double cdf_with_weights(double x, std::span<const double> w) const;
  double quantile_with_weights(double u, std::span<const double> w) const;

  /// F(xs[i] | zs.row(i)) for every row; counts fallbacks into `extrapolated`.
  std::vector<double> cdf_rows(std::span<const double> xs, const Matrix& zs,
                               std::size_t* extrapolated = nullptr) const;

 private:
  KernelCdfModel(std::vector<double> responses, Matrix conditioners, Bandwidths bandwidths,
                 std::vector<std::string> warnings);

  std::vector<double> responses_;
  Matrix conditioners_;
  Bandwidths bandwidths_;
  std::vector<std::string> warnings_;
  double min_response_ = 0.0;
  double max_response_ = 0.0;
};

}  // namespace npresid
