#pragma once

#include "npresid/core.hpp"

#include <span>
#include <vector>

namespace npresid {

/// One-sample energy statistic against N(0, I_k).
struct EnergyGofResult {
  double statistic = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  double mean_expected_distance = 0.0;  ///< (1/n) sum_i E|T_i - Z|
  double mean_pairwise_distance = 0.0;  ///< (1/n^2) sum_ij |T_i - T_j|
  double null_pair_expectation = 0.0;   ///< E|Z - Z'|
};

/// Beyond this excess of |a|^2 over the dimension the alternating series is
/// replaced by quadrature.
inline constexpr double kSeriesSwitchExcess = 50.0;

/// Alternating power series for E|a - Z|, Z ~ N(0, I_m), with coefficients
/// held in log-Gamma form. Build once per dimension and reuse.
class NormalDistanceSeries {
 public:
  explicit NormalDistanceSeries(std::size_t dim);

  std::size_t dim() const { return dim_; }
  /// E|a - Z| as a function of r2 = |a|^2. Loses accuracy to cancellation
  /// once r2 greatly exceeds the switch-over; callers normally use
  /// expected_distance_to_std_normal.
  double evaluate(double r2) const;
  /// E|Z| = sqrt(2) Gamma((m+1)/2) / Gamma(m/2).
  double leading_term() const { return leading_; }

 private:
  std::size_t dim_;
  double leading_;
  std::vector<long double> log_coef_;
};

/// E|a - Z| via one-dimensional adaptive quadrature of the noncentral
/// chi-square Laplace transform; valid for every |a|.
double expected_distance_quadrature(double r2, std::size_t dim);

/// E|a - Z| for Z ~ N(0, I_k), k = a.size().
double expected_distance_to_std_normal(std::span<const double> a);

/// E|Z - Z'| = 2 Gamma((k+1)/2) / Gamma(k/2) for i.i.d. Z, Z' ~ N(0, I_k).
double null_pair_expectation(int k);

/// Sample energy statistic of the rows of t (V-statistic convention).
EnergyGofResult energy_statistic(const Matrix& t);

}  // namespace npresid
