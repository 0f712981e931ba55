#pragma once

#include "npresid/core.hpp"
#include "npresid/kernel_cde.hpp"

#include <optional>

namespace npresid {

inline constexpr std::size_t kDefaultPermutations = 999;
inline constexpr std::size_t kMinPermutations = 99;

struct DcovResult {
  double statistic = 0.0;  ///< V_n^2
  std::size_t n = 0;
  std::optional<double> p_value;
  std::size_t permutations = 0;
};

/// Double-centred Euclidean distance matrix of the rows of a.
Matrix double_centered_distances(const Matrix& a);

/// Sample distance covariance V_n^2 = (1/n^2) sum_ij A_ij B_ij.
double distance_covariance(const Matrix& a, const Matrix& b);

/// Permutation test of independence between the rows of a and b; rows of b
/// are permuted, permutation p drawn from substream(seed, p).
/// p = (1 + #{V*_n >= V_n}) / (permutations + 1).
DcovResult permutation_independence_test(const Matrix& a, const Matrix& b,
                                         std::size_t permutations, const SeedSpec& seed);

/// Distance-covariance test between the residuals F(X|Z) and F(Y|Z).
DcovResult partial_dcov(const Dataset& dataset, const ConditionalCdf& fx,
                        const ConditionalCdf& fy, std::size_t permutations,
                        const SeedSpec& seed);

}  // namespace npresid
