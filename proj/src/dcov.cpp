#include "npresid/dcov.hpp"

#include "npresid/transform.hpp"

#include <cmath>
#include <numeric>

namespace npresid {

namespace {

// (1/n^2) sum_ij A_ij B_{perm(i) perm(j)}
double permuted_product(const Matrix& a, const Matrix& b, std::span<const std::size_t> perm) {
  const auto n = static_cast<std::size_t>(a.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * n;
    const double* bi = b.data() + perm[i] * n;
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += ai[j] * bi[perm[j]];
    total += row;
  }
  return total / (static_cast<double>(n) * static_cast<double>(n));
}

void check_pair(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError("distance covariance: samples have " + std::to_string(a.rows()) +
                          " and " + std::to_string(b.rows()) + " rows");
  }
  if (a.rows() < 2) throw ValidationError("distance covariance needs n >= 2");
}

}  // namespace

Matrix double_centered_distances(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (a.row(i) - a.row(j)).norm();
      dist(i, j) = v;
      dist(j, i) = v;
    }
  }
  const Eigen::VectorXd row_mean = dist.rowwise().mean();
  const double grand = row_mean.mean();
  // Symmetric, so column means equal row means.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) += grand - row_mean(i) - row_mean(j);
  }
  return dist;
}

double distance_covariance(const Matrix& a, const Matrix& b) {
  check_pair(a, b);
  const Matrix da = double_centered_distances(a);
  const Matrix db = double_centered_distances(b);
  std::vector<std::size_t> identity(static_cast<std::size_t>(a.rows()));
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  // V_n^2 is nonnegative; clamp rounding noise.
  return std::max(0.0, permuted_product(da, db, identity));
}

DcovResult permutation_independence_test(const Matrix& a, const Matrix& b,
                                         std::size_t permutations, const SeedSpec& seed) {
  check_pair(a, b);
  if (permutations < kMinPermutations) {
    throw ValidationError("permutation test needs at least " + std::to_string(kMinPermutations) +
                          " permutations");
  }
  const Matrix da = double_centered_distances(a);
  const Matrix db = double_centered_distances(b);
  const auto n = static_cast<std::size_t>(a.rows());

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  const double observed = permuted_product(da, db, identity);

  std::vector<char> exceed(permutations, 0);
  parallel_for(permutations, [&](std::size_t p) {
    RandomStream rng = make_stream(substream(seed, p));
    std::vector<std::size_t> perm = identity;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    exceed[p] = permuted_product(da, db, perm) >= observed ? 1 : 0;
  });
  const auto count = static_cast<std::size_t>(std::count(exceed.begin(), exceed.end(), 1));

  DcovResult r;
  r.statistic = std::max(0.0, observed);
  r.n = n;
  r.permutations = permutations;
  r.p_value = (1.0 + static_cast<double>(count)) / (static_cast<double>(permutations) + 1.0);
  return r;
}

DcovResult partial_dcov(const Dataset& dataset, const ConditionalCdf& fx,
                        const ConditionalCdf& fy, std::size_t permutations,
                        const SeedSpec& seed) {
  const std::vector<double> rx = residual_rows(fx, dataset.x(), dataset.z());
  const std::vector<double> ry = residual_rows(fy, dataset.y(), dataset.z());
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const Matrix a = Eigen::Map<const Matrix>(rx.data(), n, 1);
  const Matrix b = Eigen::Map<const Matrix>(ry.data(), n, 1);
  return permutation_independence_test(a, b, permutations, seed);
}

}  // namespace npresid
