#pragma once

#include "npresid/core.hpp"
#include "npresid/kernel_cde.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace npresid {

/// How bandwidths are obtained when fitting kernel models: selected by
/// `method`, or taken verbatim from `fixed` when present.
struct BandwidthPolicy {
  BandwidthMethod method = BandwidthMethod::RuleOfThumb;
  std::optional<Bandwidths> fixed;
};

/// Nonparametric residual F(x | z) of x on z.
double residual(const ConditionalCdf& model, double x, std::span<const double> z);

/// F(xs[i] | zs.row(i)) for every row.
std::vector<double> residual_rows(const ConditionalCdf& model, std::span<const double> xs,
                                  const Matrix& zs);

/// Sequential conditional CDFs Z_1, Z_2 | Z_1, ..., Z_d | Z_{d-1..1}, mapping
/// z to a vector on [0, 1]^d. Stage j (0-based) conditions on j coordinates.
/// Outputs are stored in ascending stage order.
class RosenblattChain {
 public:
  explicit RosenblattChain(std::vector<CdfPtr> stages);

  /// Kernel fit of every stage; `fixed`, when given, supplies per-stage bandwidths.
  static RosenblattChain fit(const Matrix& z, BandwidthMethod method,
                             const std::optional<std::vector<Bandwidths>>& fixed = std::nullopt);

  std::size_t dim() const { return stages_.size(); }
  const std::vector<CdfPtr>& stages() const { return stages_; }

  std::vector<double> apply(std::span<const double> z) const;
  /// Applies the chain to every row of z (n x d) producing n x d probabilities.
  Matrix apply_rows(const Matrix& z) const;

  /// Bandwidths of kernel stages (empty entries for non-kernel stages).
  std::vector<Bandwidths> bandwidths() const;

 private:
  std::vector<CdfPtr> stages_;
};

/// The transformed sample: u holds the probabilities (F(X|Z), F(Y|Z), F_Z(Z))
/// clipped to [eps, 1 - eps]; t = Phi^{-1}(u) entrywise.
struct ResidualVector {
  Matrix u;
  Matrix t;
  double clip_epsilon = 0.0;
};

/// Clip epsilon 1 / (n + 1).
inline double clip_epsilon_for(std::size_t n) { return 1.0 / (static_cast<double>(n) + 1.0); }

/// Clips the probability matrix and applies Phi^{-1}.
ResidualVector make_residual_vector(Matrix u, double clip_epsilon);

ResidualVector build_residual_vector(const Dataset& dataset, const ConditionalCdf& fx,
                                     const ConditionalCdf& fy, const RosenblattChain& fz);

/// Column-wise KS distance of u against U(0, 1).
std::vector<double> residual_ks_distances(const ResidualVector& rv);

/// CSV with header u1..uk,t1..tk and 17 significant digits.
void write_residual_csv(std::ostream& out, const ResidualVector& rv);

/// The three fitted pieces needed for the transform.
struct TransformModels {
  CdfPtr fx;
  CdfPtr fy;
  RosenblattChain fz;
};

/// Kernel fits for x|z, y|z and the chain for z. Frozen bandwidths, when
/// given, must be ordered (x, y, chain stages...).
TransformModels fit_transform_models(const Dataset& dataset, BandwidthMethod method,
                                     const std::optional<std::vector<Bandwidths>>& frozen =
                                         std::nullopt);

/// Bandwidths of (fx, fy, chain stages...) when all are kernel models.
std::vector<Bandwidths> model_bandwidths(const TransformModels& models);

}  // namespace npresid
