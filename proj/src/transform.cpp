#include "npresid/transform.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace npresid {

double residual(const ConditionalCdf& model, double x, std::span<const double> z) {
  return model.cdf(x, z);
}

std::vector<double> residual_rows(const ConditionalCdf& model, std::span<const double> xs,
                                  const Matrix& zs) {
  if (const auto* kernel = dynamic_cast<const KernelCdfModel*>(&model)) {
    return kernel->cdf_rows(xs, zs);
  }
  if (static_cast<std::size_t>(zs.cols()) != model.conditioning_dim()) {
    throw Error("residual_rows: conditioning dimension mismatch");
  }
  const auto d = static_cast<std::size_t>(zs.cols());
  std::vector<double> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) {
    out[i] = model.cdf(xs[i], std::span<const double>(zs.data() + i * d, d));
  });
  return out;
}

// ---------------------------------------------------------------------------
// RosenblattChain
// ---------------------------------------------------------------------------

RosenblattChain::RosenblattChain(std::vector<CdfPtr> stages) : stages_(std::move(stages)) {
  if (stages_.empty()) throw Error("Rosenblatt chain needs at least one stage");
  for (std::size_t j = 0; j < stages_.size(); ++j) {
    if (!stages_[j]) throw Error("Rosenblatt chain stage is null");
    if (stages_[j]->conditioning_dim() != j) {
      throw Error("Rosenblatt stage " + std::to_string(j + 1) + " must condition on " +
                  std::to_string(j) + " coordinates");
    }
  }
}

RosenblattChain RosenblattChain::fit(const Matrix& z, BandwidthMethod method,
                                     const std::optional<std::vector<Bandwidths>>& fixed) {
  const Eigen::Index d = z.cols();
  if (z.rows() < 2) throw ValidationError("Rosenblatt chain fit needs n >= 2");
  if (fixed && fixed->size() != static_cast<std::size_t>(d)) {
    throw Error("frozen chain bandwidths have the wrong stage count");
  }
  std::vector<CdfPtr> stages;
  stages.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> responses(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) responses[i] = z(i, j);
    Matrix conditioners = z.leftCols(j);
    std::optional<Bandwidths> bw;
    if (fixed) bw = (*fixed)[static_cast<std::size_t>(j)];
    stages.push_back(std::make_shared<KernelCdfModel>(
        KernelCdfModel::fit(std::move(responses), std::move(conditioners), bw, method)));
  }
  return RosenblattChain(std::move(stages));
}

std::vector<double> RosenblattChain::apply(std::span<const double> z) const {
  if (z.size() != dim()) throw Error("Rosenblatt chain: point has wrong dimension");
  std::vector<double> out(dim());
  for (std::size_t j = 0; j < dim(); ++j) out[j] = stages_[j]->cdf(z[j], z.first(j));
  return out;
}

Matrix RosenblattChain::apply_rows(const Matrix& z) const {
  if (static_cast<std::size_t>(z.cols()) != dim()) {
    throw Error("Rosenblatt chain: matrix has wrong dimension");
  }
  Matrix out(z.rows(), z.cols());
  std::vector<double> responses(z.rows());
  for (std::size_t j = 0; j < dim(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < z.rows(); ++i) responses[i] = z(i, col);
    const Matrix conditioners = z.leftCols(col);
    const std::vector<double> v = residual_rows(*stages_[j], responses, conditioners);
    for (Eigen::Index i = 0; i < z.rows(); ++i) out(i, col) = v[i];
  }
  return out;
}

std::vector<Bandwidths> RosenblattChain::bandwidths() const {
  std::vector<Bandwidths> out;
  for (const auto& s : stages_) {
    const auto* kernel = dynamic_cast<const KernelCdfModel*>(s.get());
    out.push_back(kernel ? kernel->bandwidths() : Bandwidths{});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residual vector
// ---------------------------------------------------------------------------

ResidualVector make_residual_vector(Matrix u, double clip_epsilon) {
  ResidualVector rv;
  rv.clip_epsilon = clip_epsilon;
  rv.u = std::move(u);
  rv.u = rv.u.cwiseMax(clip_epsilon).cwiseMin(1.0 - clip_epsilon);
  rv.t.resize(rv.u.rows(), rv.u.cols());
  for (Eigen::Index i = 0; i < rv.u.rows(); ++i) {
    for (Eigen::Index j = 0; j < rv.u.cols(); ++j) rv.t(i, j) = std_normal_quantile(rv.u(i, j));
  }
  return rv;
}

ResidualVector build_residual_vector(const Dataset& dataset, const ConditionalCdf& fx,
                                     const ConditionalCdf& fy, const RosenblattChain& fz) {
  const std::size_t n = dataset.size();
  const std::size_t d = dataset.dim();
  if (fx.conditioning_dim() != d || fy.conditioning_dim() != d || fz.dim() != d) {
    throw Error("model dimensions do not match the dataset (d = " + std::to_string(d) + ")");
  }
  const std::vector<double> rx = residual_rows(fx, dataset.x(), dataset.z());
  const std::vector<double> ry = residual_rows(fy, dataset.y(), dataset.z());
  const Matrix rz = fz.apply_rows(dataset.z());

  Matrix u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 2));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    u(r, 0) = rx[i];
    u(r, 1) = ry[i];
    u.row(r).tail(static_cast<Eigen::Index>(d)) = rz.row(r);
  }
  return make_residual_vector(std::move(u), clip_epsilon_for(n));
}

std::vector<double> residual_ks_distances(const ResidualVector& rv) {
  std::vector<double> out;
  std::vector<double> col(rv.u.rows());
  for (Eigen::Index j = 0; j < rv.u.cols(); ++j) {
    for (Eigen::Index i = 0; i < rv.u.rows(); ++i) col[i] = rv.u(i, j);
    out.push_back(ks_uniform_distance(col));
  }
  return out;
}

void write_residual_csv(std::ostream& out, const ResidualVector& rv) {
  const Eigen::Index k = rv.u.cols();
  for (Eigen::Index j = 0; j < k; ++j) out << (j ? "," : "") << "u" << j + 1;
  for (Eigen::Index j = 0; j < k; ++j) out << ",t" << j + 1;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < rv.u.rows(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", rv.u(i, j));
      out << (j ? "," : "") << buf;
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", rv.t(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

TransformModels fit_transform_models(const Dataset& dataset, BandwidthMethod method,
                                     const std::optional<std::vector<Bandwidths>>& frozen) {
  const std::size_t d = dataset.dim();
  if (frozen && frozen->size() != d + 2) throw Error("frozen bandwidths need d + 2 entries");
  std::optional<Bandwidths> bx, by;
  std::optional<std::vector<Bandwidths>> bz;
  if (frozen) {
    bx = (*frozen)[0];
    by = (*frozen)[1];
    bz.emplace(frozen->begin() + 2, frozen->end());
  }
  auto fx = std::make_shared<KernelCdfModel>(
      KernelCdfModel::fit(dataset.x(), dataset.z(), bx, method));
  auto fy = std::make_shared<KernelCdfModel>(
      KernelCdfModel::fit(dataset.y(), dataset.z(), by, method));
  return {std::move(fx), std::move(fy), RosenblattChain::fit(dataset.z(), method, bz)};
}

std::vector<Bandwidths> model_bandwidths(const TransformModels& models) {
  std::vector<Bandwidths> out;
  for (const CdfPtr& m : {models.fx, models.fy}) {
    const auto* kernel = dynamic_cast<const KernelCdfModel*>(m.get());
    out.push_back(kernel ? kernel->bandwidths() : Bandwidths{});
  }
  for (auto& b : models.fz.bandwidths()) out.push_back(std::move(b));
  return out;
}

}  // namespace npresid
