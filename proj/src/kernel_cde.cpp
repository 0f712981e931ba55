#include "npresid/kernel_cde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace npresid {

namespace {

// Integrated Gaussian kernel.
inline double kernel_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

inline double kernel_pdf(double t) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * t * t);
}

double column_sd(const Matrix& m, Eigen::Index j) {
  const auto col = m.col(j);
  const double mean = col.mean();
  const double ss = (col.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(m.rows() - 1));
}

void check_conditioning_variance(const Matrix& conditioners) {
  for (Eigen::Index j = 0; j < conditioners.cols(); ++j) {
    const auto col = conditioners.col(j);
    if (col.maxCoeff() == col.minCoeff()) {
      throw ValidationError("conditioning coordinate z" + std::to_string(j + 1) +
                            " has zero variance; drop the degenerate column");
    }
  }
}

double response_sd(std::span<const double> responses) {
  const double sd = sample_sd(responses);
  if (!(sd > 0.0)) throw ValidationError("response has zero variance");
  return sd;
}

Bandwidths rule_of_thumb(std::span<const double> responses, const Matrix& conditioners) {
  const double n = static_cast<double>(responses.size());
  const double d = static_cast<double>(conditioners.cols());
  Bandwidths bw;
  bw.response = kRuleOfThumbConstant * response_sd(responses) * std::pow(n, -2.0 / (d + 4.0));
  bw.conditioning.resize(conditioners.cols());
  for (Eigen::Index j = 0; j < conditioners.cols(); ++j) {
    bw.conditioning[j] =
        kRuleOfThumbConstant * column_sd(conditioners, j) * std::pow(n, -1.0 / (d + 4.0));
  }
  return bw;
}

// ---------------------------------------------------------------------------
// Least-squares cross-validation
// ---------------------------------------------------------------------------

std::vector<double> cv_response_grid(std::span<const double> responses) {
  std::vector<double> sorted(responses.begin(), responses.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid(kCvResponseGridSize);
  const double n = static_cast<double>(sorted.size());
  for (int g = 0; g < kCvResponseGridSize; ++g) {
    const double p = (g + 0.5) / kCvResponseGridSize;
    const auto idx = std::min(sorted.size() - 1, static_cast<std::size_t>(p * n));
    grid[g] = sorted[idx];
  }
  return grid;
}

// Leave-one-out weights: row i holds w_j(Z_i) computed without observation i.
Matrix loo_weights(const Matrix& z, std::span<const double> h) {
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  Matrix w(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t iu) {
    const auto i = static_cast<Eigen::Index>(iu);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) {
        w(i, j) = -std::numeric_limits<double>::infinity();
        continue;
      }
      double e = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double t = (z(i, c) - z(j, c)) / h[c];
        e += t * t;
      }
      w(i, j) = -0.5 * e;
      best = std::max(best, w(i, j));
    }
    const bool underflow = std::exp(best) == 0.0;
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = underflow ? (w(i, j) == best ? 1.0 : 0.0) : std::exp(w(i, j) - best);
      w(i, j) = v;
      total += v;
    }
    w.row(i) /= total;
  });
  return w;
}

Matrix kernel_cdf_table(std::span<const double> responses, std::span<const double> grid,
                        double h) {
  Matrix p(static_cast<Eigen::Index>(responses.size()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < responses.size(); ++j) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      p(j, g) = kernel_cdf((grid[g] - responses[j]) / h);
    }
  }
  return p;
}

double cv_loss(std::span<const double> responses, std::span<const double> grid,
               const Matrix* weights, const Matrix& table) {
  const Eigen::Index n = table.rows();
  const Eigen::Index g_count = table.cols();
  Matrix fitted;
  if (weights != nullptr) {
    fitted = (*weights) * table;
  } else {
    // Marginal case: leave-one-out average of the other n - 1 kernels.
    const Eigen::RowVectorXd colsum = table.colwise().sum();
    fitted = ((-table).rowwise() + colsum) / static_cast<double>(n - 1);
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index g = 0; g < g_count; ++g) {
      const double indicator = responses[i] <= grid[g] ? 1.0 : 0.0;
      const double r = indicator - fitted(i, g);
      row += r * r;
    }
    loss += row;
  }
  return loss;
}

double cv_multiplier(int k) {
  return kCvGridMin * std::pow(kCvGridMax / kCvGridMin, static_cast<double>(k) / (kCvGridSize - 1));
}

Bandwidths least_squares_cv(std::span<const double> responses, const Matrix& conditioners) {
  const Bandwidths base = rule_of_thumb(responses, conditioners);
  const auto d = static_cast<std::size_t>(conditioners.cols());
  const std::vector<double> grid = cv_response_grid(responses);

  constexpr int unit = (kCvGridSize - 1) / 2;  // multiplier 1
  int resp_idx = unit;
  std::vector<int> cond_idx(d, unit);

  auto current = [&] {
    Bandwidths bw;
    bw.response = base.response * cv_multiplier(resp_idx);
    bw.conditioning.resize(d);
    for (std::size_t j = 0; j < d; ++j) bw.conditioning[j] = base.conditioning[j] * cv_multiplier(cond_idx[j]);
    return bw;
  };

  Bandwidths bw = current();
  std::optional<Matrix> weights;
  if (d > 0) weights = loo_weights(conditioners, bw.conditioning);
  Matrix table = kernel_cdf_table(responses, grid, bw.response);

  constexpr int max_sweeps = 3;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;

    double best = std::numeric_limits<double>::infinity();
    int best_k = resp_idx;
    for (int k = 0; k < kCvGridSize; ++k) {
      const Matrix t = kernel_cdf_table(responses, grid, base.response * cv_multiplier(k));
      const double loss = cv_loss(responses, grid, weights ? &*weights : nullptr, t);
      if (loss < best) {
        best = loss;
        best_k = k;
      }
    }
    changed |= best_k != resp_idx;
    resp_idx = best_k;
    bw = current();
    table = kernel_cdf_table(responses, grid, bw.response);

    for (std::size_t j = 0; j < d; ++j) {
      best = std::numeric_limits<double>::infinity();
      best_k = cond_idx[j];
      for (int k = 0; k < kCvGridSize; ++k) {
        std::vector<double> h = bw.conditioning;
        h[j] = base.conditioning[j] * cv_multiplier(k);
        const Matrix w = loo_weights(conditioners, h);
        const double loss = cv_loss(responses, grid, &w, table);
        if (loss < best) {
          best = loss;
          best_k = k;
        }
      }
      changed |= best_k != cond_idx[j];
      cond_idx[j] = best_k;
      bw = current();
      weights = loo_weights(conditioners, bw.conditioning);
    }
    if (!changed) break;
  }
  return bw;
}

}  // namespace

// ---------------------------------------------------------------------------
// Bandwidths
// ---------------------------------------------------------------------------

std::string to_string(BandwidthMethod method) {
  return method == BandwidthMethod::RuleOfThumb ? "rule-of-thumb" : "least-squares-cv";
}

BandwidthMethod parse_bandwidth_method(const std::string& name) {
  if (name == "rule-of-thumb") return BandwidthMethod::RuleOfThumb;
  if (name == "least-squares-cv" || name == "lscv") return BandwidthMethod::LeastSquaresCv;
  throw ValidationError("unknown bandwidth method '" + name +
                        "' (expected rule-of-thumb or least-squares-cv)");
}

void Bandwidths::validate() const {
  auto ok = [](double h) { return std::isfinite(h) && h > 0.0; };
  if (!ok(response)) throw ValidationError("response bandwidth must be positive and finite");
  for (double h : conditioning) {
    if (!ok(h)) throw ValidationError("conditioning bandwidths must be positive and finite");
  }
}

Bandwidths select_bandwidths(std::span<const double> responses, const Matrix& conditioners,
                             BandwidthMethod method, std::vector<std::string>* warnings) {
  if (responses.size() < 2) throw ValidationError("bandwidth selection needs n >= 2");
  if (static_cast<std::size_t>(conditioners.rows()) != responses.size()) {
    throw ValidationError("responses and conditioners differ in length");
  }
  check_conditioning_variance(conditioners);
  if (method == BandwidthMethod::LeastSquaresCv) {
    if (responses.size() >= 10) return least_squares_cv(responses, conditioners);
    if (warnings) {
      warnings->push_back("least-squares-cv needs n >= 10; using rule-of-thumb bandwidths");
    }
  }
  return rule_of_thumb(responses, conditioners);
}

double cv_criterion(std::span<const double> responses, const Matrix& conditioners,
                    const Bandwidths& bandwidths) {
  bandwidths.validate();
  const std::vector<double> grid = cv_response_grid(responses);
  const Matrix table = kernel_cdf_table(responses, grid, bandwidths.response);
  if (conditioners.cols() == 0) return cv_loss(responses, grid, nullptr, table);
  const Matrix w = loo_weights(conditioners, bandwidths.conditioning);
  return cv_loss(responses, grid, &w, table);
}

// ---------------------------------------------------------------------------
// KernelCdfModel
// ---------------------------------------------------------------------------

KernelCdfModel::KernelCdfModel(std::vector<double> responses, Matrix conditioners,
                               Bandwidths bandwidths, std::vector<std::string> warnings)
    : responses_(std::move(responses)),
      conditioners_(std::move(conditioners)),
      bandwidths_(std::move(bandwidths)),
      warnings_(std::move(warnings)) {
  const auto [lo, hi] = std::minmax_element(responses_.begin(), responses_.end());
  min_response_ = *lo;
  max_response_ = *hi;
}

KernelCdfModel KernelCdfModel::fit(std::vector<double> responses, Matrix conditioners,
                                   std::optional<Bandwidths> bandwidths, BandwidthMethod method) {
  if (responses.size() < 2) {
    throw ValidationError("conditional cdf fit needs n >= 2, got " +
                          std::to_string(responses.size()));
  }
  if (static_cast<std::size_t>(conditioners.rows()) != responses.size()) {
    throw ValidationError("responses and conditioners differ in length");
  }
  check_conditioning_variance(conditioners);
  std::vector<std::string> warnings;
  Bandwidths bw = bandwidths ? *bandwidths
                             : select_bandwidths(responses, conditioners, method, &warnings);
  bw.validate();
  if (bw.conditioning.size() != static_cast<std::size_t>(conditioners.cols())) {
    throw ValidationError("expected " + std::to_string(conditioners.cols()) +
                          " conditioning bandwidths, got " + std::to_string(bw.conditioning.size()));
  }
  return KernelCdfModel(std::move(responses), std::move(conditioners), std::move(bw),
                        std::move(warnings));
}

bool KernelCdfModel::weights(std::span<const double> z, std::span<double> out) const {
  const std::size_t n = size();
  const std::size_t d = conditioning_dim();
  if (z.size() != d) {
    throw Error("conditioning point has dimension " + std::to_string(z.size()) + ", expected " +
                std::to_string(d));
  }
  if (d == 0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n));
    return false;
  }
  const double* data = conditioners_.data();
  const std::vector<double>& h = bandwidths_.conditioning;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double e = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double t = (z[c] - data[i * d + c]) / h[c];
      e += t * t;
    }
    out[i] = -0.5 * e;
    best = std::max(best, out[i]);
  }
  // The unnormalised kernel sum underflows exactly when its largest term does.
  const bool extrapolated = std::exp(best) == 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = extrapolated ? (out[i] == best ? 1.0 : 0.0) : std::exp(out[i] - best);
    out[i] = v;
    total += v;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  return extrapolated;
}

double KernelCdfModel::cdf_with_weights(double x, std::span<const double> w) const {
  const double h = bandwidths_.response;
  double s = 0.0;
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    if (w[i] != 0.0) s += w[i] * kernel_cdf((x - responses_[i]) / h);
  }
  return std::clamp(s, 0.0, 1.0);
}

CdfEvaluation KernelCdfModel::cdf_checked(double x, std::span<const double> z) const {
  if (!std::isfinite(x)) throw DomainError("cdf: non-finite response value");
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("cdf: non-finite conditioning value");
  }
  std::vector<double> w(size());
  const bool extrapolated = weights(z, w);
  return {cdf_with_weights(x, w), extrapolated};
}

double KernelCdfModel::cdf(double x, std::span<const double> z) const {
  return cdf_checked(x, z).value;
}

double KernelCdfModel::quantile_with_weights(double u, std::span<const double> w) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("quantile: probability must lie in (0, 1), got " + std::to_string(u));
  }
  const double h = bandwidths_.response;
  const std::size_t n = responses_.size();

  auto eval = [&](double x, double& density) {
    double s = 0.0, f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      const double t = (x - responses_[i]) / h;
      s += w[i] * kernel_cdf(t);
      f += w[i] * kernel_pdf(t);
    }
    density = f / h;
    return s;
  };

  double lo = min_response_ - 10.0 * h;
  double hi = max_response_ + 10.0 * h;
  double dummy;
  for (double width = hi - lo; eval(lo, dummy) > u; width *= 2.0) lo -= width;
  for (double width = hi - lo; eval(hi, dummy) < u; width *= 2.0) hi += width;

  // Start from the moment-matched normal, then Newton steps that are
  // rejected in favour of bisection whenever they leave the bracket.
  double mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += w[i] * responses_[i];
    second += w[i] * responses_[i] * responses_[i];
  }
  const double spread = std::sqrt(std::max(second - mean * mean, 0.0) + h * h);
  double x = std::clamp(mean + spread * std_normal_quantile(u), lo, hi);

  constexpr double tolerance = 1e-12;
  constexpr int max_iterations = 200;
  for (int it = 0; it < max_iterations; ++it) {
    double density;
    const double f = eval(x, density) - u;
    if (std::abs(f) <= tolerance) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (!(hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))))
      break;
    const double newton = density > 0.0 ? x - f / density : std::numeric_limits<double>::quiet_NaN();
    x = (newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  return x;
}

double KernelCdfModel::quantile(double u, std::span<const double> z) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("quantile: probability must lie in (0, 1), got " + std::to_string(u));
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("quantile: non-finite conditioning value");
  }
  std::vector<double> w(size());
  weights(z, w);
  return quantile_with_weights(u, w);
}

std::vector<double> KernelCdfModel::cdf_rows(std::span<const double> xs, const Matrix& zs,
                                             std::size_t* extrapolated) const {
  if (xs.size() != static_cast<std::size_t>(zs.rows())) {
    throw Error("cdf_rows: point count mismatch");
  }
  if (static_cast<std::size_t>(zs.cols()) != conditioning_dim()) {
    throw Error("cdf_rows: conditioning dimension mismatch");
  }
  const std::size_t rows = xs.size();
  const std::size_t d = conditioning_dim();
  std::vector<double> out(rows);
  std::vector<char> flags(rows, 0);
  parallel_for(rows, [&](std::size_t r) {
    std::vector<double> w(size());
    flags[r] = weights(std::span<const double>(zs.data() + r * d, d), w) ? 1 : 0;
    out[r] = cdf_with_weights(xs[r], w);
  });
  if (extrapolated) *extrapolated = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
  return out;
}

}  // namespace npresid
