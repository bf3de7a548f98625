#pragma once

// Shallow equality separators trained by empirical risk minimisation on a
// bump output:
//   * AffineEs:      score = bump(w^T x + b)
//   * KernelMachine: score = bump(sum_i alpha_i k(x_i, x) + b), k(u,v) = exp(-gamma ||u-v||^2)
// Label 1 is the class that lives inside the margin (InsidePositive); with
// OutsidePositive the labels are flipped for training and the score is
// reported as 1 - bump(.).

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "eqsep/datagen.hpp"
#include "eqsep/linalg.hpp"
#include "eqsep/model_core.hpp"
#include "eqsep/optim.hpp"
#include "eqsep/random.hpp"
#include "eqsep/smooth_units.hpp"

namespace eqsep {

// Half-width on the affine output at which a bump crosses `level`.
inline double bump_half_width(const BumpParams& p, double level = 0.5) {
  return p.sigma * std::sqrt(-2.0 * std::log(level));
}

namespace detail {

inline int trained_label(int label, Polarity polarity) {
  const int y = label != 0 ? 1 : 0;
  return polarity == Polarity::InsidePositive ? y : 1 - y;
}

inline double oriented(double bump_value, Polarity polarity) {
  return polarity == Polarity::InsidePositive ? bump_value : 1.0 - bump_value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Affine equality separator

struct AffineEs {
  Vector w;
  double b = 0.0;
  BumpParams bump_params{0.0, 10.0};
  Polarity polarity = Polarity::InsidePositive;
  OptimResult fit;

  double affine(ConstVecView x) const {
    require_same_dim(w.size(), x.size(), "AffineEs");
    return dot(w, x) + b;
  }

  // Probability-like score that x belongs to class 1.
  double score(ConstVecView x) const {
    return detail::oriented(bump(affine(x), bump_params), polarity);
  }

  int predict(ConstVecView x) const { return score(x) >= 0.5 ? 1 : 0; }

  // The discrete rule obtained by thresholding the bump at 1/2.
  MarginClassifier margin_classifier() const {
    return MarginClassifier(Hyperplane(w, b), bump_half_width(bump_params), polarity);
  }
};

inline double affine_es_objective(const LabeledDataset& data, const BumpParams& bp, LossKind loss_kind,
                                  Polarity polarity, ConstVecView params, VecView grad) {
  const std::size_t n = data.dim();
  const double inv_m = 1.0 / double(data.size());
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.point(i);
    double z = params[n];
    for (std::size_t k = 0; k < n; ++k) z += params[k] * x[k];
    const int y = detail::trained_label(data.labels[i], polarity);
    const double p = bump(z, bp);
    total += loss(loss_kind, p, y);
    const double dz = loss_grad(loss_kind, p, y) * bump_grad(z, bp) * inv_m;
    for (std::size_t k = 0; k < n; ++k) grad[k] += dz * x[k];
    grad[n] += dz;
  }
  return total * inv_m;
}

// Parameters (w, b) start from a standard multivariate normal draw.
inline AffineEs fit_affine_es(const LabeledDataset& data, const BumpParams& bp, LossKind loss_kind,
                              const OptimConfig& cfg, Polarity polarity = Polarity::InsidePositive) {
  if (data.size() == 0) throw std::invalid_argument("fit_affine_es: empty dataset");
  const std::size_t n = data.dim();
  CounterRng rng(cfg.seed, 0xAFF1);
  Vector init(n + 1);
  for (auto& v : init) v = rng.normal();
  const Objective obj = [&](ConstVecView p, VecView g) {
    return affine_es_objective(data, bp, loss_kind, polarity, p, g);
  };
  AffineEs es;
  es.bump_params = bp;
  es.polarity = polarity;
  es.fit = minimize(obj, std::move(init), cfg);
  es.w.assign(es.fit.params.begin(), es.fit.params.begin() + static_cast<std::ptrdiff_t>(n));
  es.b = es.fit.params[n];
  return es;
}

// ---------------------------------------------------------------------------
// RBF-kernel equality separator

struct KernelMachine {
  Matrix anchors;
  Vector alpha;
  double b = 0.0;
  double gamma = 1.0;
  BumpParams bump_params{0.0, 10.0};
  Polarity polarity = Polarity::InsidePositive;

  double decision_value(ConstVecView x) const {
    require_same_dim(anchors.cols(), x.size(), "kernel_score");
    double f = b;
    for (std::size_t i = 0; i < anchors.rows(); ++i)
      f += alpha[i] * std::exp(-gamma * squared_distance(anchors.row(i), x));
    return f;
  }
};

inline double kernel_score(const KernelMachine& km, ConstVecView x) {
  return detail::oriented(bump(km.decision_value(x), km.bump_params), km.polarity);
}

// 1 / (n_features * Var(all entries of X)).
inline double default_gamma(const Matrix& points) {
  const auto flat = points.flat();
  if (flat.empty()) throw std::invalid_argument("default_gamma: empty data");
  double mean = 0.0;
  for (double v : flat) mean += v;
  mean /= double(flat.size());
  double var = 0.0;
  for (double v : flat) var += (v - mean) * (v - mean);
  var /= double(flat.size());
  if (!(var > 0.0)) throw std::invalid_argument("default_gamma: zero-variance data");
  return 1.0 / (double(points.cols()) * var);
}

class DegenerateDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KernelFit {
  KernelMachine machine;
  OptimResult optim;
};

// Anchors are the training points; alpha starts at N(0,1)/m and b at 0.
inline KernelFit fit_kernel_es_detailed(const LabeledDataset& data, double gamma, const BumpParams& bp,
                                        LossKind loss_kind, const OptimConfig& cfg,
                                        Polarity polarity = Polarity::InsidePositive) {
  const std::size_t m = data.size();
  if (m < 2) throw DegenerateDataError("fit_kernel_es: need at least two points");
  bool all_same = true;
  for (std::size_t i = 1; i < m && all_same; ++i)
    all_same = squared_distance(data.point(i), data.point(0)) == 0.0;
  if (all_same) throw DegenerateDataError("fit_kernel_es: all points identical");
  if (!(gamma > 0.0)) throw std::invalid_argument("fit_kernel_es: gamma must be > 0");

  Matrix gram(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j)
      gram(i, j) = gram(j, i) = std::exp(-gamma * squared_distance(data.point(i), data.point(j)));

  std::vector<int> y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = detail::trained_label(data.labels[i], polarity);

  const double inv_m = 1.0 / double(m);
  Vector f(m), dz(m);
  const Objective obj = [&](ConstVecView p, VecView g) {
    const double bias = p[m];
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      f[i] = bias + dot(gram.row(i), p.first(m));
      const double pr = bump(f[i], bp);
      total += loss(loss_kind, pr, y[i]);
      dz[i] = loss_grad(loss_kind, pr, y[i]) * bump_grad(f[i], bp) * inv_m;
    }
    // gram is symmetric, so the alpha gradient is gram * dz.
    double gb = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      g[j] = dot(gram.row(j), dz);
      gb += dz[j];
    }
    g[m] = gb;
    return total * inv_m;
  };

  CounterRng rng(cfg.seed, 0xCE5);
  Vector init(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) init[i] = rng.normal() * inv_m;

  KernelFit out;
  out.optim = minimize(obj, std::move(init), cfg);
  out.machine.anchors = data.points;
  out.machine.alpha.assign(out.optim.params.begin(), out.optim.params.begin() + static_cast<std::ptrdiff_t>(m));
  out.machine.b = out.optim.params[m];
  out.machine.gamma = gamma;
  out.machine.bump_params = bp;
  out.machine.polarity = polarity;
  return out;
}

inline KernelMachine fit_kernel_es(const LabeledDataset& data, double gamma, const BumpParams& bp,
                                   LossKind loss_kind, const OptimConfig& cfg,
                                   Polarity polarity = Polarity::InsidePositive) {
  return fit_kernel_es_detailed(data, gamma, bp, loss_kind, cfg, polarity).machine;
}

}  // namespace eqsep
