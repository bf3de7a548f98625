#pragma once

// Smooth activations and losses with analytic derivatives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "eqsep/linalg.hpp"

namespace eqsep {

struct BumpParams {
  double mu = 0.0;
  double sigma = 1.0;

  BumpParams() = default;
  BumpParams(double m, double s) : mu(m), sigma(s) {
    if (!std::isfinite(mu)) throw std::invalid_argument("BumpParams: mu must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("BumpParams: sigma must be finite and > 0");
  }
};

// Gaussian bump exp(-1/2 ((z - mu) / sigma)^2).
inline double bump(double z, const BumpParams& p) noexcept {
  const double u = (z - p.mu) / p.sigma;
  return std::exp(-0.5 * u * u);
}

inline double bump_grad(double z, const BumpParams& p) noexcept {
  const double d = z - p.mu;
  return -(d / (p.sigma * p.sigma)) * bump(z, p);
}

// d bump / d sigma = ((z - mu)^2 / sigma^3) * bump
inline double bump_grad_sigma(double z, const BumpParams& p) noexcept {
  const double d = z - p.mu;
  return (d * d / (p.sigma * p.sigma * p.sigma)) * bump(z, p);
}

// tanh(v / z^2); equals 1 at z == 0 by continuity.
inline double tanh_bump(double z, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("tanh_bump: v must be > 0");
  if (z == 0.0) return 1.0;
  return std::tanh(v / (z * z));
}

inline double tanh_bump_grad(double z, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("tanh_bump_grad: v must be > 0");
  if (z == 0.0) return 0.0;
  const double arg = v / (z * z);
  if (arg > 350.0) return 0.0;  // sech^2 underflows
  const double sech = 1.0 / std::cosh(arg);
  return sech * sech * (-2.0 * v / (z * z * z));
}

inline double leaky_relu(double z, double alpha = 0.01) noexcept { return z >= 0.0 ? z : alpha * z; }
inline double leaky_relu_grad(double z, double alpha = 0.01) noexcept { return z >= 0.0 ? 1.0 : alpha; }

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double sigmoid_grad(double z) noexcept {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

inline double rbf_unit(ConstVecView x, ConstVecView center, double gamma) {
  require_same_dim(center.size(), x.size(), "rbf_unit");
  return std::exp(-gamma * squared_distance(x, center));
}

// Gradient of rbf_unit with respect to the center: 2 gamma (x - c) * value.
// The gradient with respect to x is its negation.
inline Vector rbf_unit_grad_center(ConstVecView x, ConstVecView center, double gamma) {
  const double value = rbf_unit(x, center, gamma);
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * gamma * (x[i] - center[i]) * value;
  return g;
}

enum class LossKind : std::uint8_t { MSE, Logistic };

constexpr std::string_view to_string(LossKind k) noexcept {
  return k == LossKind::MSE ? "mse" : "ll";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "mse" || s == "MSE") return LossKind::MSE;
  if (s == "ll" || s == "LL" || s == "logistic") return LossKind::Logistic;
  throw std::invalid_argument("unknown loss kind: " + std::string(s));
}

inline constexpr double kLossClamp = 1e-12;

inline double clamp_prediction(double p) noexcept {
  return std::clamp(p, kLossClamp, 1.0 - kLossClamp);
}

inline double loss(LossKind kind, double prediction, int label) noexcept {
  const double y = label != 0 ? 1.0 : 0.0;
  if (kind == LossKind::MSE) {
    const double d = prediction - y;
    return d * d;
  }
  const double p = clamp_prediction(prediction);
  return -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
}

// d loss / d prediction. Inside the clamp region the logistic gradient is zero.
inline double loss_grad(LossKind kind, double prediction, int label) noexcept {
  const double y = label != 0 ? 1.0 : 0.0;
  if (kind == LossKind::MSE) return 2.0 * (prediction - y);
  if (prediction < kLossClamp || prediction > 1.0 - kLossClamp) return 0.0;
  return -y / prediction + (1.0 - y) / (1.0 - prediction);
}

}  // namespace eqsep
