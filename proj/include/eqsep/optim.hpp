#pragma once

// Adam, BFGS with Armijo backtracking, and an early-stopping training loop
// that restores the best-validation parameters.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqsep/linalg.hpp"

namespace eqsep {

enum class OptimMethod : std::uint8_t { Adam, BFGS };

constexpr std::string_view to_string(OptimMethod m) noexcept {
  return m == OptimMethod::Adam ? "adam" : "bfgs";
}

struct OptimConfig {
  OptimMethod method = OptimMethod::BFGS;
  double learning_rate = 1e-3;
  int max_epochs = 1000;
  int patience = 0;
  double validation_fraction = 0.0;
  std::uint64_t seed = 0;

  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;  // 0 = full batch

  // BFGS
  double step_tolerance = 1e-10;
  double gradient_tolerance = 1e-8;
  double armijo_c1 = 1e-4;
  int max_halvings = 50;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("OptimConfig: learning_rate must be > 0");
    if (max_epochs < 1) throw std::invalid_argument("OptimConfig: max_epochs must be >= 1");
    if (patience < 0) throw std::invalid_argument("OptimConfig: patience must be >= 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw std::invalid_argument("OptimConfig: validation_fraction must lie in [0,1)");
  }
};

// Returns f(p) and writes the gradient into grad (same size as p).
using Objective = std::function<double(ConstVecView p, VecView grad)>;

class OptimError : public std::runtime_error {
 public:
  OptimError(const std::string& msg, int epoch)
      : std::runtime_error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OptimResult {
  Vector params;
  std::vector<double> trace;  // objective at the start and after every step
  int iterations = 0;
  bool stalled = false;
  std::string stop_reason;
};

// Stateful Adam update rule, reusable for mini-batch training.
class AdamState {
 public:
  AdamState(std::size_t n, const OptimConfig& cfg)
      : m_(n, 0.0), v_(n, 0.0), lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2),
        eps_(cfg.adam_eps) {}

  void step(VecView params, ConstVecView grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  long steps() const noexcept { return t_; }

 private:
  Vector m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

inline void check_finite_eval(double f, ConstVecView g, int epoch) {
  if (!std::isfinite(f)) throw OptimError("non-finite objective value", epoch);
  if (!all_finite(g)) throw OptimError("non-finite gradient", epoch);
}

// Full-gradient Adam, one step per epoch.
inline OptimResult adam_minimize(const Objective& objective, Vector init, const OptimConfig& cfg) {
  cfg.validate();
  OptimResult res;
  res.params = std::move(init);
  Vector grad(res.params.size());
  AdamState adam(res.params.size(), cfg);
  double f = objective(res.params, grad);
  check_finite_eval(f, grad, 0);
  res.trace.push_back(f);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    adam.step(res.params, grad);
    f = objective(res.params, grad);
    check_finite_eval(f, grad, epoch);
    res.trace.push_back(f);
    res.iterations = epoch;
  }
  res.stop_reason = "max_epochs";
  return res;
}

// BFGS on the dense inverse-Hessian approximation with Armijo backtracking
// (initial step 1, halving). Stops when the accepted step norm falls below
// step_tolerance, the gradient inf-norm below gradient_tolerance, or after
// max_epochs iterations. A line search that needs more than max_halvings
// halvings returns the current point flagged as stalled.
inline OptimResult bfgs_minimize(const Objective& objective, Vector init, const OptimConfig& cfg) {
  cfg.validate();
  const std::size_t n = init.size();
  OptimResult res;
  res.params = std::move(init);
  Vector grad(n), trial(n), trial_grad(n), dir(n), s(n), y(n), hy(n);
  Matrix hinv = Matrix::identity(n);

  double f = objective(res.params, grad);
  check_finite_eval(f, grad, 0);
  res.trace.push_back(f);
  bool first_update = true;

  for (int it = 1; it <= cfg.max_epochs; ++it) {
    if (norm_inf(grad) < cfg.gradient_tolerance) {
      res.stop_reason = "gradient_tolerance";
      return res;
    }
    dir = matvec(hinv, grad);
    for (auto& d : dir) d = -d;
    double slope = dot(dir, grad);
    if (!(slope < 0.0)) {
      hinv = Matrix::identity(n);
      for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
      slope = dot(dir, grad);
    }

    double alpha = 1.0;
    double f_trial = 0.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = res.params[i] + alpha * dir[i];
      f_trial = objective(trial, trial_grad);
      if (std::isfinite(f_trial) && all_finite(trial_grad) &&
          f_trial <= f + cfg.armijo_c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.stalled = true;
      res.stop_reason = "line_search_stalled";
      return res;
    }

    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial[i] - res.params[i];
      y[i] = trial_grad[i] - grad[i];
    }
    res.params.swap(trial);
    grad.swap(trial_grad);
    f = f_trial;
    res.trace.push_back(f);
    res.iterations = it;

    if (norm2(s) < cfg.step_tolerance) {
      res.stop_reason = "step_tolerance";
      return res;
    }

    const double sy = dot(s, y);
    if (sy > 1e-12 * norm2(s) * norm2(y)) {
      if (first_update) {
        // Shanno-Phua scaling of the initial inverse Hessian.
        const double scale = sy / dot(y, y);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) hinv(i, j) *= scale;
        first_update = false;
      }
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      hy = matvec(hinv, y);
      const double yhy = dot(y, hy);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          hinv(i, j) += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                        (rho * rho * yhy + rho) * s[i] * s[j];
        }
      }
    }
  }
  res.stop_reason = "max_epochs";
  return res;
}

inline OptimResult minimize(const Objective& objective, Vector init, const OptimConfig& cfg) {
  return cfg.method == OptimMethod::Adam ? adam_minimize(objective, std::move(init), cfg)
                                         : bfgs_minimize(objective, std::move(init), cfg);
}

struct EarlyStopResult {
  Vector params;                  // restored best-validation parameters
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

// Runs `train_epoch(params, epoch)` (returns the epoch's training loss) for up
// to cfg.max_epochs epochs. When cfg.patience > 0 the validation loss is
// monitored after every epoch; training halts after `patience` consecutive
// epochs without strict improvement and the best parameters are restored.
template <typename TrainEpoch, typename ValidationLoss>
EarlyStopResult early_stop_train(Vector params, const OptimConfig& cfg, std::size_t validation_size,
                                 TrainEpoch&& train_epoch, ValidationLoss&& validation_loss) {
  cfg.validate();
  if (cfg.patience > 0 && validation_size == 0)
    throw ConfigError("early stopping with patience > 0 needs a non-empty validation split");

  EarlyStopResult res;
  Vector best = params;
  int wait = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double tl = train_epoch(params, epoch);
    if (!std::isfinite(tl) || !all_finite(params)) throw OptimError("non-finite training state", epoch);
    res.train_loss.push_back(tl);
    res.epochs_run = epoch;
    if (validation_size == 0) {
      res.best_epoch = epoch;
      continue;
    }
    const double vl = validation_loss(params);
    if (!std::isfinite(vl)) throw OptimError("non-finite validation loss", epoch);
    res.val_loss.push_back(vl);
    if (vl < res.best_val_loss) {
      res.best_val_loss = vl;
      res.best_epoch = epoch;
      best = params;
      wait = 0;
    } else if (cfg.patience > 0 && ++wait >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  res.params = cfg.patience > 0 ? std::move(best) : std::move(params);
  return res;
}

}  // namespace eqsep
