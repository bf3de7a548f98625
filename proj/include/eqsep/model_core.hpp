#pragma once

// Linear decision rules: halfspace, strict and epsilon-error equality
// separators (with label flipping), RBF separator, and the twin-hyperplane
// pseudo likelihood-ratio test.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "eqsep/linalg.hpp"

namespace eqsep {

class Hyperplane {
 public:
  Hyperplane(Vector w, double b) : w_(std::move(w)), b_(b) {
    if (w_.empty()) throw std::invalid_argument("Hyperplane: dimension must be >= 1");
    if (!all_finite(w_) || !std::isfinite(b_))
      throw std::invalid_argument("Hyperplane: non-finite coefficients");
    norm_ = norm2(w_);
    if (!(norm_ > 0.0)) throw std::invalid_argument("Hyperplane: zero weight vector");
  }

  std::size_t dim() const noexcept { return w_.size(); }
  const Vector& weights() const noexcept { return w_; }
  double bias() const noexcept { return b_; }
  double weight_norm() const noexcept { return norm_; }

  // w^T x + b
  double affine(ConstVecView x) const {
    require_same_dim(dim(), x.size(), "Hyperplane::affine");
    return dot(w_, x) + b_;
  }

 private:
  Vector w_;
  double b_;
  double norm_;
};

enum class Polarity : std::uint8_t { InsidePositive, OutsidePositive };

constexpr Polarity flipped(Polarity p) noexcept {
  return p == Polarity::InsidePositive ? Polarity::OutsidePositive : Polarity::InsidePositive;
}

constexpr std::string_view to_string(Polarity p) noexcept {
  return p == Polarity::InsidePositive ? "inside" : "outside";
}

// Equality separator. eps is the half-width of the margin measured on the
// affine output, so the Euclidean half-width is eps / ||w||. eps == 0 is the
// strict separator.
class MarginClassifier {
 public:
  MarginClassifier(Hyperplane plane, double eps, Polarity polarity = Polarity::InsidePositive)
      : plane_(std::move(plane)), eps_(eps), polarity_(polarity) {
    if (!(eps_ >= 0.0) || !std::isfinite(eps_))
      throw std::invalid_argument("MarginClassifier: eps must be finite and >= 0");
  }

  const Hyperplane& plane() const noexcept { return plane_; }
  double eps() const noexcept { return eps_; }
  Polarity polarity() const noexcept { return polarity_; }
  double euclidean_margin() const noexcept { return eps_ / plane_.weight_norm(); }

 private:
  Hyperplane plane_;
  double eps_;
  Polarity polarity_;
};

struct RbfSeparator {
  Vector center;
  double gamma = 1.0;
  double threshold = 0.5;

  RbfSeparator(Vector c, double g, double t) : center(std::move(c)), gamma(g), threshold(t) {
    if (center.empty()) throw std::invalid_argument("RbfSeparator: empty center");
    if (!(gamma > 0.0)) throw std::invalid_argument("RbfSeparator: gamma must be > 0");
    if (!(threshold > 0.0 && threshold < 1.0))
      throw std::invalid_argument("RbfSeparator: threshold must lie in (0,1)");
  }
};

struct TwinPair {
  Hyperplane plane1;
  Hyperplane plane2;
  double t;

  TwinPair(Hyperplane p1, Hyperplane p2, double threshold)
      : plane1(std::move(p1)), plane2(std::move(p2)), t(threshold) {
    require_same_dim(plane1.dim(), plane2.dim(), "TwinPair");
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("TwinPair: t must be > 0");
  }
};

inline double signed_distance(const Hyperplane& plane, ConstVecView x) {
  return plane.affine(x) / plane.weight_norm();
}

inline int decide(const MarginClassifier& clf, ConstVecView x) {
  const double z = clf.plane().affine(x);
  const bool inside = (-clf.eps() <= z) && (z <= clf.eps());
  return clf.polarity() == Polarity::InsidePositive ? int{inside} : int{!inside};
}

inline int decide_halfspace(const Hyperplane& plane, ConstVecView x) {
  return plane.affine(x) >= 0.0 ? 1 : 0;
}

inline double rbf_score(const RbfSeparator& sep, ConstVecView x) {
  require_same_dim(sep.center.size(), x.size(), "rbf_score");
  return std::exp(-sep.gamma * squared_distance(x, sep.center));
}

inline int rbf_decide(const RbfSeparator& sep, ConstVecView x) {
  return rbf_score(sep, x) >= sep.threshold ? 1 : 0;
}

// 1(eps2 / eps1 >= t). A point on plane 1 gives an infinite ratio and is
// assigned 1.
inline int twin_lrt_decide(const TwinPair& pair, ConstVecView x) {
  const double eps1 = std::fabs(signed_distance(pair.plane1, x));
  const double eps2 = std::fabs(signed_distance(pair.plane2, x));
  if (eps1 == 0.0) return 1;
  return eps2 / eps1 >= pair.t ? 1 : 0;
}

struct OrientedHyperplane {
  Hyperplane plane;
  int orientation;  // +1 or -1

  int decide(ConstVecView x) const {
    return orientation * plane.affine(x) >= 0.0 ? 1 : 0;
  }
};

class TwinConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Under parallel planes (w1 == w2), distinct biases and t == 1 the pseudo-LRT
// reduces to the halfspace 1((b2 - b1)(2 w1^T x + b1 + b2) >= 0).
inline OrientedHyperplane twin_parallel_hyperplane(const TwinPair& pair) {
  const auto& w1 = pair.plane1.weights();
  const auto& w2 = pair.plane2.weights();
  for (std::size_t i = 0; i < w1.size(); ++i) {
    if (std::fabs(w1[i] - w2[i]) > 1e-12)
      throw TwinConstraintError("twin_parallel_hyperplane: weight vectors are not parallel (w1 != w2)");
  }
  if (pair.t != 1.0) throw TwinConstraintError("twin_parallel_hyperplane: requires t == 1");
  const double b1 = pair.plane1.bias();
  const double b2 = pair.plane2.bias();
  if (b1 == b2)
    throw TwinConstraintError(
        "twin_parallel_hyperplane: equal biases leave no separating hyperplane");
  Vector w(w1.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.0 * w1[i];
  return {Hyperplane(std::move(w), b1 + b2), b2 > b1 ? 1 : -1};
}

}  // namespace eqsep
