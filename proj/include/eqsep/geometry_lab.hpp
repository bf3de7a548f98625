#pragma once

// Empirical geometry checks:
//   * closing_probe   - Monte-Carlo volume of the intersection of `count`
//                       positive regions, across a ladder of box radii
//   * strict_es_*_2d  - exact 2-D feasibility of a labeling under a strict
//                       equality separator (either polarity), with witness
//   * shatter_search  - exhaustive labeling enumeration
//   * lrt_equivalence_check - twin-plane ratio rule vs. the single plane

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "eqsep/linalg.hpp"
#include "eqsep/model_core.hpp"
#include "eqsep/random.hpp"
#include "json.hpp"

namespace eqsep {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Closing probes

enum class ClosingFamily : std::uint8_t { Halfspace, Equality, Rbf };
// Random: independent uniform unit normals. Frame: a Haar-random orthonormal
// frame (further normals, if count > n, are Random). Simplex and SameSide
// apply to the Halfspace family.
enum class NormalMode : std::uint8_t { Random, Frame, Simplex, SameSide };
enum class ClosingVerdict : std::uint8_t { Bounded, Unbounded, Empty, Inconclusive };

constexpr std::string_view to_string(ClosingFamily f) noexcept {
  switch (f) {
    case ClosingFamily::Halfspace: return "halfspace";
    case ClosingFamily::Equality: return "equality";
    case ClosingFamily::Rbf: return "rbf";
  }
  return "?";
}

inline ClosingFamily parse_family(std::string_view s) {
  if (s == "halfspace" || s == "hs") return ClosingFamily::Halfspace;
  if (s == "equality" || s == "es") return ClosingFamily::Equality;
  if (s == "rbf" || s == "rs") return ClosingFamily::Rbf;
  throw GeometryError("unknown hypothesis family: " + std::string(s));
}

constexpr std::string_view to_string(NormalMode m) noexcept {
  switch (m) {
    case NormalMode::Random: return "random";
    case NormalMode::Frame: return "frame";
    case NormalMode::Simplex: return "simplex";
    case NormalMode::SameSide: return "same_side";
  }
  return "?";
}

inline NormalMode parse_normal_mode(std::string_view s) {
  if (s == "random") return NormalMode::Random;
  if (s == "frame") return NormalMode::Frame;
  if (s == "simplex") return NormalMode::Simplex;
  if (s == "same_side") return NormalMode::SameSide;
  throw GeometryError("unknown normal mode: " + std::string(s));
}

constexpr std::string_view to_string(ClosingVerdict v) noexcept {
  switch (v) {
    case ClosingVerdict::Bounded: return "Bounded";
    case ClosingVerdict::Unbounded: return "Unbounded";
    case ClosingVerdict::Empty: return "Empty";
    case ClosingVerdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct ClosingProbeConfig {
  ClosingFamily family = ClosingFamily::Equality;
  std::size_t n = 2;
  std::size_t count = 2;
  std::uint64_t seed = 0;
  std::vector<double> radii{4, 8, 16, 32, 64};
  std::size_t samples_per_box = 200000;
  NormalMode normals = NormalMode::Random;
  double eps = 1.0;         // Equality margin half-width (unit normals)
  double bias_scale = 0.5;  // Equality biases ~ N(0, bias_scale^2)
  double rbf_gamma = 1.0;
  double rbf_threshold = 0.5;
};

struct ClosingProbeReport {
  ClosingFamily family = ClosingFamily::Equality;
  NormalMode normals = NormalMode::Random;
  std::size_t n = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<double> radii;
  std::vector<double> volumes;
  std::vector<double> std_errors;
  std::vector<std::size_t> hits;  // per level (inner box, then shells)
  ClosingVerdict verdict = ClosingVerdict::Inconclusive;
};

// The probed region: intersection of `count` positive regions.
class ProbeRegion {
 public:
  ProbeRegion(const ClosingProbeConfig& cfg, CounterRng& rng) : cfg_(cfg) {
    const std::size_t n = cfg.n;
    if (cfg.family == ClosingFamily::Rbf) {
      for (std::size_t k = 0; k < cfg.count; ++k) {
        Vector c(n);
        for (auto& v : c) v = rng.normal();
        centers_.push_back(std::move(c));
      }
      return;
    }
    if (cfg.family == ClosingFamily::Halfspace && cfg.normals == NormalMode::Simplex) {
      if (cfg.count != n + 1) throw GeometryError("closing_probe: simplex normals need count = n + 1");
      normals_ = rotated_simplex(n, rng);
    } else {
      if (cfg.normals == NormalMode::Frame) {
        const Matrix q = random_rotation(n, rng);
        for (std::size_t k = 0; k < std::min(cfg.count, n); ++k) {
          const auto row = q.row(k);
          normals_.emplace_back(row.begin(), row.end());
        }
      }
      while (normals_.size() < cfg.count) normals_.push_back(random_unit(n, rng));
      if (cfg.family == ClosingFamily::Halfspace && cfg.normals == NormalMode::SameSide) {
        // Reflect so every normal has a positive component along normals_[0].
        const Vector ref = normals_.front();
        for (auto& w : normals_)
          if (dot(w, ref) < 0.0)
            for (auto& v : w) v = -v;
      }
    }
    biases_.assign(normals_.size(), 0.0);
    if (cfg.family == ClosingFamily::Equality)
      for (auto& b : biases_) b = rng.normal() * cfg.bias_scale;
  }

  bool contains(ConstVecView x) const {
    switch (cfg_.family) {
      case ClosingFamily::Rbf:
        for (const auto& c : centers_)
          if (std::exp(-cfg_.rbf_gamma * squared_distance(x, c)) < cfg_.rbf_threshold) return false;
        return true;
      case ClosingFamily::Equality:
        for (std::size_t k = 0; k < normals_.size(); ++k)
          if (std::fabs(dot(normals_[k], x) + biases_[k]) > cfg_.eps) return false;
        return true;
      case ClosingFamily::Halfspace:
        // Positive side of 1 - w^T x >= 0.
        for (const auto& w : normals_)
          if (1.0 - dot(w, x) < 0.0) return false;
        return true;
    }
    return false;
  }

  const std::vector<Vector>& normals() const noexcept { return normals_; }

  static Vector random_unit(std::size_t n, CounterRng& rng) {
    Vector v(n);
    double nv = 0.0;
    while (!(nv > 1e-12)) {
      for (auto& x : v) x = rng.normal();
      nv = norm2(v);
    }
    for (auto& x : v) x /= nv;
    return v;
  }

  // Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
  static Matrix random_rotation(std::size_t n, CounterRng& rng) {
    std::vector<Vector> cols;
    while (cols.size() < n) {
      Vector v(n);
      for (auto& x : v) x = rng.normal();
      for (const auto& c : cols) axpy(-dot(v, c), c, v);
      const double nv = norm2(v);
      if (nv < 1e-8) continue;
      for (auto& x : v) x /= nv;
      cols.push_back(std::move(v));
    }
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) q(i, j) = cols[j][i];
    return q;
  }

  // n+1 unit vectors in R^n with pairwise inner product -1/n, randomly rotated.
  static std::vector<Vector> rotated_simplex(std::size_t n, CounterRng& rng) {
    const std::size_t m = n + 1;
    std::vector<Vector> centered(m, Vector(m, -1.0 / double(m)));
    for (std::size_t i = 0; i < m; ++i) centered[i][i] += 1.0;
    std::vector<Vector> basis;
    for (std::size_t i = 0; i < n; ++i) {
      Vector v = centered[i];
      for (const auto& b : basis) axpy(-dot(v, b), b, v);
      const double nv = norm2(v);
      for (auto& x : v) x /= nv;
      basis.push_back(std::move(v));
    }
    const Matrix q = random_rotation(n, rng);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < m; ++i) {
      Vector c(n);
      for (std::size_t k = 0; k < n; ++k) c[k] = dot(centered[i], basis[k]);
      const double nc = norm2(c);
      for (auto& x : c) x /= nc;
      out.push_back(matvec(q, c));
    }
    return out;
  }

 private:
  ClosingProbeConfig cfg_;
  std::vector<Vector> normals_;
  Vector biases_;
  std::vector<Vector> centers_;
};

// Nested-shell estimator: level 0 samples the box [-R0, R0]^n; level k samples
// the shell between boxes k-1 and k (rejection from box k) and adds
// hit_fraction * shell_volume to the previous volume.
inline ClosingProbeReport closing_probe(const ClosingProbeConfig& cfg) {
  if (cfg.n == 0) throw GeometryError("closing_probe: n must be >= 1");
  if (cfg.n > 6) throw GeometryError("closing_probe: n > 6 is not supported");
  if (cfg.count == 0) throw GeometryError("closing_probe: count must be >= 1");
  if (cfg.radii.empty()) throw GeometryError("closing_probe: empty radius ladder");
  for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
    if (!(cfg.radii[i] > 0.0)) throw GeometryError("closing_probe: radii must be positive");
    if (i && !(cfg.radii[i] > cfg.radii[i - 1])) throw GeometryError("closing_probe: radii must increase");
  }
  if (cfg.samples_per_box == 0) throw GeometryError("closing_probe: samples_per_box must be >= 1");

  CounterRng region_rng(cfg.seed, 0xC105E);
  const ProbeRegion region(cfg, region_rng);

  ClosingProbeReport rep;
  rep.family = cfg.family;
  rep.normals = cfg.normals;
  rep.n = cfg.n;
  rep.count = cfg.count;
  rep.seed = cfg.seed;
  rep.radii = cfg.radii;

  const auto box_volume = [&](double r) { return std::pow(2.0 * r, double(cfg.n)); };
  Vector x(cfg.n);
  double volume = 0.0, variance = 0.0;
  for (std::size_t level = 0; level < cfg.radii.size(); ++level) {
    const double r = cfg.radii[level];
    const double inner = level ? cfg.radii[level - 1] : 0.0;
    CounterRng rng(cfg.seed, 0x5A3D1E00 + level);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < cfg.samples_per_box; ++s) {
      bool in_shell = false;
      while (!in_shell) {
        double linf = 0.0;
        for (auto& v : x) {
          v = rng.uniform(-r, r);
          linf = std::max(linf, std::fabs(v));
        }
        in_shell = level == 0 || linf > inner;
      }
      hits += region.contains(x) ? 1 : 0;
    }
    const double shell = box_volume(r) - (level ? box_volume(inner) : 0.0);
    const double p = double(hits) / double(cfg.samples_per_box);
    volume += p * shell;
    variance += shell * shell * p * (1.0 - p) / double(cfg.samples_per_box);
    rep.hits.push_back(hits);
    rep.volumes.push_back(volume);
    rep.std_errors.push_back(std::sqrt(variance));
  }

  std::size_t total_hits = 0;
  for (auto h : rep.hits) total_hits += h;
  const double vmin = rep.volumes.front(), vmax = rep.volumes.back();
  const double se = std::hypot(rep.std_errors.front(), rep.std_errors.back());
  if (total_hits == 0) rep.verdict = ClosingVerdict::Empty;
  else if (std::fabs(vmax - vmin) <= 3.0 * se) rep.verdict = ClosingVerdict::Bounded;
  else if (vmax > 10.0 * vmin) rep.verdict = ClosingVerdict::Unbounded;
  else rep.verdict = ClosingVerdict::Inconclusive;
  return rep;
}

inline nlohmann::json to_json(const ClosingProbeReport& r) {
  return {{"family", std::string(to_string(r.family))},
          {"normals", std::string(to_string(r.normals))},
          {"n", r.n},
          {"count", r.count},
          {"seed", r.seed},
          {"radii", r.radii},
          {"volumes", r.volumes},
          {"std_errors", r.std_errors},
          {"hits", r.hits},
          {"verdict", std::string(to_string(r.verdict))}};
}

// ---------------------------------------------------------------------------
// 2-D strict equality separator feasibility

inline constexpr double kColinearTol = 1e-9;

namespace detail {

inline double cross2(ConstVecView a, ConstVecView b) { return a[0] * b[1] - a[1] * b[0]; }

// Distance of q from the line through p with direction d.
inline double line_distance(ConstVecView p, ConstVecView d, ConstVecView q) {
  const double diff[2] = {q[0] - p[0], q[1] - p[1]};
  return std::fabs(cross2(d, diff)) / norm2(d);
}

inline void check_points_2d(const std::vector<Vector>& points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw GeometryError("feasibility: points and labels differ in length");
  for (const auto& p : points)
    if (p.size() != 2) throw GeometryError("feasibility: points must be 2-D");
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i] == points[j]) throw GeometryError("feasibility: duplicate points");
}

// Line with normal u through p, as a Hyperplane with exact zero at p.
inline Hyperplane plane_through(ConstVecView p, const Vector& u) { return Hyperplane(u, -dot(u, p)); }

// Best of 2(k+1) directions for a line through p avoiding `others`.
inline Vector best_normal_through(ConstVecView p, const std::vector<Vector>& others) {
  const std::size_t k = 2 * (others.size() + 1);
  Vector best{1.0, 0.0};
  double best_gap = -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double th = (double(i) + 0.5) * std::numbers::pi / double(k);
    const Vector u{std::cos(th), std::sin(th)};
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& q : others) gap = std::min(gap, std::fabs(u[0] * (q[0] - p[0]) + u[1] * (q[1] - p[1])));
    if (gap > best_gap) {
      best_gap = gap;
      best = u;
    }
  }
  return best;
}

inline std::optional<Hyperplane> inside_line(const std::vector<Vector>& inside, const std::vector<Vector>& outside) {
  if (inside.empty()) {
    // Any line missing every point: beyond the largest projection.
    const Vector u{0.6, 0.8};
    double hi = 0.0;
    for (const auto& q : outside) hi = std::max(hi, dot(u, q));
    return Hyperplane(u, -(hi + 1.0));
  }
  if (inside.size() == 1) {
    const Vector u = best_normal_through(inside[0], outside);
    for (const auto& q : outside)
      if (std::fabs(u[0] * (q[0] - inside[0][0]) + u[1] * (q[1] - inside[0][1])) <= kColinearTol)
        return std::nullopt;
    return plane_through(inside[0], u);
  }
  // Direction from inside[0] to the farthest inside point.
  std::size_t far = 1;
  for (std::size_t i = 2; i < inside.size(); ++i)
    if (squared_distance(inside[i], inside[0]) > squared_distance(inside[far], inside[0])) far = i;
  const Vector d{inside[far][0] - inside[0][0], inside[far][1] - inside[0][1]};
  for (const auto& q : inside)
    if (line_distance(inside[0], d, q) > kColinearTol) return std::nullopt;
  for (const auto& q : outside)
    if (line_distance(inside[0], d, q) <= kColinearTol) return std::nullopt;
  const double nd = norm2(d);
  return plane_through(inside[0], Vector{-d[1] / nd, d[0] / nd});
}

}  // namespace detail

// Witness strict separator (eps = 0) realizing the labeling, if any. The
// returned plane has a unit normal and passes through the inside class.
inline std::optional<MarginClassifier> strict_es_witness_2d(const std::vector<Vector>& points,
                                                            std::span<const int> labels) {
  detail::check_points_2d(points, labels);
  for (Polarity pol : {Polarity::InsidePositive, Polarity::OutsidePositive}) {
    const int inside_label = pol == Polarity::InsidePositive ? 1 : 0;
    std::vector<Vector> inside, outside;
    for (std::size_t i = 0; i < points.size(); ++i)
      ((labels[i] != 0 ? 1 : 0) == inside_label ? inside : outside).push_back(points[i]);
    if (auto plane = detail::inside_line(inside, outside)) return MarginClassifier(*plane, 0.0, pol);
  }
  return std::nullopt;
}

inline bool strict_es_feasible_2d(const std::vector<Vector>& points, std::span<const int> labels) {
  return strict_es_witness_2d(points, labels).has_value();
}

// Feasibility under an eps-error separator: the strict witness widened to a
// margin of eps (unit normal), verified point by point with decide().
inline bool eps_es_feasible_2d(const std::vector<Vector>& points, std::span<const int> labels, double eps) {
  const auto w = strict_es_witness_2d(points, labels);
  if (!w) return false;
  const MarginClassifier clf(w->plane(), eps, w->polarity());
  for (std::size_t i = 0; i < points.size(); ++i)
    if (decide(clf, points[i]) != (labels[i] != 0 ? 1 : 0)) return false;
  return true;
}

struct ShatterReport {
  std::vector<Vector> points;
  double eps = 0.0;
  std::vector<bool> feasible;  // indexed by labeling bitmask (bit i = label of point i)
  bool shattered = false;
  std::optional<std::vector<int>> witness;  // first infeasible labeling
};

inline std::vector<int> labeling_from_mask(std::size_t mask, std::size_t m) {
  std::vector<int> y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = int((mask >> i) & 1U);
  return y;
}

inline ShatterReport shatter_search(const std::vector<Vector>& points, double eps = 0.0) {
  if (points.size() > 8) throw GeometryError("shatter_search: at most 8 points");
  if (eps < 0.0) throw GeometryError("shatter_search: eps must be >= 0");
  ShatterReport rep;
  rep.points = points;
  rep.eps = eps;
  const std::size_t total = std::size_t{1} << points.size();
  rep.feasible.resize(total);
  rep.shattered = true;
  for (std::size_t mask = 0; mask < total; ++mask) {
    const auto y = labeling_from_mask(mask, points.size());
    const bool ok = eps == 0.0 ? strict_es_feasible_2d(points, y) : eps_es_feasible_2d(points, y, eps);
    rep.feasible[mask] = ok;
    if (!ok && rep.shattered) {
      rep.shattered = false;
      rep.witness = y;
    }
  }
  return rep;
}

inline nlohmann::json to_json(const ShatterReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back(p);
  std::string bits;
  for (bool b : r.feasible) bits += b ? '1' : '0';
  nlohmann::json j{{"points", pts}, {"eps", r.eps}, {"feasible", bits}, {"shattered", r.shattered}};
  j["witness"] = r.witness ? nlohmann::json(*r.witness) : nlohmann::json(nullptr);
  return j;
}

// k equally spaced points on the unit circle.
inline std::vector<Vector> roots_of_unity(std::size_t k) {
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < k; ++i) {
    const double th = 2.0 * std::numbers::pi * double(i) / double(k);
    pts.push_back({std::cos(th), std::sin(th)});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Twin-plane ratio rule vs. the single-plane form

struct LrtReport {
  std::uint64_t seed = 0;
  std::size_t dim = 2;
  std::size_t trials = 0;
  std::size_t samples = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // within the boundary band
  std::size_t disagreements = 0;

  bool passed() const noexcept { return disagreements == 0; }
};

inline constexpr double kLrtBoundaryBand = 1e-9;

inline LrtReport lrt_equivalence_check(std::uint64_t seed, std::size_t trials, std::size_t samples,
                                       std::size_t dim = 2) {
  if (dim == 0) throw GeometryError("lrt_equivalence_check: dim must be >= 1");
  LrtReport rep;
  rep.seed = seed;
  rep.dim = dim;
  rep.trials = trials;
  rep.samples = samples;
  Vector x(dim);
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng rng(seed, t);
    Vector w(dim);
    do {
      for (auto& v : w) v = rng.normal();
    } while (norm2(w) < 1e-6);
    double b1 = rng.normal() * 2.0, b2 = rng.normal() * 2.0;
    while (b1 == b2) b2 = rng.normal() * 2.0;
    const TwinPair pair{Hyperplane(w, b1), Hyperplane(w, b2), 1.0};
    const OrientedHyperplane single = twin_parallel_hyperplane(pair);
    for (std::size_t s = 0; s < samples; ++s) {
      for (auto& v : x) v = rng.normal() * 3.0;
      if (std::fabs(single.plane.affine(x)) <= kLrtBoundaryBand) {
        ++rep.skipped;
        continue;
      }
      ++rep.checked;
      if (twin_lrt_decide(pair, x) != single.decide(x)) ++rep.disagreements;
    }
  }
  return rep;
}

inline nlohmann::json to_json(const LrtReport& r) {
  return {{"seed", r.seed},       {"dim", r.dim},         {"trials", r.trials},
          {"samples", r.samples}, {"checked", r.checked}, {"skipped", r.skipped},
          {"disagreements", r.disagreements}, {"passed", r.passed()}};
}

}  // namespace eqsep
