#pragma once

// Precision-recall curves, step-wise average precision, class-separation
// diagnostics and score heatmaps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqsep/linalg.hpp"

namespace eqsep {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PRPoint {
  double threshold;
  double recall;
  double precision;
};

// One point per distinct score, visited in descending score order; all items
// sharing a score enter together.
struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline PRCurve pr_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw MetricError("pr_curve: scores and labels differ in length");
  PRCurve curve;
  for (int l : labels) (l != 0 ? curve.positives : curve.negatives) += 1;
  if (curve.positives == 0) throw MetricError("pr_curve: no positive labels (recall undefined)");
  for (double s : scores)
    if (std::isnan(s)) throw MetricError("pr_curve: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == s) {
      tp += labels[order[j]] != 0 ? 1 : 0;
      ++j;
    }
    seen = j;
    curve.points.push_back({s, double(tp) / double(curve.positives), double(tp) / double(seen)});
    i = j;
  }
  return curve;
}

inline double average_precision(const PRCurve& curve) {
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : curve.points) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

// Step-wise AP with tie grouping. Higher score = more likely positive.
inline double aupr(std::span<const double> scores, std::span<const int> labels) {
  return average_precision(pr_curve(scores, labels));
}

// AUPR with anomalies (label 0 in the normal-is-1 convention) as the positive
// class, given scores where higher means "more normal".
inline double aupr_anomaly_positive(std::span<const double> normal_scores,
                                    std::span<const int> normal_labels) {
  std::vector<double> s(normal_scores.size());
  std::vector<int> y(normal_labels.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = -normal_scores[i];
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = normal_labels[i] != 0 ? 0 : 1;
  return aupr(s, y);
}

struct SeparationReport {
  double mean_score_normal = 0.0;
  double mean_score_anomaly = 0.0;
  std::optional<double> mean_distance_normal;
  std::optional<double> mean_distance_anomaly;

  double score_gap() const noexcept { return mean_score_normal - mean_score_anomaly; }
  std::optional<double> distance_ratio() const {
    if (!mean_distance_normal || !mean_distance_anomaly) return std::nullopt;
    return *mean_distance_anomaly / *mean_distance_normal;
  }
};

// labels: 1 = normal, 0 = anomaly. distances (optional) are signed distances
// to the output hyperplane of an equality-separator head; their absolute
// values are averaged per group.
inline SeparationReport separation_report(std::span<const double> scores, std::span<const int> labels,
                                          std::span<const double> distances = {}) {
  if (scores.size() != labels.size()) throw MetricError("separation_report: length mismatch");
  if (!distances.empty() && distances.size() != labels.size())
    throw MetricError("separation_report: distance length mismatch");
  double s[2] = {0, 0}, d[2] = {0, 0};
  std::size_t c[2] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int g = labels[i] != 0 ? 1 : 0;
    s[g] += scores[i];
    if (!distances.empty()) d[g] += std::fabs(distances[i]);
    ++c[g];
  }
  if (c[0] == 0 || c[1] == 0) throw MetricError("separation_report: empty group");
  SeparationReport r;
  r.mean_score_normal = s[1] / double(c[1]);
  r.mean_score_anomaly = s[0] / double(c[0]);
  if (!distances.empty()) {
    r.mean_distance_normal = d[1] / double(c[1]);
    r.mean_distance_anomaly = d[0] / double(c[0]);
  }
  return r;
}

struct GridBounds {
  double xmin = -1, xmax = 1, ymin = -1, ymax = 1;
};

using Scorer = std::function<double(ConstVecView)>;

// gy x gx matrix; row j holds y = ymin + (j + 1/2) dy, column i holds
// x = xmin + (i + 1/2) dx.
inline Matrix heatmap_grid(const Scorer& scorer, std::size_t input_dim, GridBounds b, std::size_t gx,
                           std::size_t gy) {
  if (input_dim != 2) throw MetricError("heatmap_grid: model input must be 2-D");
  if (gx == 0 || gy == 0) throw MetricError("heatmap_grid: resolution must be positive");
  if (!(b.xmax > b.xmin) || !(b.ymax > b.ymin)) throw MetricError("heatmap_grid: empty bounds");
  Matrix grid(gy, gx);
  const double dx = (b.xmax - b.xmin) / double(gx);
  const double dy = (b.ymax - b.ymin) / double(gy);
  for (std::size_t j = 0; j < gy; ++j) {
    for (std::size_t i = 0; i < gx; ++i) {
      const double p[2] = {b.xmin + (double(i) + 0.5) * dx, b.ymin + (double(j) + 0.5) * dy};
      grid(j, i) = scorer(p);
    }
  }
  return grid;
}

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  char buf[40];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace eqsep
