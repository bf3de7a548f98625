#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "eqsep/metrics.hpp"
#include "eqsep/random.hpp"
#include "oracles.hpp"

using namespace eqsep;

namespace {

// Random instance of size <= 50 with coarse scores so ties are common.
void random_instance(CounterRng& rng, std::vector<double>& s, std::vector<int>& y) {
  const std::size_t n = 1 + rng.below(50);
  s.resize(n);
  y.resize(n);
  const bool coarse = rng.uniform01() < 0.5;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = coarse ? double(rng.below(5)) / 4.0 : rng.normal();
    y[i] = rng.uniform01() < 0.3;
  }
  y[rng.below(n)] = 1;
}

}  // namespace

TEST(Aupr, Examples) {
  EXPECT_DOUBLE_EQ(aupr(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(aupr(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}), 0.5);
  EXPECT_THROW(aupr(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 0}), MetricError);
  EXPECT_THROW(aupr(std::vector<double>{0.9}, std::vector<int>{0, 1}), MetricError);
  EXPECT_THROW(aupr(std::vector<double>{NAN, 1.0}, std::vector<int>{0, 1}), MetricError);
}

TEST(Aupr, AllTiedEqualsPrevalence) {
  std::vector<double> s(100, 0.5);
  std::vector<int> y(100, 0);
  for (int i = 0; i < 25; ++i) y[i] = 1;
  EXPECT_DOUBLE_EQ(aupr(s, y), 0.25);
}

TEST(Aupr, RandomScoresAverageNearPrevalence) {
  CounterRng rng(12, 0);
  double total = 0.0;
  constexpr int kReps = 400;
  for (int r = 0; r < kReps; ++r) {
    std::vector<double> s(100);
    std::vector<int> y(100, 0);
    for (int i = 0; i < 25; ++i) y[i] = 1;
    for (auto& v : s) v = rng.uniform01();
    total += aupr(s, y);
  }
  // Step-wise AP of a random ranking sits slightly above prevalence at n = 100.
  EXPECT_NEAR(total / kReps, 0.25, 0.04);
}

TEST(Aupr, MatchesBruteForceOracle) {
  CounterRng rng(2718, 0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s;
    std::vector<int> y;
    random_instance(rng, s, y);
    EXPECT_NEAR(aupr(s, y), oracle::brute_force_ap(s, y), 1e-12);
  }
}

TEST(Aupr, MonotoneInvariantAndReversedIsMinimum) {
  CounterRng rng(31, 0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> s;
    std::vector<int> y;
    random_instance(rng, s, y);
    std::vector<double> g(s.size()), rev(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      g[i] = std::exp(3.0 * s[i]) + 7.0;
      rev[i] = -s[i];
    }
    EXPECT_NEAR(aupr(s, y), aupr(g, y), 1e-12);
    // Worst ranking: all positives after all negatives, with distinct scores.
    std::vector<double> worst(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) worst[i] = y[i] ? -1.0 - double(i) : double(i);
    const double min_ap = oracle::brute_force_ap(worst, y);
    EXPECT_GE(aupr(rev, y), min_ap - 1e-12);
    std::vector<double> perfect(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) perfect[i] = y[i] ? 1.0 + double(i) : -double(i);
    std::vector<double> perfect_rev(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) perfect_rev[i] = -perfect[i];
    EXPECT_NEAR(aupr(perfect_rev, y), min_ap, 1e-12);
  }
}

TEST(Aupr, AnomalyPositiveFlipsBothAxes) {
  const std::vector<double> normal_scores{0.9, 0.8, 0.2, 0.7};
  const std::vector<int> labels{1, 1, 0, 1};
  EXPECT_DOUBLE_EQ(aupr_anomaly_positive(normal_scores, labels), 1.0);
  EXPECT_NEAR(aupr_anomaly_positive(normal_scores, labels),
              oracle::brute_force_ap({-0.9, -0.8, -0.2, -0.7}, {0, 0, 1, 0}), 1e-15);
}

TEST(PrCurve, RecallMonotoneAndTiesGrouped) {
  const auto c = pr_curve(std::vector<double>{0.5, 0.5, 0.2, 0.9}, std::vector<int>{1, 0, 1, 0});
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_DOUBLE_EQ(c.points[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(c.points[1].precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.points.back().recall, 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) EXPECT_GE(c.points[i].recall, c.points[i - 1].recall);
}

TEST(Separation, Examples) {
  const std::vector<int> y{1, 1, 0, 0};
  const auto flat = separation_report(std::vector<double>{0.4, 0.4, 0.4, 0.4}, y, {});
  EXPECT_DOUBLE_EQ(flat.score_gap(), 0.0);
  EXPECT_FALSE(flat.mean_distance_normal.has_value());
  const auto r = separation_report(std::vector<double>{1, 1, 0.1, 0.2}, y, std::vector<double>{0.0, -0.0, 3.0, -5.0});
  EXPECT_DOUBLE_EQ(*r.mean_distance_normal, 0.0);
  EXPECT_DOUBLE_EQ(*r.mean_distance_anomaly, 4.0);
  EXPECT_NEAR(r.score_gap(), 0.85, 1e-15);
  EXPECT_THROW(separation_report(std::vector<double>{1, 1}, std::vector<int>{1, 1}, {}), MetricError);
}

TEST(Heatmap, CellCentersAndConstantModel) {
  std::vector<std::pair<double, double>> seen;
  const auto g = heatmap_grid([&](ConstVecView x) {
    seen.emplace_back(x[0], x[1]);
    return 0.25;
  }, 2, {-1, 1, -1, 1}, 3, 3);
  ASSERT_EQ(g.rows(), 3u);
  ASSERT_EQ(g.cols(), 3u);
  for (double v : g.flat()) EXPECT_DOUBLE_EQ(v, 0.25);
  std::set<double> xs, ys;
  for (auto [x, y] : seen) xs.insert(x), ys.insert(y);
  const std::vector<double> expect{-2.0 / 3.0, 0.0, 2.0 / 3.0};
  ASSERT_EQ(xs.size(), 3u);
  std::size_t i = 0;
  for (double x : xs) EXPECT_NEAR(x, expect[i++], 1e-15);
  EXPECT_THROW(heatmap_grid([](ConstVecView) { return 0.0; }, 3, {-1, 1, -1, 1}, 3, 3), std::invalid_argument);
  std::ostringstream os;
  write_matrix_csv(os, g);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
