#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eqsep/datagen.hpp"
#include "eqsep/kernel_es.hpp"
#include "eqsep/metrics.hpp"
#include "oracles.hpp"

using namespace eqsep;

namespace {

double ring_mean(const KernelMachine& km, double r) {
  double s = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double th = 2 * std::numbers::pi * i / 100.0;
    s += kernel_score(km, Vector{r * std::cos(th), r * std::sin(th)});
  }
  return s / 100.0;
}

}  // namespace

TEST(KernelScore, ConstantMachine) {
  KernelMachine km;
  km.anchors = Matrix(3, 2);
  km.alpha = {0.0, 0.0, 0.0};
  km.b = 0.0;
  km.bump_params = {0.0, 10.0};
  EXPECT_DOUBLE_EQ(kernel_score(km, Vector{5.0, -3.0}), 1.0);
  EXPECT_THROW(kernel_score(km, Vector{1.0}), DimensionError);
  km.polarity = Polarity::OutsidePositive;
  EXPECT_DOUBLE_EQ(kernel_score(km, Vector{5.0, -3.0}), 0.0);
}

TEST(KernelScore, ContinuousPermutationInvariantAndFlatAtSmallGamma) {
  CounterRng rng(8, 0);
  KernelMachine km;
  for (int i = 0; i < 6; ++i) km.anchors.append_row(Vector{rng.normal(), rng.normal()});
  for (int i = 0; i < 6; ++i) km.alpha.push_back(rng.normal());
  km.b = 0.3;
  km.gamma = 0.7;
  km.bump_params = {0.0, 2.0};
  KernelMachine perm = km;
  perm.anchors = Matrix();
  perm.alpha.clear();
  for (int i = 5; i >= 0; --i) {
    perm.anchors.append_row(km.anchors.row(i));
    perm.alpha.push_back(km.alpha[i]);
  }
  for (int k = 0; k < 100; ++k) {
    const Vector x{rng.normal(), rng.normal()};
    EXPECT_NEAR(kernel_score(km, x), kernel_score(perm, x), 1e-14);
    EXPECT_NEAR(kernel_score(km, x), kernel_score(km, Vector{x[0] + 1e-9, x[1]}), 1e-7);
  }
  km.gamma = 1e-12;
  double sum = km.b;
  for (double a : km.alpha) sum += a;
  EXPECT_NEAR(kernel_score(km, Vector{3, 3}), bump(sum, km.bump_params), 1e-9);
}

TEST(FitKernel, AllPositiveReachesNearZeroLoss) {
  LabeledDataset d;
  CounterRng rng(4, 0);
  for (int i = 0; i < 10; ++i) d.add(Vector{rng.normal(), rng.normal()}, 1);
  OptimConfig cfg;
  const auto fit = fit_kernel_es_detailed(d, 1.0, {0.0, 10.0}, LossKind::MSE, cfg);
  EXPECT_LT(fit.optim.trace.back(), 1e-3);
}

TEST(FitKernel, RejectsDegenerateData) {
  LabeledDataset one;
  one.add(Vector{1.0, 1.0}, 1);
  EXPECT_THROW(fit_kernel_es(one, 1.0, {0.0, 10.0}, LossKind::MSE, OptimConfig{}), DegenerateDataError);
  LabeledDataset same;
  same.add(Vector{1.0, 1.0}, 1);
  same.add(Vector{1.0, 1.0}, 0);
  EXPECT_THROW(fit_kernel_es(same, 1.0, {0.0, 10.0}, LossKind::MSE, OptimConfig{}), DegenerateDataError);
  LabeledDataset two;
  two.add(Vector{1.0, 1.0}, 1);
  two.add(Vector{0.0, 1.0}, 0);
  EXPECT_THROW(fit_kernel_es(two, 0.0, {0.0, 10.0}, LossKind::MSE, OptimConfig{}), std::invalid_argument);
}

TEST(FitKernel, ObjectiveGradientMatchesFiniteDifferences) {
  const auto d = gen_logic(Gate::XOR);
  CounterRng rng(1, 0);
  for (auto lk : {LossKind::MSE, LossKind::Logistic}) {
    for (auto pol : {Polarity::InsidePositive, Polarity::OutsidePositive}) {
      Vector p{rng.normal(), rng.normal(), rng.normal()};
      Vector g(3);
      affine_es_objective(d, {0.0, 2.0}, lk, pol, p, g);
      auto f = [&](const Vector& q) {
        Vector tmp(3);
        return affine_es_objective(d, {0.0, 2.0}, lk, pol, q, tmp);
      };
      for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(oracle::rel_err(g[i], oracle::central_diff(f, p, i, 1e-5)), 1e-5);
    }
  }
}

TEST(FitKernel, CirclesSeparatesRings) {
  const auto split = gen_circles_ad(100, 0.75, 0);
  OptimConfig cfg;
  cfg.seed = 3;
  const auto km = fit_kernel_es(split.train, default_gamma(split.train.points), {0.0, 10.0}, LossKind::MSE, cfg);
  EXPECT_GT(ring_mean(km, 1.0), ring_mean(km, 0.5));
  EXPECT_GT(ring_mean(km, 1.0), ring_mean(km, 2.0));
  std::vector<double> s;
  for (std::size_t i = 0; i < split.test.size(); ++i) s.push_back(kernel_score(km, split.test.point(i)));
  EXPECT_GE(aupr(s, split.test.labels), 0.99);
}

TEST(DefaultGamma, MatchesHandComputation) {
  Matrix m;
  m.append_row(Vector{0.0, 2.0});
  m.append_row(Vector{2.0, 0.0});
  // entries {0,2,2,0}: mean 1, variance 1 -> 1 / (2 * 1)
  EXPECT_DOUBLE_EQ(default_gamma(m), 0.5);
}

TEST(AffineEs, XorWitnessIsRealizedByTheFit) {
  // A separator of the Fig. 1c form is a fixed point: decisions match the truth table.
  const auto d = gen_logic(Gate::XOR);
  AffineEs es;
  es.w = {1.0, 1.0};
  es.b = -1.0;
  es.bump_params = {0.0, 0.5};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(es.predict(d.point(i)), d.labels[i]);
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    OptimConfig cfg;
    cfg.seed = seed;
    const auto fit = fit_affine_es(d, {0.0, 1.0}, LossKind::MSE, cfg);
    int errors = 0;
    for (std::size_t i = 0; i < 4; ++i) errors += fit.predict(d.point(i)) != d.labels[i];
    solved += errors == 0;
  }
  EXPECT_GE(solved, 1);
}
