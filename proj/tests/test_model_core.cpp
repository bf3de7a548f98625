#include <gtest/gtest.h>

#include <cmath>

#include "eqsep/model_core.hpp"
#include "eqsep/random.hpp"

using namespace eqsep;

TEST(Hyperplane, RejectsZeroAndEmptyWeights) {
  EXPECT_THROW(Hyperplane({0.0, 0.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(Hyperplane({}, 1.0), std::invalid_argument);
  EXPECT_THROW(Hyperplane({1.0, NAN}, 0.0), std::invalid_argument);
}

TEST(SignedDistance, Examples) {
  EXPECT_DOUBLE_EQ(signed_distance(Hyperplane({1, 0}, 0), Vector{2, 0}), 2.0);
  EXPECT_DOUBLE_EQ(signed_distance(Hyperplane({3, 4}, 0), Vector{0, 0}), 0.0);
  EXPECT_NEAR(signed_distance(Hyperplane({1, 1}, -1), Vector{1, 1}), 0.70710678118654752, 1e-15);
  EXPECT_THROW(signed_distance(Hyperplane({1, 1}, -1), Vector{1, 1, 1}), DimensionError);
}

TEST(Decide, XorWitness) {
  const MarginClassifier clf(Hyperplane({1, 1}, -1), 0.0);
  EXPECT_EQ(decide(clf, Vector{0, 1}), 1);
  EXPECT_EQ(decide(clf, Vector{1, 0}), 1);
  EXPECT_EQ(decide(clf, Vector{0, 0}), 0);
  EXPECT_EQ(decide(clf, Vector{1, 1}), 0);
}

TEST(Decide, InclusiveMarginAndComplement) {
  const MarginClassifier in(Hyperplane({1, 0}, 0), 0.5, Polarity::InsidePositive);
  EXPECT_EQ(decide(in, Vector{0.5, 7}), 1);
  EXPECT_EQ(decide(in, Vector{-0.5, 7}), 1);
  const MarginClassifier out(Hyperplane({1, 0}, 0), 0.5, Polarity::OutsidePositive);
  EXPECT_EQ(decide(out, Vector{0.3, 0}), 0);
  EXPECT_THROW(MarginClassifier(Hyperplane({1, 0}, 0), -0.1), std::invalid_argument);
}

TEST(Decide, PolaritiesAreComplementsAndScaleInvariant) {
  CounterRng rng(11, 0);
  for (int t = 0; t < 200; ++t) {
    Vector w{rng.normal(), rng.normal(), rng.normal()};
    const double b = rng.normal(), eps = rng.uniform(0.0, 2.0), c = rng.uniform(0.1, 10.0);
    const MarginClassifier in(Hyperplane(w, b), eps, Polarity::InsidePositive);
    const MarginClassifier out(Hyperplane(w, b), eps, Polarity::OutsidePositive);
    const MarginClassifier scaled(Hyperplane({c * w[0], c * w[1], c * w[2]}, c * b), c * eps);
    for (int k = 0; k < 50; ++k) {
      const Vector x{rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)};
      EXPECT_EQ(decide(in, x) + decide(out, x), 1);
      // Scaling changes rounding only within ~1 ulp of the margin.
      if (std::fabs(std::fabs(Hyperplane(w, b).affine(x)) - eps) > 1e-9) {
        EXPECT_EQ(decide(in, x), decide(scaled, x));
      }
    }
  }
}

TEST(DecideHalfspace, BoundaryIsPositive) {
  EXPECT_EQ(decide_halfspace(Hyperplane({1, 0}, 0), Vector{0, 0}), 1);
  EXPECT_EQ(decide_halfspace(Hyperplane({1, 0}, 0), Vector{-1, 0}), 0);
  CounterRng rng(3, 0);
  for (int k = 0; k < 100; ++k) {
    const Vector x{rng.normal(), rng.normal()};
    EXPECT_EQ(decide_halfspace(Hyperplane({2, 0}, 0), x), decide_halfspace(Hyperplane({1, 0}, 0), x));
  }
}

TEST(RbfScore, Examples) {
  const RbfSeparator sep({1.0, -2.0}, 1.0, 0.5);
  EXPECT_DOUBLE_EQ(rbf_score(sep, Vector{1.0, -2.0}), 1.0);
  EXPECT_NEAR(rbf_score(sep, Vector{2.0, -2.0}), std::exp(-1.0), 1e-15);
  const RbfSeparator sharp({0.0, 0.0}, 1e4, 0.5);
  EXPECT_LT(rbf_score(sharp, Vector{0.1, 0.0}), 1e-40);
  EXPECT_EQ(rbf_decide(sep, Vector{1.0, -2.0}), 1);
  EXPECT_THROW(RbfSeparator({0.0}, 1.0, 1.0), std::invalid_argument);
}

TEST(TwinLrt, Examples) {
  const TwinPair pair(Hyperplane({1, 0}, 1), Hyperplane({1, 0}, -1), 1.0);
  EXPECT_EQ(twin_lrt_decide(pair, Vector{1, 0}), 0);
  EXPECT_EQ(twin_lrt_decide(pair, Vector{-1, 0}), 1);
  EXPECT_EQ(twin_lrt_decide(pair, Vector{0, 0}), 1);
}

TEST(TwinParallel, Examples) {
  const auto a = twin_parallel_hyperplane(TwinPair(Hyperplane({1, 0}, 1), Hyperplane({1, 0}, -1), 1.0));
  EXPECT_EQ(a.plane.weights(), (Vector{2, 0}));
  EXPECT_DOUBLE_EQ(a.plane.bias(), 0.0);
  EXPECT_EQ(a.orientation, -1);
  const auto b = twin_parallel_hyperplane(TwinPair(Hyperplane({0, 1}, -1), Hyperplane({0, 1}, 1), 1.0));
  EXPECT_EQ(b.plane.weights(), (Vector{0, 2}));
  EXPECT_EQ(b.orientation, 1);
}

TEST(TwinParallel, RejectsViolatedConstraints) {
  EXPECT_THROW(twin_parallel_hyperplane(TwinPair(Hyperplane({1, 0}, 1), Hyperplane({1, 0}, 1), 1.0)),
               TwinConstraintError);
  EXPECT_THROW(twin_parallel_hyperplane(TwinPair(Hyperplane({1, 0}, 1), Hyperplane({1, 1e-6}, -1), 1.0)),
               TwinConstraintError);
  EXPECT_THROW(twin_parallel_hyperplane(TwinPair(Hyperplane({1, 0}, 1), Hyperplane({1, 0}, -1), 2.0)),
               TwinConstraintError);
}

TEST(TwinParallel, AgreesWithRatioRuleOffTheBoundary) {
  CounterRng rng(99, 1);
  for (int t = 0; t < 20; ++t) {
    const Vector w{rng.normal(), rng.normal()};
    const double b1 = rng.normal(0, 2), b2 = rng.normal(0, 2);
    const TwinPair pair(Hyperplane(w, b1), Hyperplane(w, b2), 1.0);
    const auto single = twin_parallel_hyperplane(pair);
    for (int k = 0; k < 10000; ++k) {
      const Vector x{rng.normal(0, 3), rng.normal(0, 3)};
      // Oracle: compare squared distances directly.
      const double z1 = dot(w, x) + b1, z2 = dot(w, x) + b2;
      if (std::fabs(2 * dot(w, x) + b1 + b2) <= 1e-9) continue;
      EXPECT_EQ(single.decide(x), z2 * z2 >= z1 * z1 ? 1 : 0);
      EXPECT_EQ(twin_lrt_decide(pair, x), single.decide(x));
    }
  }
}

TEST(LogicGates, AndOrViaPolarity) {
  // AND: the single positive (1,1) sits on a line avoiding the rest.
  const MarginClassifier and_clf(Hyperplane({1, -1}, 0), 0.0);
  EXPECT_EQ(decide(and_clf, Vector{1, 1}), 1);
  EXPECT_EQ(decide(and_clf, Vector{0, 1}), 0);
  EXPECT_EQ(decide(and_clf, Vector{1, 0}), 0);
  // OR: the single negative (0,0) sits on the line; positives are outside.
  const MarginClassifier or_clf(Hyperplane({1, -2}, 0), 0.0, Polarity::OutsidePositive);
  EXPECT_EQ(decide(or_clf, Vector{0, 0}), 0);
  EXPECT_EQ(decide(or_clf, Vector{0, 1}), 1);
  EXPECT_EQ(decide(or_clf, Vector{1, 0}), 1);
  EXPECT_EQ(decide(or_clf, Vector{1, 1}), 1);
}
