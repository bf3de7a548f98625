#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eqsep/datagen.hpp"
#include "eqsep/metrics.hpp"
#include "eqsep/network.hpp"
#include "oracles.hpp"

using namespace eqsep;

namespace {

const char* kHeads[] = {"hs", "es", "rs"};
const char* kHidden[] = {"lrelu", "bump", "bump_s", "rbf"};

NetworkModel tiny(const std::string& head, const std::string& hidden, std::uint64_t seed) {
  auto m = make_network(2, 2, 5, parse_activation(hidden), {parse_head(head), 0.5, 1.0});
  m.initialize(seed);
  return m;
}

}  // namespace

TEST(Network, ParameterCount) {
  // dense: (2+1)*5 + (5+1)*5 + head 6
  EXPECT_EQ(tiny("es", "lrelu", 0).param_count(), 15u + 30u + 6u);
  // rbf centers: 2*5 + 5*5, rbf head center 5
  EXPECT_EQ(tiny("rs", "rbf", 0).param_count(), 10u + 25u + 5u);
  // learnable bump adds one sigma per layer
  EXPECT_EQ(tiny("hs", "bump_s", 0).param_count(), 15u + 30u + 6u + 2u);
}

TEST(Network, ZeroWeightsGiveHeadAtZero) {
  auto es = tiny("es", "lrelu", 1);
  es.set_params(Vector(es.param_count(), 0.0));
  EXPECT_DOUBLE_EQ(es.score(Vector{0.3, -2.0}), 1.0);
  auto hs = tiny("hs", "lrelu", 1);
  hs.set_params(Vector(hs.param_count(), 0.0));
  EXPECT_DOUBLE_EQ(hs.score(Vector{0.3, -2.0}), 0.5);
  EXPECT_THROW(hs.score(Vector{1.0}), DimensionError);
}

// Every head/hidden combination, both losses, 2-5-5-1, h = 1e-4.
TEST(Network, BackwardMatchesFiniteDifferences) {
  CounterRng rng(77, 0);
  int checked = 0;
  for (const char* h : kHeads) {
    for (const char* a : kHidden) {
      for (int rep = 0; rep < 10; ++rep) {
        auto m = tiny(h, a, rng.next_u64());
        const Vector x{rng.normal(), rng.normal()};
        const int y = rng.uniform01() < 0.5;
        for (LossKind lk : {LossKind::MSE, LossKind::Logistic}) {
          const Vector g = m.backward(x, y, lk);
          auto f = [&](const Vector& p) {
            NetworkModel c = m;
            c.set_params(p);
            return loss(lk, c.score(x), y);
          };
          for (std::size_t i = 0; i < m.param_count(); ++i) {
            const double fd = oracle::central_diff(f, m.params(), i, 1e-4);
            // Leaky-ReLU kinks: skip coordinates whose difference straddles one.
            if (std::string(a) == "lrelu") {
              const double fd2 = oracle::central_diff(f, m.params(), i, 5e-5);
              if (oracle::rel_err(fd, fd2, 1e-8) > 1e-3) continue;
            }
            EXPECT_LT(oracle::rel_err(g[i], fd, 1e-8), 1e-4) << h << "/" << a << " param " << i;
            ++checked;
          }
        }
      }
    }
  }
  EXPECT_GT(checked, 3000);
}

TEST(Network, PerfectFitHasZeroMseGradientAndDuplicatesDouble) {
  auto m = tiny("es", "bump", 2);
  m.set_params(Vector(m.param_count(), 0.0));
  const Vector g = m.backward(Vector{0.5, 0.5}, 1, LossKind::MSE);
  EXPECT_LT(norm_inf(g), 1e-15);

  auto n = tiny("hs", "lrelu", 3);
  LabeledDataset d;
  d.add(Vector{0.2, -0.4}, 1);
  d.add(Vector{0.2, -0.4}, 1);
  Vector twice(n.param_count(), 0.0);
  n.accumulate_gradient(d.point(0), 1, LossKind::Logistic, 1.0, twice);
  n.accumulate_gradient(d.point(1), 1, LossKind::Logistic, 1.0, twice);
  const Vector once = n.backward(d.point(0), 1, LossKind::Logistic);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-14);
}

TEST(Network, ScoreRanges) {
  CounterRng rng(9, 0);
  auto es = tiny("es", "bump", 4);
  auto hs = tiny("hs", "bump", 4);
  for (int k = 0; k < 500; ++k) {
    const Vector x{rng.normal(0, 5), rng.normal(0, 5)};
    const double s = es.score(x);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
    const double t = hs.score(x);
    EXPECT_GT(t, 0.0);
    EXPECT_LT(t, 1.0);
  }
}

TEST(Network, TrainingIsDeterministicAndFitsARepeatedPoint) {
  LabeledDataset d;
  for (int i = 0; i < 20; ++i) d.add(Vector{0.7, -1.3}, 1);
  OptimConfig cfg;
  cfg.method = OptimMethod::Adam;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 400;
  auto a = tiny("es", "lrelu", 5);
  auto b = tiny("es", "lrelu", 5);
  train(a, d, LossKind::MSE, cfg);
  train(b, d, LossKind::MSE, cfg);
  EXPECT_EQ(a.params(), b.params());
  Vector g(a.param_count());
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  EXPECT_LT(a.mean_loss(d, rows, LossKind::MSE, g), 1e-4);
}

TEST(Network, CirclesEarlyStoppingRestoresBestEpoch) {
  const auto split = gen_circles_ad(100, 0.75, 0);
  OptimConfig cfg;
  cfg.method = OptimMethod::Adam;
  cfg.max_epochs = 1000;
  cfg.patience = 10;
  cfg.validation_fraction = 0.1;
  int stopped = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = tiny("es", "lrelu", seed);
    cfg.seed = seed;
    const auto rep = train(m, split.train, LossKind::Logistic, cfg);
    EXPECT_EQ(rep.validation_rows.size(), 10u);
    EXPECT_EQ(rep.train_rows.size(), 90u);
    const auto& h = rep.history;
    EXPECT_EQ(h.best_val_loss, *std::min_element(h.val_loss.begin(), h.val_loss.end()));
    if (h.stopped_early) {
      ++stopped;
      EXPECT_EQ(h.epochs_run, h.best_epoch + cfg.patience);
      // Restored weights reproduce the best validation loss.
      Vector g(m.param_count());
      EXPECT_NEAR(m.mean_loss(split.train, rep.validation_rows, LossKind::Logistic, g), h.best_val_loss, 1e-12);
    }
  }
  EXPECT_GE(stopped, 1);
}

TEST(Network, LearnableSigmaStaysAboveFloor) {
  auto m = tiny("es", "bump_s", 6);
  auto p = m.params();
  m.set_params(p);
  for (std::size_t li = 0; li < 2; ++li) EXPECT_DOUBLE_EQ(m.layer_sigma(li), 0.5);
  // force sigma negative and clamp
  for (auto& v : m.mutable_params()) v = -1.0;
  m.clamp_sigmas();
  for (std::size_t li = 0; li < 2; ++li) EXPECT_GE(m.layer_sigma(li), kMinLearnableSigma);
}

TEST(Ensemble, MeanOfMembers) {
  auto a = tiny("es", "lrelu", 1);
  a.set_params(Vector(a.param_count(), 0.0));  // scores 1
  auto b = tiny("es", "lrelu", 1);
  Vector p(b.param_count(), 0.0);
  p.back() = 1e3;  // head bias far from the bump center: scores ~0
  b.set_params(p);
  const std::vector<NetworkModel> two{a, b};
  EXPECT_NEAR(ensemble_score(two, Vector{0.1, 0.2}), 0.5, 1e-12);
  const auto c = tiny("hs", "rbf", 3);
  const std::vector<NetworkModel> same{c, c, c};
  EXPECT_DOUBLE_EQ(ensemble_score(same, Vector{0.4, 0.9}), c.score(Vector{0.4, 0.9}));
  EXPECT_THROW(ensemble_score(std::vector<NetworkModel>{}, Vector{0.0, 0.0}), std::invalid_argument);
}

TEST(ModelFile, RoundTripIsExact) {
  for (const char* h : kHeads) {
    for (const char* a : kHidden) {
      const auto m = tiny(h, a, 42);
      const auto text = model_to_json(m);
      const auto back = model_from_json(text);
      EXPECT_EQ(back.params(), m.params());
      EXPECT_EQ(back.seed(), 42u);
      EXPECT_EQ(model_to_json(back), text);
      EXPECT_DOUBLE_EQ(back.score(Vector{0.3, 0.1}), m.score(Vector{0.3, 0.1}));
    }
  }
  EXPECT_THROW(model_from_json("{\"format\":\"other\"}"), ModelFormatError);
  EXPECT_THROW(model_from_json("not json"), ModelFormatError);
}
