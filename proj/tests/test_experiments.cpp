#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "eqsep/experiments.hpp"

using namespace eqsep;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "eqsep_experiments_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  ::unsetenv("EQSEP_SEED");
  const auto c = resolve_config({{"experiment", "linear1"}, {"dims", {5, 35}}, {"seeds", 3}});
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(c.params["dims"], json({5, 35}));
  EXPECT_EQ(c.params["noise"], json({0.0, 1.0, 2.0}));
  EXPECT_EQ(resolve_config({{"experiment", "closing"}}).seeds.size(), 100u);
  EXPECT_EQ(resolve_config({{"experiment", "xor"}, {"seeds", {4, 9}}}).seeds, (std::vector<std::uint64_t>{4, 9}));
}

TEST(Config, RejectsUnknownAndMistyped) {
  EXPECT_THROW(resolve_config({{"experiment", "linear1"}, {"dimz", {5}}}), ExperimentError);
  EXPECT_THROW(resolve_config({{"experiment", "linear1"}, {"dims", "5"}}), ExperimentError);
  EXPECT_THROW(resolve_config({{"experiment", "circles"}, {"heads", {1, 2}}}), ExperimentError);
  EXPECT_THROW(resolve_config({{"experiment", "nope"}}), ExperimentError);
  EXPECT_THROW(resolve_config({{"seeds", 2}}), ExperimentError);
  EXPECT_THROW(resolve_config({{"experiment", "xor"}, {"seeds", 0}}), ExperimentError);
}

TEST(Config, EnvironmentSeedBase) {
  ::setenv("EQSEP_SEED", "40", 1);
  EXPECT_EQ(resolve_config({{"experiment", "xor"}, {"seeds", 2}}).seeds, (std::vector<std::uint64_t>{40, 41}));
  ::setenv("EQSEP_SEED", "forty", 1);
  EXPECT_THROW(resolve_config({{"experiment", "xor"}}), ExperimentError);
  ::unsetenv("EQSEP_SEED");
}

TEST(Run, WritesResultsAndManifest) {
  const auto dir = fresh_dir("xor");
  auto cfg = resolve_config({{"experiment", "xor"}, {"seeds", 3}});
  cfg.out_dir = dir.string();
  const auto out = run_experiment(cfg);
  EXPECT_TRUE(out.errors.empty());
  write_run(cfg, out);
  const auto csv = slurp(dir / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsHeader);
  const auto m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["experiment"], "xor");
  EXPECT_EQ(m["params"]["sigma"], 10.0);
  EXPECT_EQ(m["status"], "ok");
  // 3 seeds x 2 losses x 4 metrics
  EXPECT_EQ(m["rows"], 24);
}

TEST(Run, ParallelMatchesSequentialBytes) {
  auto cfg = resolve_config({{"experiment", "linear2"}, {"seeds", 4}});
  const auto a = results_csv("linear2", run_experiment(cfg).rows);
  cfg.jobs = 3;
  const auto b = results_csv("linear2", run_experiment(cfg).rows);
  EXPECT_EQ(a, b);
}

TEST(Run, UnwritableOutputFails) {
  const auto dir = fresh_dir("blocked");
  std::ofstream(dir / "file") << "x";
  auto cfg = resolve_config({{"experiment", "lrt"}, {"trials", 1}, {"samples", 10}});
  cfg.out_dir = (dir / "file" / "sub").string();
  EXPECT_THROW(write_run(cfg, run_experiment(cfg)), ExperimentError);
}

TEST(Report, EmptyDirectoryHasNoRuns) {
  const auto rr = collect_report(fresh_dir("empty"));
  EXPECT_EQ(rr.runs, 0u);
}

TEST(Report, SingleSeedHasZeroStd) {
  const auto dir = fresh_dir("single");
  auto cfg = resolve_config({{"experiment", "linear2"}, {"seeds", 1}, {"noise_multipliers", {1.0}}});
  cfg.out_dir = (dir / "a").string();
  write_run(cfg, run_experiment(cfg));
  const auto rr = collect_report(dir);
  ASSERT_EQ(rr.runs, 1u);
  for (const auto& l : rr.lines) EXPECT_EQ(l.stddev, 0.0);
  EXPECT_NE(format_summary_text(rr.lines).find("+-0.00"), std::string::npos);
}

TEST(Report, AggregatesMatchRawRowsAndSkipsCorrupt) {
  const auto dir = fresh_dir("agg");
  auto cfg = resolve_config({{"experiment", "linear2"}, {"seeds", 5}});
  cfg.out_dir = (dir / "run1").string();
  const auto out = run_experiment(cfg);
  write_run(cfg, out);
  fs::create_directories(dir / "broken");
  std::ofstream(dir / "broken" / "manifest.json") << "{ not json";
  const auto rr = collect_report(dir);
  EXPECT_EQ(rr.runs, 1u);
  ASSERT_EQ(rr.problems.size(), 1u);
  EXPECT_NE(rr.problems[0].find("broken"), std::string::npos);
  // Recompute one aggregate directly from the rows (population std).
  std::vector<double> v;
  for (const auto& r : out.rows)
    if (r.condition == "k=7" && r.metric == "test_aupr_normal") v.push_back(r.value);
  ASSERT_EQ(v.size(), 5u);
  double mean = 0;
  for (double x : v) mean += x / 5.0;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean) / 5.0;
  bool found = false;
  for (const auto& l : rr.lines) {
    if (l.condition == "k=7" && l.metric == "test_aupr_normal") {
      found = true;
      EXPECT_NEAR(l.mean, mean, 1e-12);
      EXPECT_NEAR(l.stddev, std::sqrt(var), 1e-12);
    }
  }
  EXPECT_TRUE(found);
  const auto csv = format_summary_csv(rr.lines);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,condition,metric,n,mean,std");
}

TEST(Run, HeatmapWritesGridAndSidecar) {
  const auto dir = fresh_dir("heat");
  auto cfg = resolve_config({{"experiment", "heatmap"}, {"models", {"kernel"}}, {"resolution", {4, 3}}});
  cfg.out_dir = dir.string();
  write_run(cfg, run_experiment(cfg));
  const auto grid = slurp(dir / "heatmap_kernel_seed0.csv");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 3);
  const auto side = json::parse(slurp(dir / "heatmap_kernel_seed0.json"));
  EXPECT_EQ(side["resolution"], json({4, 3}));
}
