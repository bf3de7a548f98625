#pragma once

// Experiment runner behind the command-line tool and the acceptance checks.
//
// A run is (experiment name, seeds, parameter overrides). Every experiment
// produces long-format rows (condition, seed, metric, value) that are written
// to results.csv next to a manifest.json echoing the resolved configuration.
// Rows are merged in seed order, so the results file does not depend on the
// number of worker threads.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "eqsep/datagen.hpp"
#include "eqsep/geometry_lab.hpp"
#include "eqsep/kernel_es.hpp"
#include "eqsep/metrics.hpp"
#include "eqsep/model_core.hpp"
#include "eqsep/network.hpp"
#include "eqsep/optim.hpp"
#include "json.hpp"

namespace eqsep {

using nlohmann::json;

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ResultRow {
  std::string condition;
  std::string seed;
  std::string metric;
  double value = 0.0;
};

struct Artifact {
  std::string path;  // relative to the output directory
  std::string content;
};

struct RunOutput {
  std::vector<ResultRow> rows;
  std::vector<Artifact> artifacts;
  std::vector<std::string> errors;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  json params = json::object();  // fully resolved
  std::string out_dir;
  unsigned jobs = 1;
};

// ---------------------------------------------------------------------------
// Registry of experiments and their defaults

struct ExperimentInfo {
  std::string name;
  std::size_t default_seed_count;
  json defaults;
  std::string description;
};

inline const std::vector<ExperimentInfo>& experiment_registry() {
  static const std::vector<ExperimentInfo> reg = {
      {"xor", 20, {{"sigma", 10.0}, {"losses", {"mse", "ll"}}, {"max_iter", 1000}},
       "affine equality separator on the XOR points, BFGS"},
      {"logic", 20,
       {{"sigma", 10.0}, {"losses", {"mse", "ll"}}, {"gates", {"and", "or", "xor"}}, {"max_iter", 1000}},
       "AND/OR/XOR with both polarities"},
      {"linear1", 20,
       {{"dims", {5, 10, 20, 35}},
        {"noise", {0.0, 1.0, 2.0}},
        {"m", 100},
        {"pos_ratio", 0.9},
        {"sigma", 10.0},
        {"loss", "mse"},
        {"max_iter", 1000}},
       "positives on a hyperplane, uniform negatives"},
      {"linear2", 20,
       {{"noise_multipliers", {1.0, 7.0, 13.0, 19.0}},
        {"m", 100},
        {"pos_ratio", 0.9},
        {"sigma", 10.0},
        {"loss", "mse"},
        {"max_iter", 1000}},
       "two 2-D Gaussians with growing spread"},
      {"circles", 20,
       {{"heads", {"hs", "es", "rs"}},
        {"hidden", {"lrelu", "bump", "rbf"}},
        {"losses", {"ll"}},
        {"depth", 2},
        {"width", 5},
        {"sigma_hidden", 0.5},
        {"sigma_out", 0.5},
        {"rbf_gamma", 1.0},
        {"epochs", 1000},
        {"patience", 10},
        {"validation_fraction", 0.1},
        {"lr", 0.001},
        {"batch_size", 32},
        {"split", "stratified"},
        {"m", 100},
        {"pos_ratio", 0.75},
        {"data_seed", 0},
        {"kernel", true},
        {"kernel_sigma", 10.0},
        {"kernel_gamma", 0.0},
        {"kernel_losses", {"mse", "ll"}},
        {"kernel_max_iter", 1000},
        {"ensemble", true},
        {"save_models", false}},
       "supervised AD on circles: kernel ES and network grid"},
      {"closing", 100,
       {{"dims", {2, 3}},
        {"cases", {"rbf", "equality", "equality_minus", "halfspace_simplex", "halfspace"}},
        {"radii", {4.0, 8.0, 16.0, 32.0, 64.0}},
        {"samples", 200000},
        {"eps", 1.0},
        {"bias_scale", 0.5},
        {"equality_normals", "frame"},
        {"rbf_gamma", 1.0}},
       "Monte-Carlo closing-number probes"},
      {"vcdim", 1, {{"roots", 5}, {"eps", {0.0, 1e-6}}, {"random_sets", 100}, {"random_points", 6}},
       "2-D shattering checks"},
      {"lrt", 1, {{"trials", 100}, {"samples", 10000}, {"dim", 2}}, "twin-plane ratio rule vs single plane"},
      {"heatmap", 1,
       {{"models", {"kernel", "es-rbf"}},
        {"bounds", {-2.5, 2.5, -2.5, 2.5}},
        {"resolution", {50, 50}},
        {"loss", "ll"},
        {"kernel_loss", "mse"},
        {"kernel_sigma", 10.0},
        {"kernel_gamma", 0.0},
        {"kernel_max_iter", 1000},
        {"depth", 2},
        {"width", 5},
        {"sigma_hidden", 0.5},
        {"sigma_out", 0.5},
        {"rbf_gamma", 1.0},
        {"epochs", 1000},
        {"patience", 10},
        {"validation_fraction", 0.1},
        {"lr", 0.001},
        {"batch_size", 32},
        {"split", "stratified"},
        {"m", 100},
        {"pos_ratio", 0.75},
        {"data_seed", 0}},
       "score grids for 2-D circle models"},
  };
  return reg;
}

inline const ExperimentInfo& find_experiment(const std::string& name) {
  for (const auto& e : experiment_registry())
    if (e.name == name) return e;
  std::string known;
  for (const auto& e : experiment_registry()) known += (known.empty() ? "" : ", ") + e.name;
  throw ExperimentError("unknown experiment '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Configuration resolution

namespace detail {

inline bool same_kind(const json& def, const json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : v)
      if (!same_kind(def.front(), e)) return false;
    return true;
  }
  return false;
}

inline std::string kind_name(const json& def) {
  if (def.is_number()) return "a number";
  if (def.is_boolean()) return "a boolean";
  if (def.is_string()) return "a string";
  if (def.is_array()) return def.empty() ? "an array" : "an array of " + kind_name(def.front()).substr(2);
  return "a value";
}

}  // namespace detail

// Seed used when none is given: EQSEP_SEED if set, otherwise 0.
inline std::uint64_t default_base_seed() {
  if (const char* s = std::getenv("EQSEP_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw ExperimentError(std::string("EQSEP_SEED is not an unsigned integer: '") + s + "'");
  }
  return 0;
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = base + i;
  return s;
}

// `doc` may hold "experiment", "seeds" (count or list), "out", "jobs" and any
// parameter of the experiment. Unknown keys and mistyped values are rejected.
inline ExperimentConfig resolve_config(const json& doc) {
  if (!doc.is_object()) throw ExperimentError("config must be a JSON object");
  if (!doc.contains("experiment") || !doc["experiment"].is_string())
    throw ExperimentError("config: missing string key 'experiment'");
  const auto& info = find_experiment(doc["experiment"].get<std::string>());

  ExperimentConfig cfg;
  cfg.experiment = info.name;
  cfg.params = info.defaults;
  cfg.seeds = seed_range(default_base_seed(), info.default_seed_count);

  for (const auto& [key, value] : doc.items()) {
    if (key == "experiment") continue;
    if (key == "seeds") {
      if (value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() > 0)) {
        const auto n = value.get<std::size_t>();
        if (n == 0) throw ExperimentError("config: 'seeds' must be positive");
        cfg.seeds = seed_range(default_base_seed(), n);
      } else if (value.is_array() && !value.empty()) {
        cfg.seeds.clear();
        for (const auto& s : value) {
          if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            throw ExperimentError("config: 'seeds' entries must be unsigned integers");
          cfg.seeds.push_back(s.get<std::uint64_t>());
        }
      } else {
        throw ExperimentError("config: 'seeds' must be a positive count or a non-empty list");
      }
      continue;
    }
    if (key == "out") {
      if (!value.is_string()) throw ExperimentError("config: 'out' must be a string");
      cfg.out_dir = value.get<std::string>();
      continue;
    }
    if (key == "jobs") {
      if (!value.is_number_integer() || value.get<long long>() < 1)
        throw ExperimentError("config: 'jobs' must be a positive integer");
      cfg.jobs = value.get<unsigned>();
      continue;
    }
    if (!info.defaults.contains(key))
      throw ExperimentError("config: unknown key '" + key + "' for experiment '" + info.name + "'");
    if (!detail::same_kind(info.defaults[key], value))
      throw ExperimentError("config: key '" + key + "' must be " + detail::kind_name(info.defaults[key]));
    cfg.params[key] = value;
  }
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["seeds"] = cfg.seeds;
  j["params"] = cfg.params;
  j["jobs"] = cfg.jobs;
  return j;
}

// ---------------------------------------------------------------------------
// Helpers

namespace detail {

// Runs fn(seed) for every seed on up to `jobs` threads; results in seed order.
template <typename Fn>
auto map_seeds(const std::vector<std::uint64_t>& seeds, unsigned jobs, Fn&& fn) {
  using R = decltype(fn(std::uint64_t{0}));
  std::vector<std::optional<R>> out(seeds.size());
  std::vector<std::exception_ptr> errs(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        out[i].emplace(fn(seeds[i]));
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return std::make_pair(std::move(out), std::move(errs));
}

inline std::string error_text(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

// Collects per-seed rows in order, turning per-seed failures into errors.
template <typename Fn>
void run_per_seed(const ExperimentConfig& cfg, RunOutput& out, Fn&& fn) {
  auto [res, errs] = map_seeds(cfg.seeds, cfg.jobs, fn);
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (errs[i]) {
      out.errors.push_back("seed " + std::to_string(cfg.seeds[i]) + ": " + error_text(errs[i]));
      continue;
    }
    for (auto& r : res[i]->rows) out.rows.push_back(std::move(r));
    for (auto& a : res[i]->artifacts) out.artifacts.push_back(std::move(a));
  }
}

struct SeedOutput {
  std::vector<ResultRow> rows;
  std::vector<Artifact> artifacts;
};

inline std::vector<std::string> strings(const json& j) { return j.get<std::vector<std::string>>(); }

inline OptimConfig bfgs_config(std::uint64_t seed, int max_iter) {
  OptimConfig c;
  c.method = OptimMethod::BFGS;
  c.max_epochs = max_iter;
  c.seed = seed;
  return c;
}

inline std::string num_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <typename Scorer>
std::vector<double> score_all(const LabeledDataset& d, Scorer&& s) {
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = s(d.point(i));
  return out;
}

inline void add_aupr_rows(SeedOutput& so, const std::string& cond, const std::string& seed, const std::string& prefix,
                          std::span<const double> scores, std::span<const int> labels) {
  so.rows.push_back({cond, seed, prefix + "aupr_normal", aupr(scores, labels)});
  so.rows.push_back({cond, seed, prefix + "aupr_anomaly", aupr_anomaly_positive(scores, labels)});
}

inline int count_errors(const AffineEs& es, const LabeledDataset& d) {
  int errors = 0;
  for (std::size_t i = 0; i < d.size(); ++i) errors += es.predict(d.point(i)) != (d.labels[i] != 0 ? 1 : 0);
  return errors;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Network construction shared by circles and heatmap

struct NetworkChoice {
  HeadKind head;
  std::string hidden;
};

inline NetworkChoice parse_network_choice(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw ExperimentError("network model must look like <head>-<hidden>: " + s);
  return {parse_head(s.substr(0, dash)), s.substr(dash + 1)};
}

inline NetworkModel build_network(const json& p, HeadKind head, const std::string& hidden) {
  Activation act = parse_activation(hidden);
  if (auto* b = std::get_if<BumpAct>(&act)) b->sigma = p["sigma_hidden"].get<double>();
  if (auto* r = std::get_if<RbfAct>(&act)) r->gamma = p["rbf_gamma"].get<double>();
  HeadSpec hs{head, p["sigma_out"].get<double>(), p["rbf_gamma"].get<double>()};
  return make_network(2, p["depth"].get<std::size_t>(), p["width"].get<std::size_t>(), act, hs);
}

inline OptimConfig network_optim(const json& p, std::uint64_t seed) {
  OptimConfig c;
  c.method = OptimMethod::Adam;
  c.learning_rate = p["lr"].get<double>();
  c.max_epochs = p["epochs"].get<int>();
  c.patience = p["patience"].get<int>();
  c.validation_fraction = p["validation_fraction"].get<double>();
  c.batch_size = p["batch_size"].get<std::size_t>();
  c.seed = seed;
  return c;
}

inline SplitMode parse_split(const std::string& s) {
  if (s == "stratified") return SplitMode::Stratified;
  if (s == "random") return SplitMode::Random;
  throw ExperimentError("split must be 'stratified' or 'random'");
}

inline NetworkModel train_network(const json& p, HeadKind head, const std::string& hidden, LossKind loss,
                                  const LabeledDataset& train_data, std::uint64_t seed, TrainReport* report = nullptr) {
  NetworkModel m = build_network(p, head, hidden);
  m.initialize(seed);
  auto rep = train(m, train_data, loss, network_optim(p, seed), parse_split(p["split"].get<std::string>()));
  if (report) *report = std::move(rep);
  return m;
}

inline KernelFit train_kernel(const json& p, LossKind loss, const LabeledDataset& train_data, std::uint64_t seed,
                              const std::string& max_iter_key = "kernel_max_iter") {
  double gamma = p["kernel_gamma"].get<double>();
  if (!(gamma > 0.0)) gamma = default_gamma(train_data.points);
  return fit_kernel_es_detailed(train_data, gamma, {0.0, p["kernel_sigma"].get<double>()}, loss,
                                detail::bfgs_config(seed, p[max_iter_key].get<int>()));
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline RunOutput run_xor_like(const ExperimentConfig& cfg, const std::vector<std::string>& gates, bool both_polarities) {
  const auto& p = cfg.params;
  const double sigma = p["sigma"].get<double>();
  const auto losses = strings(p["losses"]);
  const int max_iter = p["max_iter"].get<int>();
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    for (const auto& g : gates) {
      const auto data = gen_logic(parse_gate(g));
      for (const auto& l : losses) {
        const LossKind lk = parse_loss(l);
        int best = 4;
        std::vector<Polarity> pols{Polarity::InsidePositive};
        if (both_polarities) pols.push_back(Polarity::OutsidePositive);
        for (Polarity pol : pols) {
          const auto es = fit_affine_es(data, {0.0, sigma}, lk, bfgs_config(seed, max_iter), pol);
          const int errors = count_errors(es, data);
          best = std::min(best, errors);
          const std::string cond =
              both_polarities ? g + "/" + l + "/" + std::string(to_string(pol)) : g + "/" + l;
          so.rows.push_back({cond, s, "errors", double(errors)});
          so.rows.push_back({cond, s, "solved", errors == 0 ? 1.0 : 0.0});
          so.rows.push_back({cond, s, "final_loss", es.fit.trace.back()});
          so.rows.push_back({cond, s, "iterations", double(es.fit.iterations)});
        }
        if (both_polarities) {
          so.rows.push_back({g + "/" + l + "/best", s, "errors", double(best)});
          so.rows.push_back({g + "/" + l + "/best", s, "solved", best == 0 ? 1.0 : 0.0});
        }
      }
    }
    return so;
  });
  return out;
}

inline RunOutput run_linear1(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto dims = p["dims"].get<std::vector<std::size_t>>();
  const auto noise = p["noise"].get<std::vector<double>>();
  const BumpParams bp{0.0, p["sigma"].get<double>()};
  const LossKind lk = parse_loss(p["loss"].get<std::string>());
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    for (std::size_t d : dims) {
      for (double nz : noise) {
        const auto prob = gen_linear1_problem({d, nz, p["m"].get<std::size_t>(), p["pos_ratio"].get<double>()}, seed);
        const auto es = fit_affine_es(prob.data.train, bp, lk, bfgs_config(seed, p["max_iter"].get<int>()));
        const auto score = [&](ConstVecView x) { return es.score(x); };
        const std::string cond = "dim=" + std::to_string(d) + "/noise=" + num_label(nz);
        const auto tr = score_all(prob.data.train, score);
        const auto te = score_all(prob.data.test, score);
        add_aupr_rows(so, cond, s, "train_", tr, prob.data.train.labels);
        add_aupr_rows(so, cond, s, "test_", te, prob.data.test.labels);
        so.rows.push_back({cond, s, "iterations", double(es.fit.iterations)});
      }
    }
    return so;
  });
  return out;
}

inline RunOutput run_linear2(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto ks = p["noise_multipliers"].get<std::vector<double>>();
  const BumpParams bp{0.0, p["sigma"].get<double>()};
  const LossKind lk = parse_loss(p["loss"].get<std::string>());
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    for (double k : ks) {
      const auto split = gen_gaussians2d_split(k, p["m"].get<std::size_t>(), p["pos_ratio"].get<double>(), seed);
      const auto es = fit_affine_es(split.train, bp, lk, bfgs_config(seed, p["max_iter"].get<int>()));
      const auto score = [&](ConstVecView x) { return es.score(x); };
      const std::string cond = "k=" + num_label(k);
      add_aupr_rows(so, cond, s, "test_", score_all(split.test, score), split.test.labels);
      add_aupr_rows(so, cond, s, "train_", score_all(split.train, score), split.train.labels);
      so.rows.push_back({cond, s, "iterations", double(es.fit.iterations)});
    }
    return so;
  });
  return out;
}

inline std::string file_safe(std::string s) {
  for (auto& c : s)
    if (c == '/' || c == '=') c = '_';
  return s;
}

inline void add_separation_rows(SeedOutput& so, const std::string& cond, const std::string& s,
                                std::span<const double> scores, std::span<const int> labels,
                                std::span<const double> distances) {
  const auto sr = separation_report(scores, labels, distances);
  so.rows.push_back({cond, s, "score_gap", sr.score_gap()});
  if (sr.mean_distance_normal) {
    so.rows.push_back({cond, s, "distance_normal", *sr.mean_distance_normal});
    so.rows.push_back({cond, s, "distance_anomaly", *sr.mean_distance_anomaly});
    if (*sr.mean_distance_normal > 0.0) so.rows.push_back({cond, s, "distance_ratio", *sr.distance_ratio()});
  }
}

inline RunOutput run_circles(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto split = gen_circles_ad(p["m"].get<std::size_t>(), p["pos_ratio"].get<double>(),
                                    p["data_seed"].get<std::uint64_t>());
  const auto heads = strings(p["heads"]);
  const auto hidden = strings(p["hidden"]);
  const auto losses = strings(p["losses"]);
  const bool save_models = p["save_models"].get<bool>();

  struct Combo {
    std::string cond;
    HeadKind head;
    std::string hidden;
    LossKind loss;
  };
  std::vector<Combo> combos;
  for (const auto& h : heads)
    for (const auto& a : hidden)
      for (const auto& l : losses) combos.push_back({h + "/" + a + "/" + l, parse_head(h), a, parse_loss(l)});
  for (const auto& a : hidden) (void)parse_activation(a);

  struct SeedResult {
    SeedOutput so;
    std::vector<NetworkModel> models;  // one per combo
  };
  auto [res, errs] = map_seeds(cfg.seeds, cfg.jobs, [&](std::uint64_t seed) {
    SeedResult r;
    const std::string s = std::to_string(seed);
    if (p["kernel"].get<bool>()) {
      for (const auto& l : strings(p["kernel_losses"])) {
        const auto fit = train_kernel(p, parse_loss(l), split.train, seed);
        const auto score = [&](ConstVecView x) { return kernel_score(fit.machine, x); };
        const auto te = score_all(split.test, score);
        const std::string cond = "kernel/" + l;
        add_aupr_rows(r.so, cond, s, "", te, split.test.labels);
        add_separation_rows(r.so, cond, s, te, split.test.labels, {});
      }
    }
    for (const auto& c : combos) {
      TrainReport rep;
      NetworkModel m = train_network(p, c.head, c.hidden, c.loss, split.train, seed, &rep);
      std::vector<double> te(split.test.size()), dist;
      const double wnorm = c.head == HeadKind::EqualitySep ? norm2(m.head_weights()) : 0.0;
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const auto fr = m.forward(split.test.point(i));
        te[i] = fr.score;
        if (c.head == HeadKind::EqualitySep && wnorm > 0.0) dist.push_back(fr.head_preactivation / wnorm);
      }
      add_aupr_rows(r.so, c.cond, s, "", te, split.test.labels);
      const auto tr = score_all(split.train, [&](ConstVecView x) { return m.score(x); });
      r.so.rows.push_back({c.cond, s, "train_aupr_normal", aupr(tr, split.train.labels)});
      add_separation_rows(r.so, c.cond, s, te, split.test.labels, dist);
      r.so.rows.push_back({c.cond, s, "epochs", double(rep.history.epochs_run)});
      r.so.rows.push_back({c.cond, s, "best_epoch", double(rep.history.best_epoch)});
      if (save_models)
        r.so.artifacts.push_back({"models/" + file_safe(c.cond) + "_seed" + s + ".json", model_to_json(m)});
      r.models.push_back(std::move(m));
    }
    return r;
  });

  RunOutput out;
  std::vector<std::vector<NetworkModel>> per_combo(combos.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (errs[i]) {
      out.errors.push_back("seed " + std::to_string(cfg.seeds[i]) + ": " + error_text(errs[i]));
      continue;
    }
    for (auto& r : res[i]->so.rows) out.rows.push_back(std::move(r));
    for (auto& a : res[i]->so.artifacts) out.artifacts.push_back(std::move(a));
    for (std::size_t c = 0; c < combos.size(); ++c) per_combo[c].push_back(std::move(res[i]->models[c]));
  }
  if (p["ensemble"].get<bool>()) {
    for (std::size_t c = 0; c < combos.size(); ++c) {
      if (per_combo[c].empty()) continue;
      const auto te = score_all(split.test, [&](ConstVecView x) { return ensemble_score(per_combo[c], x); });
      SeedOutput so;
      add_aupr_rows(so, combos[c].cond, "ensemble", "", te, split.test.labels);
      for (auto& r : so.rows) out.rows.push_back(std::move(r));
    }
  }
  return out;
}

struct ClosingCase {
  std::string name;
  ClosingFamily family;
  NormalMode normals;
  std::size_t count;
};

inline std::vector<ClosingCase> closing_cases(const json& p, std::size_t n) {
  const NormalMode eq = parse_normal_mode(p["equality_normals"].get<std::string>());
  std::vector<ClosingCase> out;
  for (const auto& c : strings(p["cases"])) {
    if (c == "rbf") out.push_back({c, ClosingFamily::Rbf, NormalMode::Random, 1});
    else if (c == "equality") out.push_back({c, ClosingFamily::Equality, eq, n});
    else if (c == "equality_minus") out.push_back({c, ClosingFamily::Equality, eq, n - 1});
    else if (c == "halfspace_simplex") out.push_back({c, ClosingFamily::Halfspace, NormalMode::Simplex, n + 1});
    else if (c == "halfspace") out.push_back({c, ClosingFamily::Halfspace, NormalMode::Random, n});
    else if (c == "halfspace_same_side") out.push_back({c, ClosingFamily::Halfspace, NormalMode::SameSide, n + 1});
    else throw ExperimentError("closing: unknown case '" + c + "'");
  }
  return out;
}

inline RunOutput run_closing(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto dims = p["dims"].get<std::vector<std::size_t>>();
  for (std::size_t n : dims) {
    if (n < 2) throw ExperimentError("closing: dims must be >= 2");
    (void)closing_cases(p, n);
  }
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    std::string jsonl;
    for (std::size_t n : dims) {
      for (const auto& c : closing_cases(p, n)) {
        ClosingProbeConfig pc;
        pc.family = c.family;
        pc.normals = c.normals;
        pc.n = n;
        pc.count = c.count;
        pc.seed = seed;
        pc.radii = p["radii"].get<std::vector<double>>();
        pc.samples_per_box = p["samples"].get<std::size_t>();
        pc.eps = p["eps"].get<double>();
        pc.bias_scale = p["bias_scale"].get<double>();
        pc.rbf_gamma = p["rbf_gamma"].get<double>();
        const auto rep = closing_probe(pc);
        const std::string cond = "n=" + std::to_string(n) + "/" + c.name + "/count=" + std::to_string(c.count);
        for (ClosingVerdict v : {ClosingVerdict::Bounded, ClosingVerdict::Unbounded, ClosingVerdict::Empty,
                                 ClosingVerdict::Inconclusive}) {
          std::string metric(to_string(v));
          std::transform(metric.begin(), metric.end(), metric.begin(), [](unsigned char ch) { return std::tolower(ch); });
          so.rows.push_back({cond, s, metric, rep.verdict == v ? 1.0 : 0.0});
        }
        so.rows.push_back({cond, s, "volume_min", rep.volumes.front()});
        so.rows.push_back({cond, s, "volume_max", rep.volumes.back()});
        auto j = to_json(rep);
        j["case"] = c.name;
        jsonl += j.dump() + "\n";
      }
    }
    so.artifacts.push_back({"closing_reports.jsonl", std::move(jsonl)});
    return so;
  });
  // One records file, seeds in order.
  std::string merged;
  std::vector<Artifact> rest;
  for (auto& a : out.artifacts) {
    if (a.path == "closing_reports.jsonl") merged += a.content;
    else rest.push_back(std::move(a));
  }
  rest.push_back({"closing_reports.jsonl", std::move(merged)});
  out.artifacts = std::move(rest);
  return out;
}

inline std::vector<Vector> random_point_set(std::uint64_t seed, std::size_t set, std::size_t k) {
  CounterRng rng(seed, 0x7C00 + set);
  std::vector<Vector> pts;
  while (pts.size() < k) {
    Vector p{rng.normal(), rng.normal()};
    if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(std::move(p));
  }
  return pts;
}

inline RunOutput run_vcdim(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto roots = roots_of_unity(p["roots"].get<std::size_t>());
  const auto epss = p["eps"].get<std::vector<double>>();
  const auto sets = p["random_sets"].get<std::size_t>();
  const auto k = p["random_points"].get<std::size_t>();
  if (roots.size() > 8 || k > 8) throw ExperimentError("vcdim: at most 8 points per set");
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    std::string jsonl;
    for (double eps : epss) {
      const auto rep = shatter_search(roots, eps);
      const std::string cond = "roots=" + std::to_string(roots.size()) + "/eps=" + num_label(eps);
      so.rows.push_back({cond, s, "shattered", rep.shattered ? 1.0 : 0.0});
      so.rows.push_back(
          {cond, s, "feasible_labelings", double(std::count(rep.feasible.begin(), rep.feasible.end(), true))});
      auto j = to_json(rep);
      j["seed"] = seed;
      j["set"] = "roots";
      jsonl += j.dump() + "\n";
    }
    std::size_t not_shattered = 0;
    for (std::size_t t = 0; t < sets; ++t) {
      const auto rep = shatter_search(random_point_set(seed, t, k));
      not_shattered += rep.shattered ? 0 : 1;
      auto j = to_json(rep);
      j["seed"] = seed;
      j["set"] = t;
      jsonl += j.dump() + "\n";
    }
    const std::string cond = "random" + std::to_string(k);
    so.rows.push_back({cond, s, "sets", double(sets)});
    so.rows.push_back({cond, s, "not_shattered", double(not_shattered)});
    so.artifacts.push_back({"vcdim_seed" + s + ".jsonl", std::move(jsonl)});
    return so;
  });
  return out;
}

inline RunOutput run_lrt(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    const auto rep = lrt_equivalence_check(seed, p["trials"].get<std::size_t>(), p["samples"].get<std::size_t>(),
                                           p["dim"].get<std::size_t>());
    const std::string cond = "dim=" + std::to_string(rep.dim);
    so.rows.push_back({cond, s, "checked", double(rep.checked)});
    so.rows.push_back({cond, s, "skipped", double(rep.skipped)});
    so.rows.push_back({cond, s, "disagreements", double(rep.disagreements)});
    so.artifacts.push_back({"lrt_seed" + s + ".json", to_json(rep).dump(2) + "\n"});
    return so;
  });
  return out;
}

inline double ring_mean(const std::function<double(ConstVecView)>& f, double r) {
  double s = 0.0;
  constexpr int kAngles = 360;
  for (int i = 0; i < kAngles; ++i) {
    const double th = 2.0 * std::numbers::pi * (i + 0.5) / kAngles;
    const double x[2] = {r * std::cos(th), r * std::sin(th)};
    s += f(x);
  }
  return s / kAngles;
}

inline RunOutput run_heatmap(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  const auto b = p["bounds"].get<std::vector<double>>();
  const auto res = p["resolution"].get<std::vector<std::size_t>>();
  if (b.size() != 4) throw ExperimentError("heatmap: bounds must be [xmin, xmax, ymin, ymax]");
  if (res.size() != 2) throw ExperimentError("heatmap: resolution must be [gx, gy]");
  const GridBounds gb{b[0], b[1], b[2], b[3]};
  const auto split = gen_circles_ad(p["m"].get<std::size_t>(), p["pos_ratio"].get<double>(),
                                    p["data_seed"].get<std::uint64_t>());
  const auto models = strings(p["models"]);
  for (const auto& m : models)
    if (m != "kernel") (void)parse_network_choice(m);
  RunOutput out;
  run_per_seed(cfg, out, [&](std::uint64_t seed) {
    SeedOutput so;
    const std::string s = std::to_string(seed);
    for (const auto& name : models) {
      std::function<double(ConstVecView)> scorer;
      std::optional<KernelFit> kf;
      std::optional<NetworkModel> nm;
      if (name == "kernel") {
        kf = train_kernel(p, parse_loss(p["kernel_loss"].get<std::string>()), split.train, seed);
        scorer = [&](ConstVecView x) { return kernel_score(kf->machine, x); };
      } else {
        const auto ch = parse_network_choice(name);
        nm = train_network(p, ch.head, ch.hidden, parse_loss(p["loss"].get<std::string>()), split.train, seed);
        scorer = [&](ConstVecView x) { return nm->score(x); };
      }
      const Matrix grid = heatmap_grid(scorer, 2, gb, res[0], res[1]);
      std::ostringstream csv;
      write_matrix_csv(csv, grid);
      const std::string stem = "heatmap_" + name + "_seed" + s;
      so.artifacts.push_back({stem + ".csv", csv.str()});
      const json side{{"model", name}, {"seed", seed}, {"bounds", b}, {"resolution", res},
                      {"rows", "y ascending"}, {"cols", "x ascending"}, {"samples_at", "cell centers"}};
      so.artifacts.push_back({stem + ".json", side.dump(2) + "\n"});
      const auto flat = grid.flat();
      so.rows.push_back({name, s, "grid_min", *std::min_element(flat.begin(), flat.end())});
      so.rows.push_back({name, s, "grid_max", *std::max_element(flat.begin(), flat.end())});
      so.rows.push_back({name, s, "ring_r0.5", ring_mean(scorer, 0.5)});
      so.rows.push_back({name, s, "ring_r1", ring_mean(scorer, 1.0)});
      so.rows.push_back({name, s, "ring_r2", ring_mean(scorer, 2.0)});
    }
    return so;
  });
  return out;
}

}  // namespace detail

inline RunOutput run_experiment(const ExperimentConfig& cfg) {
  const auto& e = cfg.experiment;
  if (e == "xor") return detail::run_xor_like(cfg, {"xor"}, false);
  if (e == "logic") return detail::run_xor_like(cfg, detail::strings(cfg.params["gates"]), true);
  if (e == "linear1") return detail::run_linear1(cfg);
  if (e == "linear2") return detail::run_linear2(cfg);
  if (e == "circles") return detail::run_circles(cfg);
  if (e == "closing") return detail::run_closing(cfg);
  if (e == "vcdim") return detail::run_vcdim(cfg);
  if (e == "lrt") return detail::run_lrt(cfg);
  if (e == "heatmap") return detail::run_heatmap(cfg);
  throw ExperimentError("unknown experiment '" + e + "'");
}

// ---------------------------------------------------------------------------
// Files

inline constexpr const char* kResultsHeader = "experiment,condition,seed,metric,value";

inline std::string results_csv(const std::string& experiment, const std::vector<ResultRow>& rows) {
  std::string s = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows)
    s += experiment + "," + r.condition + "," + r.seed + "," + r.metric + "," + format_double(r.value) + "\n";
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ExperimentError("cannot write '" + path.string() + "'");
  os << content;
  if (!os) throw ExperimentError("write failed for '" + path.string() + "'");
}

// Writes results.csv, artifacts and manifest.json; returns the manifest.
inline json write_run(const ExperimentConfig& cfg, const RunOutput& out) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty()) throw ExperimentError("no output directory given");
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ExperimentError("cannot create output directory '" + dir.string() + "': " + ec.message());
  write_text_file(dir / "results.csv", results_csv(cfg.experiment, out.rows));
  json arts = json::array();
  for (const auto& a : out.artifacts) {
    write_text_file(dir / a.path, a.content);
    arts.push_back(a.path);
  }
  json m = config_to_json(cfg);
  m["format"] = "eqsep-run";
  m["version"] = 1;
  m["results"] = "results.csv";
  m["rows"] = out.rows.size();
  m["artifacts"] = arts;
  m["status"] = out.errors.empty() ? "ok" : "failed";
  m["errors"] = out.errors;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation

struct SummaryLine {
  std::string experiment;
  std::string condition;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population (ddof = 0)
};

inline std::vector<SummaryLine> summarize(const std::string& experiment, const std::vector<ResultRow>& rows) {
  std::vector<SummaryLine> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    // Rows not tied to a numeric seed (e.g. "ensemble") form their own group.
    const bool per_seed = !r.seed.empty() && std::all_of(r.seed.begin(), r.seed.end(), [](unsigned char c) {
      return std::isdigit(c);
    });
    const std::string cond = per_seed ? r.condition : r.condition + "@" + r.seed;
    const auto key = std::make_pair(cond, r.metric);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({experiment, cond, r.metric});
      values.emplace_back();
    }
    values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    out[i].n = v.size();
    out[i].mean = mean;
    out[i].stddev = std::sqrt(var / double(v.size()));
  }
  return out;
}

inline std::vector<ResultRow> read_results_csv(const std::filesystem::path& path, std::string* experiment = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ExperimentError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader)
    throw ExperimentError("'" + path.string() + "': unexpected header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) throw ExperimentError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected 5 fields");
    if (experiment) *experiment = cells[0];
    char* end = nullptr;
    const double v = std::strtod(cells[4].c_str(), &end);
    if (end == cells[4].c_str() || *end != '\0')
      throw ExperimentError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad value");
    rows.push_back({cells[1], cells[2], cells[3], v});
  }
  return rows;
}

inline std::string format_summary_text(const std::vector<SummaryLine>& lines) {
  std::size_t we = 10, wc = 9, wm = 6;
  for (const auto& l : lines) {
    we = std::max(we, l.experiment.size());
    wc = std::max(wc, l.condition.size());
    wm = std::max(wm, l.metric.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(int(we)) << "experiment" << "  " << std::setw(int(wc)) << "condition" << "  "
     << std::setw(int(wm)) << "metric" << "  " << std::right << std::setw(4) << "n" << "  mean+-std\n";
  for (const auto& l : lines) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f+-%.2f", l.mean, l.stddev);
    os << std::left << std::setw(int(we)) << l.experiment << "  " << std::setw(int(wc)) << l.condition << "  "
       << std::setw(int(wm)) << l.metric << "  " << std::right << std::setw(4) << l.n << "  " << buf << "\n";
  }
  return os.str();
}

inline std::string format_summary_csv(const std::vector<SummaryLine>& lines) {
  std::string s = "experiment,condition,metric,n,mean,std\n";
  for (const auto& l : lines)
    s += l.experiment + "," + l.condition + "," + l.metric + "," + std::to_string(l.n) + "," +
         format_double(l.mean) + "," + format_double(l.stddev) + "\n";
  return s;
}

struct ReportResult {
  std::vector<SummaryLine> lines;
  std::vector<std::string> problems;  // unreadable runs, listed and skipped
  std::size_t runs = 0;
};

inline ReportResult collect_report(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  ReportResult rr;
  if (!fs::is_directory(root)) {
    rr.problems.push_back(root.string() + ": not a directory");
    return rr;
  }
  std::vector<fs::path> manifests;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "manifest.json") manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());
  for (const auto& mp : manifests) {
    try {
      std::ifstream is(mp, std::ios::binary);
      const json m = json::parse(is);
      if (m.value("format", "") != "eqsep-run") throw ExperimentError("not an eqsep run manifest");
      const std::string exp = m.at("experiment").get<std::string>();
      const auto rows = read_results_csv(mp.parent_path() / m.at("results").get<std::string>());
      for (auto& l : summarize(exp, rows)) rr.lines.push_back(std::move(l));
      ++rr.runs;
    } catch (const std::exception& e) {
      rr.problems.push_back(mp.string() + ": " + e.what());
    }
  }
  return rr;
}

}  // namespace eqsep
