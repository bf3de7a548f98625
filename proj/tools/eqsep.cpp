// eqsep: experiment runner plus dataset and model utilities.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eqsep/datagen.hpp"
#include "eqsep/experiments.hpp"
#include "eqsep/network.hpp"
#include "json.hpp"

namespace {

using eqsep::json;

// "5,35" -> [5,35]; "hs,es" -> ["hs","es"]. Numbers stay numbers.
json parse_list(const std::string& s) {
  json arr = json::array();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(item, &pos);
      if (pos == item.size()) {
        if (item.find_first_of(".eE") == std::string::npos) arr.push_back(static_cast<long long>(v));
        else arr.push_back(v);
        continue;
      }
    } catch (const std::exception&) {
    }
    arr.push_back(item);
  }
  return arr;
}

// Value of --set key=value: JSON when it parses, plain string otherwise.
json parse_value(const std::string& s) {
  try {
    return json::parse(s);
  } catch (const json::exception&) {
    if (s.find(',') != std::string::npos) return parse_list(s);
    return s;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw eqsep::ExperimentError("cannot open config '" + path + "'");
  try {
    return json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw eqsep::ExperimentError("config '" + path + "': " + e.what());
  }
}

struct RunArgs {
  std::string experiment;
  std::string seeds;
  std::string out;
  std::string config;
  unsigned jobs = 0;
  std::vector<std::string> sets;
  std::string dims, noise, heads, hidden, losses;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  json doc = json::object();
  if (!a.config.empty()) {
    doc = read_json_file(a.config);
    if (!doc.is_object()) throw eqsep::ExperimentError("config must be a JSON object");
  }
  if (!a.experiment.empty()) {
    if (doc.contains("experiment") && doc["experiment"] != a.experiment)
      throw eqsep::ExperimentError("experiment '" + a.experiment + "' conflicts with config file ('" +
                                   doc["experiment"].get<std::string>() + "')");
    doc["experiment"] = a.experiment;
  }
  if (!a.seeds.empty()) {
    const json s = parse_value(a.seeds);
    doc["seeds"] = s.is_number() ? s : (s.is_array() ? s : parse_list(a.seeds));
  }
  if (!a.out.empty()) doc["out"] = a.out;
  if (a.jobs > 0) doc["jobs"] = a.jobs;
  const std::pair<const char*, const std::string*> lists[] = {
      {"dims", &a.dims}, {"noise", &a.noise}, {"heads", &a.heads}, {"hidden", &a.hidden}, {"losses", &a.losses}};
  for (const auto& [key, val] : lists)
    if (!val->empty()) doc[key] = parse_list(*val);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw eqsep::ExperimentError("--set expects key=value, got '" + kv + "'");
    doc[kv.substr(0, eq)] = parse_value(kv.substr(eq + 1));
  }

  auto cfg = eqsep::resolve_config(doc);
  if (cfg.out_dir.empty()) cfg.out_dir = "runs/" + cfg.experiment;
  const auto out = eqsep::run_experiment(cfg);
  eqsep::write_run(cfg, out);
  if (!a.quiet) std::cout << eqsep::format_summary_text(eqsep::summarize(cfg.experiment, out.rows));
  std::cout << "wrote " << out.rows.size() << " rows to " << cfg.out_dir << "/results.csv\n";
  for (const auto& e : out.errors) std::cerr << "error: " << e << "\n";
  return out.errors.empty() ? 0 : 1;
}

int cmd_report(const std::string& dir, const std::string& format) {
  const auto rr = eqsep::collect_report(dir);
  for (const auto& p : rr.problems) std::cerr << "skipped: " << p << "\n";
  if (rr.runs == 0) {
    std::cerr << "no runs found\n";
    return 1;
  }
  if (format == "text" || format == "both") std::cout << eqsep::format_summary_text(rr.lines);
  if (format == "both") std::cout << "\n";
  if (format == "csv" || format == "both") std::cout << eqsep::format_summary_csv(rr.lines);
  return 0;
}

struct DatasetArgs {
  std::string kind;
  std::string out;
  std::string role = "train";
  std::uint64_t seed = 0;
  std::size_t m = 100;
  double pos_ratio = -1.0;
  std::size_t dim = 5;
  double noise = 0.0;
  double k = 1.0;
};

int cmd_dataset(const DatasetArgs& a) {
  const bool test = a.role == "test";
  eqsep::LabeledDataset d;
  if (a.kind == "and" || a.kind == "or" || a.kind == "xor") {
    d = eqsep::gen_logic(eqsep::parse_gate(a.kind));
  } else if (a.kind == "linear1") {
    const auto p = eqsep::gen_linear1_problem({a.dim, a.noise, a.m, a.pos_ratio < 0 ? 0.9 : a.pos_ratio}, a.seed);
    d = test ? p.data.test : p.data.train;
  } else if (a.kind == "gaussians2d") {
    const auto s = eqsep::gen_gaussians2d_split(a.k, a.m, a.pos_ratio < 0 ? 0.9 : a.pos_ratio, a.seed);
    d = test ? s.test : s.train;
  } else if (a.kind == "circles") {
    const auto s = eqsep::gen_circles_ad(a.m, a.pos_ratio < 0 ? 0.75 : a.pos_ratio, a.seed);
    d = test ? s.test : s.train;
  } else {
    throw eqsep::DatasetError("unknown dataset kind '" + a.kind + "'");
  }
  eqsep::save_csv(d, a.out);
  std::cout << "wrote " << d.size() << " rows (" << d.count_label(1) << " normal, " << d.count_label(0)
            << " anomalous) to " << a.out << "\n";
  return 0;
}

struct ModelTrainArgs {
  std::string data;
  std::string out;
  std::string head = "es";
  std::string hidden = "rbf";
  std::string loss = "ll";
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
};

int cmd_model_train(const ModelTrainArgs& a) {
  const auto data = eqsep::load_csv(a.data);
  json p = eqsep::find_experiment("circles").defaults;
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw eqsep::ExperimentError("--set expects key=value, got '" + kv + "'");
    const auto key = kv.substr(0, eq);
    if (!p.contains(key)) throw eqsep::ExperimentError("unknown key '" + key + "'");
    p[key] = parse_value(kv.substr(eq + 1));
  }
  eqsep::Activation act = eqsep::parse_activation(a.hidden);
  if (auto* b = std::get_if<eqsep::BumpAct>(&act)) b->sigma = p["sigma_hidden"].get<double>();
  if (auto* r = std::get_if<eqsep::RbfAct>(&act)) r->gamma = p["rbf_gamma"].get<double>();
  eqsep::NetworkModel m = eqsep::make_network(
      data.dim(), p["depth"].get<std::size_t>(), p["width"].get<std::size_t>(), act,
      {eqsep::parse_head(a.head), p["sigma_out"].get<double>(), p["rbf_gamma"].get<double>()});
  m.initialize(a.seed);
  const auto rep = eqsep::train(m, data, eqsep::parse_loss(a.loss), eqsep::network_optim(p, a.seed),
                                eqsep::parse_split(p["split"].get<std::string>()));
  eqsep::save_model(m, a.out);
  std::cout << "trained " << m.param_count() << " parameters for " << rep.history.epochs_run
            << " epochs (best " << rep.history.best_epoch << "), saved to " << a.out << "\n";
  return 0;
}

int cmd_model_score(const std::string& model_path, const std::string& data_path) {
  const auto m = eqsep::load_model(model_path);
  const auto data = eqsep::load_csv(data_path);
  std::vector<double> scores(data.size());
  std::cout << "row,label,score\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    scores[i] = m.score(data.point(i));
    std::cout << i << "," << data.labels[i] << "," << eqsep::format_double(scores[i]) << "\n";
  }
  if (data.count_label(1) > 0 && data.count_label(0) > 0)
    std::cerr << "aupr_normal " << eqsep::aupr(scores, data.labels) << "  aupr_anomaly "
              << eqsep::aupr_anomaly_positive(scores, data.labels) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equality separators: experiments, datasets and models"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write results.csv + manifest.json");
  std::string known;
  for (const auto& e : eqsep::experiment_registry()) known += (known.empty() ? "" : ", ") + e.name;
  run_cmd->add_option("experiment", run.experiment, "one of: " + known);
  run_cmd->add_option("--seeds", run.seeds, "seed count or comma list (base seed from EQSEP_SEED, default 0)");
  run_cmd->add_option("--out", run.out, "output directory (default runs/<experiment>)");
  run_cmd->add_option("--config", run.config, "JSON config file; command-line flags win");
  run_cmd->add_option("--jobs", run.jobs, "worker threads over seeds (default 1)")->check(CLI::PositiveNumber);
  run_cmd->add_option("--set", run.sets, "parameter override key=value (repeatable)");
  run_cmd->add_option("--dims", run.dims, "comma list");
  run_cmd->add_option("--noise", run.noise, "comma list");
  run_cmd->add_option("--heads", run.heads, "comma list of hs,es,rs");
  run_cmd->add_option("--hidden", run.hidden, "comma list of lrelu,bump,bump_s,rbf");
  run_cmd->add_option("--losses", run.losses, "comma list of mse,ll");
  run_cmd->add_flag("--quiet", run.quiet, "do not print the summary table");

  std::string report_dir, report_format = "text";
  auto* report_cmd = app.add_subcommand("report", "aggregate every run below a directory");
  report_cmd->add_option("dir", report_dir, "results directory")->required();
  report_cmd->add_option("--format", report_format, "text, csv or both")
      ->check(CLI::IsMember({"text", "csv", "both"}));

  DatasetArgs ds;
  auto* ds_cmd = app.add_subcommand("dataset", "generate a dataset CSV (with .meta.json sidecar)");
  ds_cmd->add_option("kind", ds.kind, "and, or, xor, linear1, gaussians2d, circles")->required();
  ds_cmd->add_option("--out", ds.out, "output CSV")->required();
  ds_cmd->add_option("--role", ds.role, "train or test")->check(CLI::IsMember({"train", "test"}));
  ds_cmd->add_option("--seed", ds.seed);
  ds_cmd->add_option("--m", ds.m, "number of points");
  ds_cmd->add_option("--pos-ratio", ds.pos_ratio, "fraction of normal points");
  ds_cmd->add_option("--dim", ds.dim, "linear1 dimension");
  ds_cmd->add_option("--noise", ds.noise, "linear1 noise std");
  ds_cmd->add_option("--k", ds.k, "gaussians2d noise multiplier");

  auto* model_cmd = app.add_subcommand("model", "train or apply a network model");
  model_cmd->require_subcommand(1);
  ModelTrainArgs mt;
  auto* mt_cmd = model_cmd->add_subcommand("train", "train a network on a dataset CSV");
  mt_cmd->add_option("--data", mt.data)->required();
  mt_cmd->add_option("--out", mt.out)->required();
  mt_cmd->add_option("--head", mt.head, "hs, es or rs");
  mt_cmd->add_option("--hidden", mt.hidden, "lrelu, bump, bump_s or rbf");
  mt_cmd->add_option("--loss", mt.loss, "mse or ll");
  mt_cmd->add_option("--seed", mt.seed);
  mt_cmd->add_option("--set", mt.sets, "training override key=value (circles keys)");
  std::string ms_model, ms_data;
  auto* ms_cmd = model_cmd->add_subcommand("score", "score a dataset CSV with a saved model");
  ms_cmd->add_option("model", ms_model)->required();
  ms_cmd->add_option("--data", ms_data)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*report_cmd) return cmd_report(report_dir, report_format);
    if (*ds_cmd) return cmd_dataset(ds);
    if (*mt_cmd) return cmd_model_train(mt);
    if (*ms_cmd) return cmd_model_score(ms_model, ms_data);
  } catch (const std::exception& e) {
    std::cerr << "eqsep: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
