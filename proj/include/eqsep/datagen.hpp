#pragma once

// Deterministic synthetic datasets and CSV import/export.
//
// Class counts: a generator asked for m points at positive ratio r produces
// floor(r * m + 1e-9) positives (label 1) followed by the remaining negatives
// (label 0). Every generator is a pure function of its arguments and seed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqsep/linalg.hpp"
#include "eqsep/random.hpp"
#include "json.hpp"

namespace eqsep {

enum class Role : std::uint8_t { Train, Test };

constexpr std::string_view to_string(Role r) noexcept { return r == Role::Train ? "train" : "test"; }

struct DatasetMeta {
  std::string generator = "unknown";
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
  Role role = Role::Train;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct LabeledDataset {
  Matrix points;
  std::vector<int> labels;
  DatasetMeta meta;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return points.cols(); }
  ConstVecView point(std::size_t i) const noexcept { return points.row(i); }

  std::size_t count_label(int label) const noexcept {
    std::size_t c = 0;
    for (int l : labels) c += (l == label) ? 1 : 0;
    return c;
  }

  void add(ConstVecView x, int label) {
    points.append_row(x);
    labels.push_back(label);
  }

  LabeledDataset subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.meta = meta;
    for (std::size_t r : rows) out.add(point(r), labels[r]);
    return out;
  }
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t positive_count(std::size_t m, double pos_ratio) {
  if (!(pos_ratio >= 0.0 && pos_ratio <= 1.0))
    throw std::invalid_argument("pos_ratio must lie in [0,1]");
  return static_cast<std::size_t>(std::floor(pos_ratio * static_cast<double>(m) + 1e-9));
}

// ---------------------------------------------------------------------------
// Logic gates

enum class Gate : std::uint8_t { AND, OR, XOR };

inline Gate parse_gate(std::string_view s) {
  if (s == "and" || s == "AND") return Gate::AND;
  if (s == "or" || s == "OR") return Gate::OR;
  if (s == "xor" || s == "XOR") return Gate::XOR;
  throw std::invalid_argument("unknown gate: " + std::string(s));
}

constexpr std::string_view to_string(Gate g) noexcept {
  switch (g) {
    case Gate::AND: return "and";
    case Gate::OR: return "or";
    case Gate::XOR: return "xor";
  }
  return "?";
}

inline LabeledDataset gen_logic(Gate gate) {
  LabeledDataset d;
  d.meta.generator = "logic_" + std::string(to_string(gate));
  for (int a = 0; a <= 1; ++a) {
    for (int b = 0; b <= 1; ++b) {
      int y = 0;
      switch (gate) {
        case Gate::AND: y = a & b; break;
        case Gate::OR: y = a | b; break;
        case Gate::XOR: y = a ^ b; break;
      }
      const double x[2] = {double(a), double(b)};
      d.add(x, y);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Linear problem 1: positives on a random hyperplane, negatives uniform in
// [-10, 10]^n, Gaussian noise added to every coordinate after labelling.

struct Linear1Params {
  std::size_t dim = 5;
  double noise_std = 0.0;
  std::size_t m = 100;
  double pos_ratio = 0.9;
};

struct Linear1Problem {
  Vector w;
  double b = 0.0;
  DatasetSplit data;
};

namespace detail {

inline LabeledDataset sample_linear1(const Linear1Params& p, ConstVecView w, double b, CounterRng& rng) {
  const std::size_t n = p.dim;
  const std::size_t npos = positive_count(p.m, p.pos_ratio);
  LabeledDataset d;
  Vector x(n);
  for (std::size_t i = 0; i < p.m; ++i) {
    const bool positive = i < npos;
    if (positive) {
      double partial = b;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        x[k] = rng.uniform(-10.0, 10.0);
        partial += w[k] * x[k];
      }
      x[n - 1] = -partial / w[n - 1];
    } else {
      for (std::size_t k = 0; k < n; ++k) x[k] = rng.uniform(-10.0, 10.0);
    }
    d.add(x, positive ? 1 : 0);
  }
  if (p.noise_std > 0.0) {
    for (double& v : d.points.flat()) v += rng.normal(0.0, p.noise_std);
  }
  return d;
}

inline void stamp(LabeledDataset& d, std::string gen, std::uint64_t seed,
                  std::map<std::string, double> params, Role role) {
  d.meta.generator = std::move(gen);
  d.meta.seed = seed;
  d.meta.params = std::move(params);
  d.meta.role = role;
}

}  // namespace detail

// Draws the plane (w ~ N(0, I), b ~ N(0, 1), redrawn while |w_n| <= 1e-6) and
// an independent train and test sample from it.
inline Linear1Problem gen_linear1_problem(const Linear1Params& p, std::uint64_t seed) {
  if (p.dim < 2) throw std::invalid_argument("gen_linear1: dim must be >= 2");
  if (!(p.noise_std >= 0.0)) throw std::invalid_argument("gen_linear1: noise_std must be >= 0");
  if (p.m < 1) throw std::invalid_argument("gen_linear1: m must be >= 1");
  Linear1Problem prob;
  CounterRng plane_rng(seed, 0);
  prob.w.resize(p.dim);
  do {
    for (auto& v : prob.w) v = plane_rng.normal();
    prob.b = plane_rng.normal();
  } while (std::fabs(prob.w.back()) <= 1e-6);

  CounterRng train_rng(seed, 1);
  CounterRng test_rng(seed, 2);
  prob.data.train = detail::sample_linear1(p, prob.w, prob.b, train_rng);
  prob.data.test = detail::sample_linear1(p, prob.w, prob.b, test_rng);
  const std::map<std::string, double> params{{"dim", double(p.dim)},
                                             {"noise_std", p.noise_std},
                                             {"m", double(p.m)},
                                             {"pos_ratio", p.pos_ratio}};
  detail::stamp(prob.data.train, "linear1", seed, params, Role::Train);
  detail::stamp(prob.data.test, "linear1", seed, params, Role::Test);
  return prob;
}

inline LabeledDataset gen_linear1(std::size_t dim, double noise_std, std::size_t m, double pos_ratio,
                                  std::uint64_t seed) {
  return gen_linear1_problem({dim, noise_std, m, pos_ratio}, seed).data.train;
}

// ---------------------------------------------------------------------------
// Linear problem 2: two 2-D Gaussians at +-(1,1) with covariance k [[.2,.1],[.1,.2]].

namespace detail {

inline LabeledDataset sample_gaussians2d(double k, std::size_t m, double pos_ratio, CounterRng& rng) {
  // Cholesky factor of [[.2,.1],[.1,.2]]
  const double l11 = std::sqrt(0.2);
  const double l21 = 0.1 / l11;
  const double l22 = std::sqrt(0.2 - l21 * l21);
  const double s = std::sqrt(k);
  const std::size_t npos = positive_count(m, pos_ratio);
  LabeledDataset d;
  for (std::size_t i = 0; i < m; ++i) {
    const bool positive = i < npos;
    const double mean = positive ? 1.0 : -1.0;
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double x[2] = {mean + s * l11 * z1, mean + s * (l21 * z1 + l22 * z2)};
    d.add(x, positive ? 1 : 0);
  }
  return d;
}

}  // namespace detail

inline DatasetSplit gen_gaussians2d_split(double noise_multiplier, std::size_t m, double pos_ratio,
                                          std::uint64_t seed) {
  if (!(noise_multiplier > 0.0)) throw std::invalid_argument("gen_gaussians2d: noise multiplier must be > 0");
  CounterRng train_rng(seed, 1);
  CounterRng test_rng(seed, 2);
  DatasetSplit out{detail::sample_gaussians2d(noise_multiplier, m, pos_ratio, train_rng),
                   detail::sample_gaussians2d(noise_multiplier, m, pos_ratio, test_rng)};
  const std::map<std::string, double> params{
      {"noise_multiplier", noise_multiplier}, {"m", double(m)}, {"pos_ratio", pos_ratio}};
  detail::stamp(out.train, "gaussians2d", seed, params, Role::Train);
  detail::stamp(out.test, "gaussians2d", seed, params, Role::Test);
  return out;
}

inline LabeledDataset gen_gaussians2d(double noise_multiplier, std::size_t m, double pos_ratio,
                                      std::uint64_t seed) {
  return gen_gaussians2d_split(noise_multiplier, m, pos_ratio, seed).train;
}

// ---------------------------------------------------------------------------
// Circles: normal class (label 1) on the unit circle; anomalies (label 0) on
// radius 2 for training and radius 0.5 for testing.

namespace detail {

inline LabeledDataset sample_circles(std::size_t m, double pos_ratio, double anomaly_radius,
                                     CounterRng& rng) {
  const std::size_t npos = positive_count(m, pos_ratio);
  LabeledDataset d;
  for (std::size_t i = 0; i < m; ++i) {
    const bool normal = i < npos;
    const double r = normal ? 1.0 : anomaly_radius;
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double x[2] = {r * std::cos(theta), r * std::sin(theta)};
    d.add(x, normal ? 1 : 0);
  }
  return d;
}

}  // namespace detail

inline constexpr double kCirclesTrainAnomalyRadius = 2.0;
inline constexpr double kCirclesTestAnomalyRadius = 0.5;

inline DatasetSplit gen_circles_ad(std::size_t m = 100, double pos_ratio = 0.75, std::uint64_t seed = 0) {
  CounterRng train_rng(seed, 1);
  CounterRng test_rng(seed, 2);
  DatasetSplit out{detail::sample_circles(m, pos_ratio, kCirclesTrainAnomalyRadius, train_rng),
                   detail::sample_circles(m, pos_ratio, kCirclesTestAnomalyRadius, test_rng)};
  const std::map<std::string, double> params{{"m", double(m)}, {"pos_ratio", pos_ratio}};
  detail::stamp(out.train, "circles", seed, params, Role::Train);
  detail::stamp(out.test, "circles", seed, params, Role::Test);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const LabeledDataset& d) {
  for (std::size_t k = 0; k < d.dim(); ++k) os << 'x' << (k + 1) << ',';
  os << "label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.point(i)) os << format_double(v) << ',';
    os << d.labels[i] << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_number(const std::string& cell, std::size_t line_no) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v))
    throw DatasetError("line " + std::to_string(line_no) + ": non-numeric value '" + t + "'");
  return v;
}

}  // namespace detail

inline LabeledDataset read_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(detail::trim(line));
      break;
    }
  }
  if (header.empty()) throw DatasetError("no data rows");
  if (detail::trim(header.back()) != "label")
    throw DatasetError("line " + std::to_string(line_no) + ": last column must be 'label'");
  if (header.size() < 2) throw DatasetError("line " + std::to_string(line_no) + ": no feature columns");

  LabeledDataset d;
  const std::size_t n = header.size() - 1;
  Vector x(n);
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto cells = detail::split_csv_line(t);
    if (cells.size() != header.size())
      throw DatasetError("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(cells.size()));
    for (std::size_t k = 0; k < n; ++k) x[k] = detail::parse_number(cells[k], line_no);
    const std::string lab = detail::trim(cells.back());
    if (lab != "0" && lab != "1")
      throw DatasetError("line " + std::to_string(line_no) + ": label must be 0 or 1, got '" + lab + "'");
    d.add(x, lab == "1" ? 1 : 0);
  }
  if (d.size() == 0) throw DatasetError("no data rows");
  return d;
}

inline nlohmann::json meta_to_json(const DatasetMeta& m) {
  nlohmann::json j;
  j["generator"] = m.generator;
  j["seed"] = m.seed;
  j["role"] = std::string(to_string(m.role));
  j["params"] = m.params;
  return j;
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
  DatasetMeta m;
  m.generator = j.at("generator").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto role = j.at("role").get<std::string>();
  if (role != "train" && role != "test") throw DatasetError("meta: unknown role '" + role + "'");
  m.role = role == "train" ? Role::Train : Role::Test;
  m.params = j.at("params").get<std::map<std::string, double>>();
  return m;
}

inline std::string meta_path_for(const std::string& csv_path) { return csv_path + ".meta.json"; }

// Writes the CSV and a JSON sidecar holding the generation metadata.
inline void save_csv(const LabeledDataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot open '" + path + "' for writing");
  write_csv(os, d);
  std::ofstream ms(meta_path_for(path), std::ios::binary);
  if (!ms) throw DatasetError("cannot open '" + meta_path_for(path) + "' for writing");
  ms << meta_to_json(d.meta).dump(2) << '\n';
  if (!os || !ms) throw DatasetError("write failed for '" + path + "'");
}

// Reads the CSV; the sidecar is optional.
inline LabeledDataset load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open '" + path + "'");
  LabeledDataset d = read_csv(is);
  std::ifstream ms(meta_path_for(path), std::ios::binary);
  if (ms) {
    try {
      d.meta = meta_from_json(nlohmann::json::parse(ms));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("corrupt metadata sidecar '" + meta_path_for(path) + "': " + e.what());
    }
  }
  return d;
}

}  // namespace eqsep
