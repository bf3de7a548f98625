#pragma once

// Small fully-connected networks with a choice of hidden activation
// (leaky ReLU, Gaussian bump, RBF unit) and output head (halfspace =
// sigmoid, equality separator = bump, RBF separator), exact backprop,
// mini-batch Adam training with early stopping, ensembling and a JSON model
// format.
//
// Parameter layout (flat vector, layer by layer):
//   dense layer   : W (width x fan_in, row-major), b (width), [sigma if learnable bump]
//   RBF layer     : centers (width x fan_in, row-major)
//   dense head    : w (fan_in), b
//   RBF head      : center (fan_in)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eqsep/datagen.hpp"
#include "eqsep/linalg.hpp"
#include "eqsep/optim.hpp"
#include "eqsep/random.hpp"
#include "eqsep/smooth_units.hpp"
#include "json.hpp"

namespace eqsep {

struct LeakyReluAct {
  double alpha = 0.01;
};
struct BumpAct {
  double sigma = 0.5;
  bool learnable = false;
};
struct RbfAct {
  double gamma = 1.0;
};

using Activation = std::variant<LeakyReluAct, BumpAct, RbfAct>;

struct LayerSpec {
  std::size_t width = 5;
  Activation activation = LeakyReluAct{};
};

enum class HeadKind : std::uint8_t { Halfspace, EqualitySep, RbfSep };

constexpr std::string_view to_string(HeadKind h) noexcept {
  switch (h) {
    case HeadKind::Halfspace: return "hs";
    case HeadKind::EqualitySep: return "es";
    case HeadKind::RbfSep: return "rs";
  }
  return "?";
}

inline HeadKind parse_head(std::string_view s) {
  if (s == "hs" || s == "halfspace") return HeadKind::Halfspace;
  if (s == "es" || s == "equality") return HeadKind::EqualitySep;
  if (s == "rs" || s == "rbf") return HeadKind::RbfSep;
  throw std::invalid_argument("unknown head kind: " + std::string(s));
}

struct HeadSpec {
  HeadKind kind = HeadKind::EqualitySep;
  double sigma_out = 0.5;  // EqualitySep
  double gamma = 1.0;      // RbfSep
};

inline constexpr double kMinLearnableSigma = 1e-3;

// Hidden activation names used on the command line and in model files.
inline std::string activation_name(const Activation& a) {
  if (std::holds_alternative<LeakyReluAct>(a)) return "lrelu";
  if (const auto* b = std::get_if<BumpAct>(&a)) return b->learnable ? "bump_s" : "bump";
  return "rbf";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "lrelu" || s == "leaky_relu") return LeakyReluAct{};
  if (s == "bump") return BumpAct{};
  if (s == "bump_s" || s == "bump-s") return BumpAct{0.5, true};
  if (s == "rbf") return RbfAct{};
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

struct ForwardResult {
  double score = 0.0;
  std::vector<Vector> inputs;          // inputs[l] feeds layer l (inputs[0] = x); last entry feeds the head
  std::vector<Vector> preactivations;  // per hidden layer; RBF layers store squared distances
  double head_preactivation = 0.0;     // w^T h + b (dense heads) or squared distance (RBF head)
};

class NetworkModel {
 public:
  NetworkModel(std::size_t input_dim, std::vector<LayerSpec> layers, HeadSpec head)
      : input_dim_(input_dim), layers_(std::move(layers)), head_(head) {
    if (input_dim_ == 0) throw std::invalid_argument("NetworkModel: input_dim must be >= 1");
    std::size_t offset = 0;
    std::size_t fan_in = input_dim_;
    for (const auto& l : layers_) {
      if (l.width == 0) throw std::invalid_argument("NetworkModel: layer width must be >= 1");
      if (const auto* b = std::get_if<BumpAct>(&l.activation); b && !(b->sigma > 0.0))
        throw std::invalid_argument("NetworkModel: bump sigma must be > 0");
      if (const auto* r = std::get_if<RbfAct>(&l.activation); r && !(r->gamma > 0.0))
        throw std::invalid_argument("NetworkModel: rbf gamma must be > 0");
      offsets_.push_back(offset);
      offset += layer_param_count(l, fan_in);
      fan_in = l.width;
    }
    head_offset_ = offset;
    offset += head_.kind == HeadKind::RbfSep ? fan_in : fan_in + 1;
    params_.assign(offset, 0.0);
    // Initial sigma for learnable bump layers.
    fan_in = input_dim_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      if (const auto* b = std::get_if<BumpAct>(&layers_[li].activation); b && b->learnable)
        params_[offsets_[li] + layers_[li].width * (fan_in + 1)] = b->sigma;
      fan_in = layers_[li].width;
    }
  }

  static std::size_t layer_param_count(const LayerSpec& l, std::size_t fan_in) {
    if (std::holds_alternative<RbfAct>(l.activation)) return l.width * fan_in;
    std::size_t n = l.width * (fan_in + 1);
    if (const auto* b = std::get_if<BumpAct>(&l.activation); b && b->learnable) n += 1;
    return n;
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const HeadSpec& head() const noexcept { return head_; }
  const Vector& params() const noexcept { return params_; }
  Vector& mutable_params() noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t s) noexcept { seed_ = s; }

  void set_params(Vector p) {
    require_same_dim(params_.size(), p.size(), "NetworkModel::set_params");
    params_ = std::move(p);
  }

  // Glorot-uniform weights and RBF centers, zero biases.
  void initialize(std::uint64_t seed) {
    seed_ = seed;
    CounterRng rng(seed, 0x6E7);
    std::size_t fan_in = input_dim_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      const double limit = std::sqrt(6.0 / double(fan_in + l.width));
      double* p = params_.data() + offsets_[li];
      for (std::size_t k = 0; k < l.width * fan_in; ++k) p[k] = rng.uniform(-limit, limit);
      if (!std::holds_alternative<RbfAct>(l.activation)) {
        for (std::size_t k = 0; k < l.width; ++k) p[l.width * fan_in + k] = 0.0;
        if (const auto* b = std::get_if<BumpAct>(&l.activation); b && b->learnable)
          p[l.width * (fan_in + 1)] = b->sigma;
      }
      fan_in = l.width;
    }
    const double limit = std::sqrt(6.0 / double(fan_in + 1));
    double* h = params_.data() + head_offset_;
    for (std::size_t k = 0; k < fan_in; ++k) h[k] = rng.uniform(-limit, limit);
    if (head_.kind != HeadKind::RbfSep) h[fan_in] = 0.0;
  }

  // Sigma of a bump layer (the learnable value when applicable).
  double layer_sigma(std::size_t li) const {
    const auto* b = std::get_if<BumpAct>(&layers_.at(li).activation);
    if (!b) throw std::invalid_argument("layer_sigma: layer is not a bump layer");
    if (!b->learnable) return b->sigma;
    return std::max(params_[offsets_[li] + layers_[li].width * (layer_fan_in(li) + 1)], kMinLearnableSigma);
  }

  std::size_t layer_fan_in(std::size_t li) const { return li == 0 ? input_dim_ : layers_[li - 1].width; }
  std::size_t head_fan_in() const { return layers_.empty() ? input_dim_ : layers_.back().width; }

  // Head weight vector of a dense head.
  ConstVecView head_weights() const {
    return ConstVecView(params_).subspan(head_offset_, head_fan_in());
  }

  void clamp_sigmas() {
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      if (const auto* b = std::get_if<BumpAct>(&layers_[li].activation); b && b->learnable) {
        double& s = params_[offsets_[li] + layers_[li].width * (layer_fan_in(li) + 1)];
        s = std::max(s, kMinLearnableSigma);
      }
    }
  }

  ForwardResult forward(ConstVecView x) const {
    require_same_dim(input_dim_, x.size(), "NetworkModel::forward");
    ForwardResult r;
    r.inputs.reserve(layers_.size() + 1);
    r.preactivations.reserve(layers_.size());
    r.inputs.emplace_back(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      const Vector& in = r.inputs.back();
      const std::size_t fan_in = in.size();
      const double* p = params_.data() + offsets_[li];
      Vector z(l.width), h(l.width);
      if (const auto* rbf = std::get_if<RbfAct>(&l.activation)) {
        for (std::size_t j = 0; j < l.width; ++j) {
          z[j] = squared_distance(in, ConstVecView(p + j * fan_in, fan_in));
          h[j] = std::exp(-rbf->gamma * z[j]);
        }
      } else {
        const double* bias = p + l.width * fan_in;
        for (std::size_t j = 0; j < l.width; ++j)
          z[j] = dot(ConstVecView(p + j * fan_in, fan_in), in) + bias[j];
        if (const auto* lr = std::get_if<LeakyReluAct>(&l.activation)) {
          for (std::size_t j = 0; j < l.width; ++j) h[j] = leaky_relu(z[j], lr->alpha);
        } else {
          const BumpParams bp{0.0, layer_sigma(li)};
          for (std::size_t j = 0; j < l.width; ++j) h[j] = bump(z[j], bp);
        }
      }
      r.preactivations.push_back(std::move(z));
      r.inputs.push_back(std::move(h));
    }
    const Vector& hin = r.inputs.back();
    const double* hp = params_.data() + head_offset_;
    const std::size_t fan_in = hin.size();
    if (head_.kind == HeadKind::RbfSep) {
      r.head_preactivation = squared_distance(hin, ConstVecView(hp, fan_in));
      r.score = std::exp(-head_.gamma * r.head_preactivation);
    } else {
      r.head_preactivation = dot(ConstVecView(hp, fan_in), hin) + hp[fan_in];
      r.score = head_.kind == HeadKind::Halfspace ? sigmoid(r.head_preactivation)
                                                  : bump(r.head_preactivation, {0.0, head_.sigma_out});
    }
    return r;
  }

  double score(ConstVecView x) const { return forward(x).score; }

  // Adds scale * d loss(score(x), label) / d params to grad.
  void accumulate_gradient(ConstVecView x, int label, LossKind loss_kind, double scale, VecView grad) const {
    const ForwardResult fr = forward(x);
    const double dscore = loss_grad(loss_kind, fr.score, label) * scale;
    backprop(fr, dscore, grad);
  }

  Vector backward(ConstVecView x, int label, LossKind loss_kind) const {
    Vector g(params_.size(), 0.0);
    accumulate_gradient(x, label, loss_kind, 1.0, g);
    return g;
  }

  // Mean loss over a dataset; gradient of the mean written to grad when non-empty.
  double mean_loss(const LabeledDataset& d, std::span<const std::size_t> rows, LossKind loss_kind,
                   VecView grad = {}) const {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    const double inv = 1.0 / double(rows.size());
    double total = 0.0;
    for (std::size_t r : rows) {
      const ForwardResult fr = forward(d.point(r));
      total += loss(loss_kind, fr.score, d.labels[r]);
      if (!grad.empty()) backprop(fr, loss_grad(loss_kind, fr.score, d.labels[r]) * inv, grad);
    }
    return total * inv;
  }

 private:
  void backprop(const ForwardResult& fr, double dscore, VecView grad) const {
    // Head.
    const Vector& hin = fr.inputs.back();
    const std::size_t hfan = hin.size();
    const double* hp = params_.data() + head_offset_;
    double* hg = grad.data() + head_offset_;
    Vector dh(hfan, 0.0);
    if (head_.kind == HeadKind::RbfSep) {
      // score = exp(-gamma ||h - c||^2)
      const double coeff = dscore * fr.score * 2.0 * head_.gamma;
      for (std::size_t k = 0; k < hfan; ++k) {
        const double diff = hin[k] - hp[k];
        hg[k] += coeff * diff;
        dh[k] = -coeff * diff;
      }
    } else {
      const double dz = head_.kind == HeadKind::Halfspace
                            ? dscore * sigmoid_grad(fr.head_preactivation)
                            : dscore * bump_grad(fr.head_preactivation, {0.0, head_.sigma_out});
      for (std::size_t k = 0; k < hfan; ++k) {
        hg[k] += dz * hin[k];
        dh[k] = dz * hp[k];
      }
      hg[hfan] += dz;
    }

    // Hidden layers, last to first.
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const Vector& in = fr.inputs[li];
      const Vector& out = fr.inputs[li + 1];
      const Vector& z = fr.preactivations[li];
      const std::size_t fan_in = in.size();
      const double* p = params_.data() + offsets_[li];
      double* g = grad.data() + offsets_[li];
      Vector din(fan_in, 0.0);
      if (const auto* rbf = std::get_if<RbfAct>(&l.activation)) {
        for (std::size_t j = 0; j < l.width; ++j) {
          const double coeff = dh[j] * out[j] * 2.0 * rbf->gamma;
          if (coeff == 0.0) continue;
          for (std::size_t k = 0; k < fan_in; ++k) {
            const double diff = in[k] - p[j * fan_in + k];
            g[j * fan_in + k] += coeff * diff;
            din[k] -= coeff * diff;
          }
        }
      } else {
        Vector dz(l.width);
        if (const auto* lr = std::get_if<LeakyReluAct>(&l.activation)) {
          for (std::size_t j = 0; j < l.width; ++j) dz[j] = dh[j] * leaky_relu_grad(z[j], lr->alpha);
        } else {
          const auto& b = std::get<BumpAct>(l.activation);
          const BumpParams bp{0.0, layer_sigma(li)};
          double dsigma = 0.0;
          for (std::size_t j = 0; j < l.width; ++j) {
            dz[j] = dh[j] * bump_grad(z[j], bp);
            dsigma += dh[j] * bump_grad_sigma(z[j], bp);
          }
          if (b.learnable) {
            const std::size_t si = l.width * (fan_in + 1);
            // The clamp at kMinLearnableSigma has zero slope below the bound.
            if (p[si] >= kMinLearnableSigma) g[si] += dsigma;
          }
        }
        for (std::size_t j = 0; j < l.width; ++j) {
          if (dz[j] == 0.0) continue;
          for (std::size_t k = 0; k < fan_in; ++k) {
            g[j * fan_in + k] += dz[j] * in[k];
            din[k] += dz[j] * p[j * fan_in + k];
          }
          g[l.width * fan_in + j] += dz[j];
        }
      }
      dh = std::move(din);
    }
  }

  std::size_t input_dim_;
  std::vector<LayerSpec> layers_;
  HeadSpec head_;
  std::vector<std::size_t> offsets_;
  std::size_t head_offset_ = 0;
  Vector params_;
  std::uint64_t seed_ = 0;
};

// Standard architecture for the circles study: `depth` hidden layers of
// `width` units with the same activation.
inline NetworkModel make_network(std::size_t input_dim, std::size_t depth, std::size_t width,
                                 const Activation& hidden, HeadSpec head) {
  std::vector<LayerSpec> layers(depth, LayerSpec{width, hidden});
  return NetworkModel(input_dim, std::move(layers), head);
}

inline double forward_score(const NetworkModel& m, ConstVecView x) { return m.score(x); }

// ---------------------------------------------------------------------------
// Training

struct TrainReport {
  EarlyStopResult history;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};

enum class SplitMode : std::uint8_t { Stratified, Random };

// Mini-batch Adam with early stopping. A seeded permutation holds out
// m - floor(m * (1 - validation_fraction)) rows for validation. Stratified
// mode keeps the class ratio of the held-out rows (rounded to nearest).
// Training batches are reshuffled every epoch.
inline TrainReport train(NetworkModel& model, const LabeledDataset& data, LossKind loss_kind,
                         const OptimConfig& cfg, SplitMode split = SplitMode::Stratified) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  require_same_dim(model.input_dim(), data.dim(), "train");

  TrainReport rep;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng split_rng(cfg.seed, 0x5917);
  split_rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(
      std::floor(double(data.size()) * (1.0 - cfg.validation_fraction) + 1e-9));
  if (split == SplitMode::Stratified) {
    const std::size_t n_val = data.size() - n_train;
    const auto val_pos = static_cast<std::size_t>(
        std::llround(double(n_val) * double(data.count_label(1)) / double(data.size())));
    std::size_t vp = 0, vn = 0;
    for (std::size_t r : order) {
      if (data.labels[r] != 0 && vp < val_pos) {
        rep.validation_rows.push_back(r);
        ++vp;
      } else if (data.labels[r] == 0 && vn < n_val - val_pos) {
        rep.validation_rows.push_back(r);
        ++vn;
      } else {
        rep.train_rows.push_back(r);
      }
    }
  } else {
    rep.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    rep.validation_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  }
  if (rep.train_rows.empty()) throw ConfigError("train: validation split leaves no training rows");

  CounterRng batch_rng(cfg.seed, 0xBA7C);
  AdamState adam(model.param_count(), cfg);
  Vector grad(model.param_count());
  std::vector<std::size_t> rows = rep.train_rows;
  const std::size_t bs = cfg.batch_size == 0 ? rows.size() : cfg.batch_size;

  auto train_epoch = [&](Vector& params, int) {
    model.set_params(params);
    batch_rng.shuffle(std::span<std::size_t>(rows));
    for (std::size_t start = 0; start < rows.size(); start += bs) {
      const std::size_t end = std::min(rows.size(), start + bs);
      model.mean_loss(data, std::span<const std::size_t>(rows).subspan(start, end - start), loss_kind, grad);
      adam.step(model.mutable_params(), grad);
      model.clamp_sigmas();
    }
    params = model.params();
    return model.mean_loss(data, rep.train_rows, loss_kind);
  };
  auto val_loss = [&](const Vector& params) {
    model.set_params(params);
    return model.mean_loss(data, rep.validation_rows, loss_kind);
  };

  rep.history = early_stop_train(model.params(), cfg, rep.validation_rows.size(), train_epoch, val_loss);
  model.set_params(rep.history.params);
  return rep;
}

// ---------------------------------------------------------------------------
// Ensembles

inline double ensemble_score(std::span<const NetworkModel> models, ConstVecView x) {
  if (models.empty()) throw std::invalid_argument("ensemble_score: empty ensemble");
  double s = 0.0;
  for (const auto& m : models) {
    require_same_dim(models.front().input_dim(), m.input_dim(), "ensemble_score");
    s += m.score(x);
  }
  return s / double(models.size());
}

// ---------------------------------------------------------------------------
// Model files: JSON with the architecture and the flat parameter array written
// with 17 significant digits.

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string model_to_json(const NetworkModel& m) {
  nlohmann::json arch;
  arch["format"] = "eqsep-network";
  arch["version"] = 1;
  arch["input_dim"] = m.input_dim();
  arch["seed"] = m.seed();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    nlohmann::json j;
    j["width"] = l.width;
    j["activation"] = activation_name(l.activation);
    if (const auto* a = std::get_if<LeakyReluAct>(&l.activation)) j["alpha"] = a->alpha;
    if (const auto* b = std::get_if<BumpAct>(&l.activation)) j["sigma"] = b->sigma;
    if (const auto* r = std::get_if<RbfAct>(&l.activation)) j["gamma"] = r->gamma;
    layers.push_back(j);
  }
  arch["layers"] = layers;
  arch["head"] = {{"kind", std::string(to_string(m.head().kind))},
                  {"sigma_out", m.head().sigma_out},
                  {"gamma", m.head().gamma}};
  std::string text = arch.dump(2);
  // Splice in the parameter array by hand to pin the digit count.
  text.pop_back();  // '}'
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  text += ",\n  \"params\": [";
  char buf[40];
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", m.params()[i]);
    if (i) text += ", ";
    text += buf;
  }
  text += "]\n}\n";
  return text;
}

inline NetworkModel model_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "eqsep-network")
      throw ModelFormatError("not an eqsep-network document");
    std::vector<LayerSpec> layers;
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.width = lj.at("width").get<std::size_t>();
      const auto act = lj.at("activation").get<std::string>();
      if (act == "lrelu") l.activation = LeakyReluAct{lj.value("alpha", 0.01)};
      else if (act == "bump") l.activation = BumpAct{lj.value("sigma", 0.5), false};
      else if (act == "bump_s") l.activation = BumpAct{lj.value("sigma", 0.5), true};
      else if (act == "rbf") l.activation = RbfAct{lj.value("gamma", 1.0)};
      else throw ModelFormatError("unknown activation '" + act + "'");
      layers.push_back(l);
    }
    const auto& hj = j.at("head");
    HeadSpec head{parse_head(hj.at("kind").get<std::string>()), hj.value("sigma_out", 0.5),
                  hj.value("gamma", 1.0)};
    NetworkModel m(j.at("input_dim").get<std::size_t>(), std::move(layers), head);
    auto params = j.at("params").get<Vector>();
    if (params.size() != m.param_count())
      throw ModelFormatError("parameter count " + std::to_string(params.size()) + " does not match architecture (" +
                             std::to_string(m.param_count()) + ")");
    m.set_params(std::move(params));
    m.set_seed(j.value("seed", std::uint64_t{0}));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(std::string("invalid model document: ") + e.what());
  }
}

inline void save_model(const NetworkModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelFormatError("cannot open '" + path + "' for writing");
  os << model_to_json(m);
}

inline NetworkModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelFormatError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace eqsep
