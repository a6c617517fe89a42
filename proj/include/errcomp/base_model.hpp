#pragma once

// Embedding + feed-forward click model trained with minibatch SGD on binary
// cross-entropy.
//
//   ids -> per-field embedding rows -> concat -> [Linear -> ReLU]* -> Linear -> sigmoid
//
// All parameters live in one flat vector so checkpoints, cloning and
// finite-difference checks treat them uniformly. Layout:
//   [embedding tables, field-major][hidden layer l: W (out x in) row-major, b]...[w_out, b_out]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "errcomp/errors.hpp"
#include "errcomp/random.hpp"
#include "errcomp/schema.hpp"

namespace errcomp {

struct ModelConfig {
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> hidden = {64, 32};
  int hidden_key_layer = -1;  // which hidden layer feeds the memory; -1 = last
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  int epochs = 3;
  double init_scale = 0.05;     // embeddings, and dense layers when glorot_dense is off
  bool glorot_dense = true;     // dense layers ~ U(-sqrt(6/(in+out)), +sqrt(6/(in+out)))
  std::uint64_t seed = 1;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Per-example BCE computed from the logit for numerical stability.
inline double bce_from_logit(double logit, double label) {
  // log(1 + exp(-|z|)) + max(z, 0) - y z
  return std::log1p(std::exp(-std::abs(logit))) + std::max(logit, 0.0) - label * logit;
}

struct ForwardResult {
  double y_base = 0.5;
  double logit = 0.0;
  std::vector<double> hidden;
};

class BaseModel {
 public:
  BaseModel(std::vector<std::size_t> cardinalities, ModelConfig config)
      : cardinalities_(std::move(cardinalities)), config_(std::move(config)) {
    if (cardinalities_.empty()) throw InvalidParameter("BaseModel: no embedded fields");
    if (config_.embedding_dim < 1) throw InvalidParameter("BaseModel: embedding_dim must be >= 1");
    if (config_.hidden.empty()) throw InvalidParameter("BaseModel: at least one hidden layer required");
    for (auto h : config_.hidden)
      if (h < 1) throw InvalidParameter("BaseModel: hidden widths must be >= 1");
    const int nh = static_cast<int>(config_.hidden.size());
    if (config_.hidden_key_layer < -1 || config_.hidden_key_layer >= nh)
      throw InvalidParameter("BaseModel: hidden_key_layer out of range");
    layout();
    initialize();
  }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const std::vector<std::size_t>& cardinalities() const { return cardinalities_; }
  std::size_t num_fields() const { return cardinalities_.size(); }
  std::size_t input_dim() const { return cardinalities_.size() * config_.embedding_dim; }
  std::size_t num_parameters() const { return theta_.size(); }
  std::span<double> parameters() { return theta_; }
  std::span<const double> parameters() const { return theta_; }
  std::uint64_t step_count() const { return steps_; }

  std::size_t key_layer() const {
    return config_.hidden_key_layer < 0 ? config_.hidden.size() - 1
                                        : static_cast<std::size_t>(config_.hidden_key_layer);
  }
  std::size_t hidden_dim() const { return config_.hidden[key_layer()]; }

  void initialize() {
    Rng rng(substream_seed(config_.seed, 0x1417ULL));
    for (double& v : theta_) v = rng.uniform(-config_.init_scale, config_.init_scale);
    if (config_.glorot_dense) {
      for (const Layer& L : layers_) {
        const double a = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        for (std::size_t i = 0; i < L.in * L.out; ++i) theta_[L.w + i] = rng.uniform(-a, a);
      }
      const double a = std::sqrt(6.0 / static_cast<double>(layers_.back().out + 1));
      for (std::size_t i = 0; i < layers_.back().out; ++i) theta_[out_w_ + i] = rng.uniform(-a, a);
    }
    steps_ = 0;
  }

  void set_all(double v) {
    std::fill(theta_.begin(), theta_.end(), v);
  }

  std::vector<double> embed(std::span<const std::uint32_t> ids) const {
    check_ids(ids);
    std::vector<double> e(input_dim());
    const std::size_t d = config_.embedding_dim;
    for (std::size_t f = 0; f < ids.size(); ++f) {
      const double* row = theta_.data() + emb_offset_[f] + ids[f] * d;
      std::copy(row, row + d, e.begin() + static_cast<std::ptrdiff_t>(f * d));
    }
    return e;
  }

  ForwardResult forward_embedded(std::span<const double> e) const {
    if (e.size() != input_dim()) throw DimensionMismatch(input_dim(), e.size());
    Trace t;
    run(e, t);
    ForwardResult r;
    r.logit = t.logit;
    r.y_base = sigmoid(t.logit);
    r.hidden = std::move(t.acts[key_layer() + 1]);
    return r;
  }

  ForwardResult forward(std::span<const std::uint32_t> ids) const {
    return forward_embedded(embed(ids));
  }

  ForwardResult forward(const Example& ex) const { return forward(ex.ids); }

  // Mean BCE over the examples, no update.
  double loss(std::span<const Example> batch) const {
    double s = 0.0;
    for (const Example& ex : batch) {
      Trace t;
      run(embed(ex.ids), t);
      s += bce_from_logit(t.logit, ex.label);
    }
    return s / static_cast<double>(batch.size());
  }

  // Gradient of the mean BCE over the batch, in parameter layout. Returns the
  // batch loss.
  double gradient(std::span<const Example> batch, std::vector<double>& grad) const {
    grad.assign(theta_.size(), 0.0);
    std::vector<std::size_t> touched;
    return accumulate(batch, grad, touched);
  }

  // One minibatch SGD step; returns the batch loss before the update.
  double sgd_step(std::span<const Example> batch, double lr) {
    if (grad_.size() != theta_.size()) grad_.assign(theta_.size(), 0.0);
    touched_.clear();
    const double l = accumulate(batch, grad_, touched_);
    if (!std::isfinite(l))
      throw std::runtime_error("non-finite training loss at step " + std::to_string(steps_));
    if (lr != 0.0) {
      for (std::size_t i = dense_begin_; i < theta_.size(); ++i) theta_[i] -= lr * grad_[i];
      const std::size_t d = config_.embedding_dim;
      for (std::size_t off : touched_)
        for (std::size_t j = 0; j < d; ++j) theta_[off + j] -= lr * grad_[off + j];
    }
    // Clear for the next batch.
    std::fill(grad_.begin() + static_cast<std::ptrdiff_t>(dense_begin_), grad_.end(), 0.0);
    for (std::size_t off : touched_)
      std::fill_n(grad_.begin() + static_cast<std::ptrdiff_t>(off), config_.embedding_dim, 0.0);
    ++steps_;
    return l;
  }

  // One shuffled pass of minibatch SGD. Returns the mean per-example loss.
  double train_epoch(std::span<const Example> data, double lr, std::size_t batch_size,
                     std::uint64_t seed) {
    if (data.empty()) throw InvalidParameter("train_epoch: empty dataset");
    if (batch_size < 1) throw InvalidParameter("train_epoch: batch_size must be >= 1");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    std::vector<Example> batch;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      total += sgd_step(batch, lr) * static_cast<double>(end - start);
    }
    return total / static_cast<double>(data.size());
  }

  // Single in-order pass over newly observed rows, continuing from the
  // current weights. Returns nullopt for an empty slot.
  std::optional<double> incremental_update(std::span<const Example> slot, double lr) {
    if (slot.empty()) return std::nullopt;
    const std::size_t bs = std::max<std::size_t>(1, config_.batch_size);
    double total = 0.0;
    for (std::size_t start = 0; start < slot.size(); start += bs) {
      const std::size_t n = std::min(bs, slot.size() - start);
      total += sgd_step(slot.subspan(start, n), lr) * static_cast<double>(n);
    }
    return total / static_cast<double>(slot.size());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["cardinalities"] = cardinalities_;
    j["embedding_dim"] = config_.embedding_dim;
    j["hidden"] = config_.hidden;
    j["hidden_key_layer"] = config_.hidden_key_layer;
    j["learning_rate"] = config_.learning_rate;
    j["batch_size"] = config_.batch_size;
    j["epochs"] = config_.epochs;
    j["init_scale"] = config_.init_scale;
    j["glorot_dense"] = config_.glorot_dense;
    j["seed"] = config_.seed;
    j["steps"] = steps_;
    j["parameters"] = theta_;
    return j;
  }

  static BaseModel from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.hidden_key_layer = j.at("hidden_key_layer").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<int>();
    c.init_scale = j.at("init_scale").get<double>();
    c.glorot_dense = j.value("glorot_dense", true);
    c.seed = j.at("seed").get<std::uint64_t>();
    BaseModel m(j.at("cardinalities").get<std::vector<std::size_t>>(), c);
    auto theta = j.at("parameters").get<std::vector<double>>();
    if (theta.size() != m.theta_.size())
      throw FormatError("model checkpoint: expected " + std::to_string(m.theta_.size()) +
                        " parameters, got " + std::to_string(theta.size()));
    m.theta_ = std::move(theta);
    m.steps_ = j.value("steps", std::uint64_t{0});
    return m;
  }

 private:
  struct Layer {
    std::size_t in = 0, out = 0, w = 0, b = 0;
  };

  struct Trace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l+1] = ReLU output of layer l
    std::vector<std::vector<double>> pre;   // pre-activations per hidden layer
    double logit = 0.0;
  };

  void layout() {
    std::size_t off = 0;
    emb_offset_.clear();
    for (auto card : cardinalities_) {
      if (card < 1) throw InvalidParameter("BaseModel: field cardinality must be >= 1");
      emb_offset_.push_back(off);
      off += card * config_.embedding_dim;
    }
    dense_begin_ = off;
    std::size_t in = input_dim();
    layers_.clear();
    for (auto width : config_.hidden) {
      Layer l{in, width, off, off + in * width};
      off = l.b + width;
      layers_.push_back(l);
      in = width;
    }
    out_w_ = off;
    out_b_ = off + in;
    theta_.assign(out_b_ + 1, 0.0);
  }

  void check_ids(std::span<const std::uint32_t> ids) const {
    if (ids.size() != cardinalities_.size()) throw DimensionMismatch(cardinalities_.size(), ids.size());
    for (std::size_t f = 0; f < ids.size(); ++f)
      if (ids[f] >= cardinalities_[f])
        throw SchemaError("feature id " + std::to_string(ids[f]) + " out of range for field " +
                          std::to_string(f));
  }

  void run(std::span<const double> input, Trace& t) const {
    t.acts.assign(layers_.size() + 1, {});
    t.pre.assign(layers_.size(), {});
    t.acts[0].assign(input.begin(), input.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& L = layers_[li];
      const auto& x = t.acts[li];
      auto& z = t.pre[li];
      auto& a = t.acts[li + 1];
      z.resize(L.out);
      a.resize(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double* w = theta_.data() + L.w + o * L.in;
        double s = theta_[L.b + o];
        for (std::size_t i = 0; i < L.in; ++i) s += w[i] * x[i];
        z[o] = s;
        a[o] = s > 0.0 ? s : 0.0;
      }
    }
    const auto& last = t.acts.back();
    double s = theta_[out_b_];
    for (std::size_t i = 0; i < last.size(); ++i) s += theta_[out_w_ + i] * last[i];
    t.logit = s;
  }

  double accumulate(std::span<const Example> batch, std::vector<double>& grad,
                    std::vector<std::size_t>& touched) const {
    if (batch.empty()) throw InvalidParameter("empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    const std::size_t d = config_.embedding_dim;
    double loss_sum = 0.0;
    Trace t;
    std::vector<double> delta, next;
    for (const Example& ex : batch) {
      const auto e = embed(ex.ids);
      run(e, t);
      loss_sum += bce_from_logit(t.logit, ex.label);

      const double dlogit = (sigmoid(t.logit) - ex.label) * scale;
      const auto& last = t.acts.back();
      grad[out_b_] += dlogit;
      delta.assign(last.size(), 0.0);
      for (std::size_t i = 0; i < last.size(); ++i) {
        grad[out_w_ + i] += dlogit * last[i];
        delta[i] = dlogit * theta_[out_w_ + i];
      }
      for (std::size_t li = layers_.size(); li-- > 0;) {
        const Layer& L = layers_[li];
        const auto& x = t.acts[li];
        const auto& z = t.pre[li];
        next.assign(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
          if (z[o] <= 0.0) continue;
          const double g = delta[o];
          grad[L.b + o] += g;
          double* gw = grad.data() + L.w + o * L.in;
          const double* w = theta_.data() + L.w + o * L.in;
          for (std::size_t i = 0; i < L.in; ++i) {
            gw[i] += g * x[i];
            next[i] += g * w[i];
          }
        }
        delta.swap(next);
      }
      for (std::size_t f = 0; f < ex.ids.size(); ++f) {
        const std::size_t off = emb_offset_[f] + ex.ids[f] * d;
        touched.push_back(off);
        for (std::size_t j = 0; j < d; ++j) grad[off + j] += delta[f * d + j];
      }
    }
    // Dedupe so the sparse update touches each row once.
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return loss_sum * scale;
  }

  std::vector<std::size_t> cardinalities_;
  ModelConfig config_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> emb_offset_;
  std::size_t dense_begin_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<double> theta_;
  std::uint64_t steps_ = 0;

  std::vector<double> grad_;
  std::vector<std::size_t> touched_;
};

// Schema and weights together; loading restores bit-identical forward output.
inline nlohmann::json checkpoint_json(const FeatureSchema& schema, const BaseModel& model) {
  return {{"format", "errcomp-model"}, {"version", 1}, {"schema", schema.to_json()},
          {"model", model.to_json()}};
}

inline void save_checkpoint(const std::string& path, const FeatureSchema& schema,
                            const BaseModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << checkpoint_json(schema, model).dump() << '\n';
}

inline std::pair<FeatureSchema, BaseModel> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
  if (j.value("format", std::string{}) != "errcomp-model" || j.value("version", 0) != 1)
    throw FormatError("model checkpoint: unsupported format or version");
  return {FeatureSchema::from_json(j.at("schema")), BaseModel::from_json(j.at("model"))};
}

}  // namespace errcomp
