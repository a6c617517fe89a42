#pragma once

// Chronological experiment runner.
//
// For each test slot, in order:
//   1. score every row with each method (labels are not visible here);
//   2. record slot metrics;
//   3. reveal labels;
//   4. incremental methods run a one-pass update on the slot;
//   5. memory methods apply the refresh policy, then write the slot's
//      (hidden, label, base prediction) records. Base predictions are the
//      ones served in step 1. If the model changed in step 4, keys are
//      recomputed with the updated model so later queries and stored keys
//      share one hidden space.
//
// Config is one JSON document with sections data, model, memory,
// compensation, methods and output; see configs/ and README.md. Any scalar
// key can be overridden from the environment as
// ERRCOMP_<SECTION>_<KEY>=<value> (for example ERRCOMP_COMPENSATION_LAMBDA=0.4).

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errcomp/base_model.hpp"
#include "errcomp/compensator.hpp"
#include "errcomp/datastream.hpp"
#include "errcomp/metrics.hpp"
#include "errcomp/oracle_memory.hpp"
#include "errcomp/schema.hpp"
#include "errcomp/sketch_memory.hpp"

namespace errcomp {

// ---------------------------------------------------------------------------
// Configuration

enum class Method { frozen, incremental, reloop2, incremental_reloop2 };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::frozen: return "frozen";
    case Method::incremental: return "incremental";
    case Method::reloop2: return "reloop2";
    case Method::incremental_reloop2: return "incremental+reloop2";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "frozen") return Method::frozen;
  if (s == "incremental") return Method::incremental;
  if (s == "reloop2") return Method::reloop2;
  if (s == "incremental+reloop2") return Method::incremental_reloop2;
  throw InvalidParameter("unknown method '" + std::string(s) + "'");
}

inline bool uses_memory(Method m) {
  return m == Method::reloop2 || m == Method::incremental_reloop2;
}
inline bool updates_model(Method m) {
  return m == Method::incremental || m == Method::incremental_reloop2;
}

enum class MemoryKind { sketch, oracle };
enum class RefreshPolicy { never, every_n_slots, on_model_update };

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  DriftScenario scenario;
  std::string csv_path;
  std::string schema_path;
  std::optional<double> split_timestamp;
  std::size_t n_slots = 10;
};

struct MemoryConfig {
  MemoryKind kind = MemoryKind::sketch;
  int bits_per_hash = 16;  // L
  int num_arrays = 32;     // K
  std::uint64_t seed = 11;
  std::optional<double> sigma;
  Readout readout = Readout::bucket_mean;
  std::size_t oracle_capacity = 100000;
  std::size_t oracle_k = 0;  // 0 = use num_arrays
  double keep_probability = 1.0;
  RefreshPolicy refresh = RefreshPolicy::on_model_update;
  std::size_t refresh_every = 1;
  bool reset_on_update = true;
};

struct OutputConfig {
  std::string results_csv;
  std::string trace_jsonl;
  std::string checkpoint;
  std::string snapshot;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  double incremental_learning_rate = -1.0;  // < 0: reuse model.learning_rate
  std::string checkpoint_in;                 // load instead of training when set
  MemoryConfig memory;
  CompensationConfig compensation;
  std::vector<Method> methods = {Method::frozen, Method::reloop2};
  OutputConfig output;
  std::uint64_t seed = 1;

  double inc_lr() const {
    return incremental_learning_rate < 0.0 ? model.learning_rate : incremental_learning_rate;
  }

  void validate() const {
    compensation.validate();
    if (methods.empty()) throw InvalidParameter("config: methods must not be empty");
    if (memory.bits_per_hash < 1 || memory.bits_per_hash > kMaxBitsPerHash)
      throw InvalidParameter("config: memory.bits_per_hash must lie in [1, 30]");
    if (memory.num_arrays < 1) throw InvalidParameter("config: memory.num_arrays must be >= 1");
    validate_sigma(memory.sigma);
    if (memory.refresh == RefreshPolicy::every_n_slots && memory.refresh_every < 1)
      throw InvalidParameter("config: memory.refresh_every must be >= 1");
    if (data.source != "synthetic" && data.source != "csv")
      throw InvalidParameter("config: data.source must be 'synthetic' or 'csv'");
    if (data.source == "csv" && (data.csv_path.empty() || data.schema_path.empty()))
      throw InvalidParameter("config: csv source needs data.csv and data.schema");
    if (data.source == "synthetic") data.scenario.validate();
    if (model.epochs < 0) throw InvalidParameter("config: model.epochs must be >= 0");
    if (model.batch_size < 1) throw InvalidParameter("config: model.batch_size must be >= 1");
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

inline nlohmann::json parse_env_value(const std::string& v) {
  try {
    return nlohmann::json::parse(v);
  } catch (const nlohmann::json::exception&) {
    return v;
  }
}

}  // namespace detail

// Applies ERRCOMP_<SECTION>_<KEY> variables from env onto a raw config
// document. The section name is matched case-insensitively against the top
// level; the key is lower-cased. getenv_fn is injectable for tests.
inline void apply_env_overrides(nlohmann::json& doc,
                                const std::function<const char*(const char*)>& getenv_fn,
                                const std::vector<std::string>& names) {
  const std::string prefix = "ERRCOMP_";
  for (const std::string& name : names) {
    if (name.rfind(prefix, 0) != 0) continue;
    const char* value = getenv_fn(name.c_str());
    if (!value) continue;
    std::string rest = name.substr(prefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto us = rest.find('_');
    if (us == std::string::npos) {
      doc[rest] = detail::parse_env_value(value);
      continue;
    }
    const std::string section = rest.substr(0, us), key = rest.substr(us + 1);
    doc[section][key] = detail::parse_env_value(value);
  }
}

inline std::vector<std::string> errcomp_env_names(char** envp) {
  std::vector<std::string> out;
  if (!envp) return out;
  for (char** e = envp; *e; ++e) {
    std::string s(*e);
    const auto eq = s.find('=');
    if (eq != std::string::npos && s.rfind("ERRCOMP_", 0) == 0) out.push_back(s.substr(0, eq));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::read_opt(j, "seed", c.seed);

  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::read_opt(d, "source", c.data.source);
    detail::read_opt(d, "csv", c.data.csv_path);
    detail::read_opt(d, "schema", c.data.schema_path);
    detail::read_opt(d, "n_slots", c.data.n_slots);
    if (d.contains("split_timestamp") && !d["split_timestamp"].is_null())
      c.data.split_timestamp = d["split_timestamp"].get<double>();
    if (d.contains("scenario")) {
      const auto& s = d["scenario"];
      auto& sc = c.data.scenario;
      if (s.contains("kind")) sc.kind = drift_kind_from_string(s["kind"].get<std::string>());
      detail::read_opt(s, "n_slots", sc.n_slots);
      detail::read_opt(s, "rows_per_slot", sc.rows_per_slot);
      detail::read_opt(s, "train_rows", sc.train_rows);
      detail::read_opt(s, "magnitude", sc.magnitude);
      detail::read_opt(s, "flip_slot", sc.flip_slot);
      detail::read_opt(s, "base_rate", sc.base_rate);
      detail::read_opt(s, "slot_base_rates", sc.slot_base_rates);
      detail::read_opt(s, "seed", sc.seed);
      detail::read_opt(s, "n_users", sc.n_users);
      detail::read_opt(s, "n_items", sc.n_items);
      detail::read_opt(s, "n_categories", sc.n_categories);
      detail::read_opt(s, "n_contexts", sc.n_contexts);
      detail::read_opt(s, "zipf_exponent", sc.zipf_exponent);
      detail::read_opt(s, "signal_scale", sc.signal_scale);
    }
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::read_opt(m, "embedding_dim", c.model.embedding_dim);
    detail::read_opt(m, "hidden", c.model.hidden);
    detail::read_opt(m, "hidden_key_layer", c.model.hidden_key_layer);
    detail::read_opt(m, "learning_rate", c.model.learning_rate);
    detail::read_opt(m, "batch_size", c.model.batch_size);
    detail::read_opt(m, "epochs", c.model.epochs);
    detail::read_opt(m, "init_scale", c.model.init_scale);
    detail::read_opt(m, "glorot_dense", c.model.glorot_dense);
    detail::read_opt(m, "incremental_learning_rate", c.incremental_learning_rate);
    detail::read_opt(m, "checkpoint", c.checkpoint_in);
  }
  c.model.seed = c.seed;
  if (j.contains("memory")) {
    const auto& m = j["memory"];
    if (m.contains("kind")) {
      const auto k = m["kind"].get<std::string>();
      if (k == "sketch") c.memory.kind = MemoryKind::sketch;
      else if (k == "oracle") c.memory.kind = MemoryKind::oracle;
      else throw InvalidParameter("config: memory.kind must be 'sketch' or 'oracle'");
    }
    detail::read_opt(m, "bits_per_hash", c.memory.bits_per_hash);
    detail::read_opt(m, "num_arrays", c.memory.num_arrays);
    detail::read_opt(m, "seed", c.memory.seed);
    if (m.contains("sigma") && !m["sigma"].is_null()) c.memory.sigma = m["sigma"].get<double>();
    if (m.contains("readout")) {
      const auto r = m["readout"].get<std::string>();
      if (r == "bucket_mean") c.memory.readout = Readout::bucket_mean;
      else if (r == "total_normalized") c.memory.readout = Readout::total_normalized;
      else throw InvalidParameter("config: memory.readout must be 'bucket_mean' or 'total_normalized'");
    }
    detail::read_opt(m, "oracle_capacity", c.memory.oracle_capacity);
    detail::read_opt(m, "oracle_k", c.memory.oracle_k);
    detail::read_opt(m, "keep_probability", c.memory.keep_probability);
    if (m.contains("refresh")) {
      const auto r = m["refresh"].get<std::string>();
      if (r == "never") c.memory.refresh = RefreshPolicy::never;
      else if (r == "every_n_slots") c.memory.refresh = RefreshPolicy::every_n_slots;
      else if (r == "on_model_update") c.memory.refresh = RefreshPolicy::on_model_update;
      else throw InvalidParameter("config: unknown memory.refresh '" + r + "'");
    }
    detail::read_opt(m, "refresh_every", c.memory.refresh_every);
    detail::read_opt(m, "reset_on_update", c.memory.reset_on_update);
  }
  if (j.contains("compensation")) {
    const auto& m = j["compensation"];
    detail::read_opt(m, "lambda", c.compensation.lambda);
    detail::read_opt(m, "gamma", c.compensation.gamma);
    detail::read_opt(m, "tau", c.compensation.tau);
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j["methods"]) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    detail::read_opt(o, "results_csv", c.output.results_csv);
    detail::read_opt(o, "trace_jsonl", c.output.trace_jsonl);
    detail::read_opt(o, "checkpoint", c.output.checkpoint);
    detail::read_opt(o, "snapshot", c.output.snapshot);
  }
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("config '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Memory selection

using AnyMemory = std::variant<ErrorSketch, OracleMemory>;

inline AnyMemory make_memory(const MemoryConfig& m, std::size_t dim) {
  if (m.kind == MemoryKind::sketch)
    return ErrorSketch(SrpParams{dim, m.bits_per_hash, m.num_arrays, m.seed}, m.readout);
  OracleParams p;
  p.dim = dim;
  p.capacity = m.oracle_capacity;
  p.k = m.oracle_k ? m.oracle_k : static_cast<std::size_t>(m.num_arrays);
  p.keep_probability = m.keep_probability;
  p.seed = m.seed;
  return OracleMemory(p);
}

inline bool memory_write(AnyMemory& mem, std::span<const double> h, double y, double yb,
                         std::optional<double> sigma) {
  return std::visit(
      [&](auto& m) -> bool {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ErrorSketch>)
          return m.write(h, y, yb, sigma);
        else
          return m.store(h, y, yb, sigma);
      },
      mem);
}

inline void memory_reset(AnyMemory& mem) {
  std::visit([](auto& m) { m.reset(); }, mem);
}

inline PredictionDiagnostics memory_predict(const AnyMemory& mem, double y_base,
                                            std::span<const double> h, const CompensationConfig& c) {
  return std::visit([&](const auto& m) { return predict(y_base, h, m, c); }, mem);
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedData {
  FeatureSchema schema;
  std::vector<Example> train;
  std::vector<std::vector<Example>> slots;
};

struct Prepared {
  PreparedData data;
  std::shared_ptr<const BaseModel> model;
  std::vector<double> train_losses;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg,
                                 std::optional<FeatureSchema> fitted = std::nullopt) {
  std::vector<Row> train_rows;
  std::vector<Slot> slots;
  FeatureSchema schema;
  if (cfg.data.source == "synthetic") {
    auto stream = generate(cfg.data.scenario);
    train_rows = std::move(stream.train);
    slots = std::move(stream.slots);
    schema = synthetic_schema();
  } else {
    schema = load_schema_sidecar(cfg.data.schema_path);
    CsvLoadOptions opts;
    opts.split_timestamp = cfg.data.split_timestamp;
    auto loaded = load_csv(cfg.data.csv_path, schema, opts);
    if (loaded.train.empty()) throw InvalidParameter("csv: no training rows before the split");
    train_rows = std::move(loaded.train);
    slots = make_slots(loaded.test, cfg.data.n_slots, schema.timestamp_index());
  }
  if (fitted) {
    schema = std::move(*fitted);
  } else {
    schema.fit(train_rows);
  }
  PreparedData out;
  out.train = schema.encode_all(train_rows);
  for (const auto& s : slots) out.slots.push_back(schema.encode_all(s.rows));
  out.schema = std::move(schema);
  return out;
}

inline BaseModel train_base_model(const ExperimentConfig& cfg, const PreparedData& data,
                                  std::vector<double>* losses = nullptr) {
  BaseModel model(data.schema.cardinalities(), cfg.model);
  for (int e = 0; e < cfg.model.epochs; ++e) {
    const double l = model.train_epoch(data.train, cfg.model.learning_rate, cfg.model.batch_size,
                                       substream_seed(cfg.seed, 0xE0 + static_cast<std::uint64_t>(e)));
    if (losses) losses->push_back(l);
  }
  return model;
}

inline Prepared prepare(const ExperimentConfig& cfg) {
  Prepared p;
  if (!cfg.checkpoint_in.empty()) {
    auto [schema, model] = load_checkpoint(cfg.checkpoint_in);
    p.data = prepare_data(cfg, std::move(schema));
    p.model = std::make_shared<const BaseModel>(std::move(model));
  } else {
    p.data = prepare_data(cfg);
    p.model = std::make_shared<const BaseModel>(train_base_model(cfg, p.data, &p.train_losses));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Experiment loop

struct SlotMetrics {
  std::string slot;  // slot index, or "mean" for the across-slot average
  std::string method;
  double auc = 0.0;
  double gauc = 0.0;
  double logloss = 0.0;
  std::size_t rows = 0;
  std::size_t fallbacks = 0;
};

struct ExperimentResult {
  std::vector<SlotMetrics> rows;  // per slot, then one "mean" row per method

  const SlotMetrics& at(std::size_t slot, Method m) const {
    const std::string s = std::to_string(slot), name = to_string(m);
    for (const auto& r : rows)
      if (r.slot == s && r.method == name) return r;
    throw std::out_of_range("no metrics for slot " + s + " / " + name);
  }
  const SlotMetrics& mean(Method m) const {
    const std::string name = to_string(m);
    for (const auto& r : rows)
      if (r.slot == "mean" && r.method == name) return r;
    throw std::out_of_range("no mean metrics for " + name);
  }
};

// Phase notifications, in order, for every slot and method.
struct ExperimentObserver {
  virtual ~ExperimentObserver() = default;
  virtual void on_score(std::size_t /*slot*/, Method) {}
  virtual void on_reveal(std::size_t /*slot*/, Method) {}
  virtual void on_update(std::size_t /*slot*/, Method) {}
};

inline std::string fmt_double(double v) { return detail::fmt_num(v); }

namespace detail {

// Scores a slot without access to labels.
struct SlotScores {
  std::vector<double> y_base;
  std::vector<double> y_pred;
  std::vector<std::vector<double>> hidden;
  std::vector<PredictionDiagnostics> diag;
  std::size_t fallbacks = 0;
};

inline SlotScores score_slot(const BaseModel& model, const std::vector<std::vector<std::uint32_t>>& ids,
                             const AnyMemory* memory, const CompensationConfig& comp) {
  SlotScores s;
  s.y_base.reserve(ids.size());
  s.y_pred.reserve(ids.size());
  s.hidden.reserve(ids.size());
  for (const auto& row : ids) {
    auto fr = model.forward(row);
    s.y_base.push_back(fr.y_base);
    if (memory) {
      auto d = memory_predict(*memory, fr.y_base, fr.hidden, comp);
      s.fallbacks += d.fallback ? 1 : 0;
      s.y_pred.push_back(d.y_pred);
      s.diag.push_back(d);
    } else {
      s.y_pred.push_back(fr.y_base);
    }
    s.hidden.push_back(std::move(fr.hidden));
  }
  return s;
}

inline SlotMetrics slot_metrics(std::size_t slot, Method m, const std::vector<double>& scores,
                                const std::vector<Example>& rows) {
  std::vector<double> labels(rows.size());
  std::vector<std::string> users(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labels[i] = rows[i].label;
    users[i] = rows[i].user.empty() ? std::string("_") : rows[i].user;
  }
  SlotMetrics out;
  out.slot = std::to_string(slot);
  out.method = to_string(m);
  out.rows = rows.size();
  out.auc = metrics::auc(scores, labels);
  try {
    out.gauc = metrics::gauc<std::string>(scores, labels, users);
  } catch (const DegenerateLabels&) {
    out.gauc = std::numeric_limits<double>::quiet_NaN();
  }
  out.logloss = metrics::logloss(scores, labels);
  return out;
}

}  // namespace detail

struct RunHooks {
  std::ostream* trace = nullptr;          // JSON-lines diagnostics
  ExperimentObserver* observer = nullptr;
  // Receives the final memory of each memory-backed method.
  std::function<void(Method, const AnyMemory&)> final_memory;
};

inline ExperimentResult run_methods(const ExperimentConfig& cfg, const Prepared& prep,
                                    const RunHooks& hooks = {}) {
  cfg.validate();
  ExperimentResult result;
  std::vector<SlotMetrics> means;
  const auto& slots = prep.data.slots;

  for (Method method : cfg.methods) {
    // Methods never share mutable state: updating methods work on a clone.
    std::optional<BaseModel> own;
    if (updates_model(method)) own.emplace(*prep.model);
    const BaseModel* model = own ? &*own : prep.model.get();
    std::optional<AnyMemory> memory;
    if (uses_memory(method)) memory.emplace(make_memory(cfg.memory, model->hidden_dim()));

    SlotMetrics mean;
    mean.slot = "mean";
    mean.method = to_string(method);
    std::size_t gauc_slots = 0;

    for (std::size_t t = 0; t < slots.size(); ++t) {
      const auto& rows = slots[t];
      if (rows.empty()) continue;
      std::vector<std::vector<std::uint32_t>> ids;
      ids.reserve(rows.size());
      for (const auto& ex : rows) ids.push_back(ex.ids);

      if (hooks.observer) hooks.observer->on_score(t, method);
      auto scores = detail::score_slot(*model, ids, memory ? &*memory : nullptr, cfg.compensation);

      if (hooks.observer) hooks.observer->on_reveal(t, method);
      SlotMetrics sm = detail::slot_metrics(t, method, scores.y_pred, rows);
      sm.fallbacks = scores.fallbacks;

      if (hooks.trace && memory) {
        for (std::size_t i = 0; i < scores.diag.size(); ++i) {
          const auto& d = scores.diag[i];
          nlohmann::json line = {{"slot", t},           {"method", to_string(method)},
                                 {"y_base", d.y_base},  {"y_err", d.y_err},
                                 {"y_pred", d.y_pred},  {"n_neighbors", d.n_neighbors},
                                 {"fallback", d.fallback}};
          *hooks.trace << line.dump() << '\n';
        }
      }

      bool updated = false;
      if (updates_model(method)) {
        if (hooks.observer) hooks.observer->on_update(t, method);
        own->incremental_update(rows, cfg.inc_lr());
        updated = true;
      }

      if (memory) {
        bool reset = false;
        switch (cfg.memory.refresh) {
          case RefreshPolicy::never: break;
          case RefreshPolicy::every_n_slots:
            reset = t > 0 && t % cfg.memory.refresh_every == 0;
            break;
          case RefreshPolicy::on_model_update:
            reset = updated && cfg.memory.reset_on_update;
            break;
        }
        if (reset) memory_reset(*memory);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (updated) {
            const auto fresh = model->forward(ids[i]);
            memory_write(*memory, fresh.hidden, rows[i].label, scores.y_base[i], cfg.memory.sigma);
          } else {
            memory_write(*memory, scores.hidden[i], rows[i].label, scores.y_base[i], cfg.memory.sigma);
          }
        }
      }

      mean.auc += sm.auc;
      if (!std::isnan(sm.gauc)) {
        mean.gauc += sm.gauc;
        ++gauc_slots;
      }
      mean.logloss += sm.logloss;
      mean.rows += sm.rows;
      mean.fallbacks += sm.fallbacks;
      result.rows.push_back(sm);
    }
    const double n = static_cast<double>(slots.size());
    mean.auc /= n;
    mean.logloss /= n;
    mean.gauc = gauc_slots ? mean.gauc / static_cast<double>(gauc_slots)
                           : std::numeric_limits<double>::quiet_NaN();
    means.push_back(mean);
    if (memory && hooks.final_memory) hooks.final_memory(method, *memory);
  }
  result.rows.insert(result.rows.end(), means.begin(), means.end());
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {}) {
  return run_methods(cfg, prepare(cfg), hooks);
}

inline void write_results_csv(std::ostream& out, const ExperimentResult& r) {
  out << "slot,method,auc,gauc,logloss\n";
  for (const auto& m : r.rows)
    out << m.slot << ',' << m.method << ',' << fmt_double(m.auc) << ',' << fmt_double(m.gauc)
        << ',' << fmt_double(m.logloss) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParam { lambda, K_arrays, L_bits, tau, gamma, sigma };

inline std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::lambda: return "lambda";
    case SweepParam::K_arrays: return "K_arrays";
    case SweepParam::L_bits: return "L_bits";
    case SweepParam::tau: return "tau";
    case SweepParam::gamma: return "gamma";
    case SweepParam::sigma: return "sigma";
  }
  return "?";
}

inline SweepParam sweep_param_from_string(std::string_view s) {
  for (auto p : {SweepParam::lambda, SweepParam::K_arrays, SweepParam::L_bits, SweepParam::tau,
                 SweepParam::gamma, SweepParam::sigma})
    if (s == to_string(p)) return p;
  throw InvalidParameter("unknown sweep parameter '" + std::string(s) + "'");
}

inline void apply_sweep_value(ExperimentConfig& cfg, SweepParam p, double v) {
  switch (p) {
    case SweepParam::lambda: cfg.compensation.lambda = v; break;
    case SweepParam::K_arrays: cfg.memory.num_arrays = static_cast<int>(v); break;
    case SweepParam::L_bits: cfg.memory.bits_per_hash = static_cast<int>(v); break;
    case SweepParam::tau: cfg.compensation.tau = v; break;
    case SweepParam::gamma: cfg.compensation.gamma = v; break;
    case SweepParam::sigma: cfg.memory.sigma = v; break;
  }
}

struct SweepRow {
  double value = 0.0;
  double gauc = 0.0;
  double auc = 0.0;
};

struct SweepResult {
  SweepParam param = SweepParam::lambda;
  Method method = Method::reloop2;
  std::vector<SweepRow> rows;
  SlotMetrics baseline;  // frozen model, same data and seed
};

// Runs the memory-backed method once per value against one shared trained
// model; each row holds the across-slot mean metrics.
inline SweepResult sweep(const ExperimentConfig& base, SweepParam param,
                         const std::vector<double>& values, const Prepared* shared = nullptr) {
  if (values.empty()) throw InvalidParameter("sweep: no values");
  std::optional<Prepared> own;
  if (!shared) own.emplace(prepare(base));
  const Prepared& prep = shared ? *shared : *own;

  SweepResult out;
  out.param = param;
  out.method = Method::reloop2;
  for (Method m : base.methods)
    if (uses_memory(m)) {
      out.method = m;
      break;
    }
  {
    ExperimentConfig c = base;
    c.methods = {Method::frozen};
    out.baseline = run_methods(c, prep).mean(Method::frozen);
  }
  for (double v : values) {
    ExperimentConfig c = base;
    c.methods = {out.method};
    apply_sweep_value(c, param, v);
    const auto r = run_methods(c, prep).mean(out.method);
    out.rows.push_back({v, r.gauc, r.auc});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "value,gauc,auc\n";
  for (const auto& row : r.rows)
    out << fmt_double(row.value) << ',' << fmt_double(row.gauc) << ',' << fmt_double(row.auc) << '\n';
}

// ---------------------------------------------------------------------------
// Throughput benchmark

struct BenchLevel {
  std::size_t fill = 0;
  double write_ns = 0.0;  // per operation
  double read_ns = 0.0;
  std::size_t accumulator_bytes = 0;
};

struct BenchReport {
  SrpParams params;
  std::vector<BenchLevel> levels;
  double write_ratio = 0.0;  // time per op at the largest fill / smallest fill
  double read_ratio = 0.0;
  std::size_t oracle_capacity = 0;
  std::size_t oracle_size_after_overfill = 0;
};

struct BenchOptions {
  std::vector<std::size_t> fills = {1000, 100000, 1000000};
  std::size_t ops = 10000;
  int repeats = 5;
  std::size_t oracle_capacity = 1000;
};

inline BenchReport bench(const SrpParams& params, const BenchOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  BenchReport rep;
  rep.params = params;
  Rng rng(substream_seed(params.seed, 0xBE));
  auto random_vec = [&](std::vector<double>& v) {
    v.resize(params.dim);
    for (double& x : v) x = rng.normal();
  };
  std::vector<std::vector<double>> probe(opt.ops);
  std::vector<double> labels(opt.ops), preds(opt.ops);
  for (std::size_t i = 0; i < opt.ops; ++i) {
    random_vec(probe[i]);
    labels[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    preds[i] = rng.uniform01();
  }

  std::vector<double> v;
  for (std::size_t fill : opt.fills) {
    ErrorSketch sketch(params);
    for (std::size_t i = 0; i < fill; ++i) {
      random_vec(v);
      sketch.write(v, rng.bernoulli(0.3) ? 1.0 : 0.0, rng.uniform01());
    }
    double best_w = 1e300, best_r = 1e300;
    double sink = 0.0;
    for (int r = 0; r < opt.repeats; ++r) {
      // Reads first so the fill level under measurement is exact.
      auto t0 = clock::now();
      for (std::size_t i = 0; i < opt.ops; ++i) {
        auto n = sketch.try_read(probe[i]);
        if (n) sink += n->entries.front().label;
      }
      auto t1 = clock::now();
      best_r = std::min(best_r, std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    for (int r = 0; r < opt.repeats; ++r) {
      ErrorSketch copy = sketch;
      auto t0 = clock::now();
      for (std::size_t i = 0; i < opt.ops; ++i) copy.write(probe[i], labels[i], preds[i]);
      auto t1 = clock::now();
      best_w = std::min(best_w, std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    if (sink < 0) std::abort();  // keeps the read loop observable
    BenchLevel lvl;
    lvl.fill = fill;
    lvl.write_ns = best_w / static_cast<double>(opt.ops);
    lvl.read_ns = best_r / static_cast<double>(opt.ops);
    lvl.accumulator_bytes = sketch.accumulator_bytes();
    rep.levels.push_back(lvl);
  }
  if (!rep.levels.empty()) {
    rep.write_ratio = rep.levels.back().write_ns / rep.levels.front().write_ns;
    rep.read_ratio = rep.levels.back().read_ns / rep.levels.front().read_ns;
  }

  OracleParams op;
  op.dim = params.dim;
  op.capacity = opt.oracle_capacity;
  OracleMemory oracle(op);
  for (std::size_t i = 0; i < 2 * opt.oracle_capacity; ++i) {
    random_vec(v);
    oracle.store(v, 1.0, 0.5);
  }
  rep.oracle_capacity = opt.oracle_capacity;
  rep.oracle_size_after_overfill = oracle.size();
  return rep;
}

inline void write_bench_report(std::ostream& out, const BenchReport& r) {
  out << "fill,write_ns_per_op,read_ns_per_op,accumulator_bytes\n";
  for (const auto& l : r.levels)
    out << l.fill << ',' << fmt_double(l.write_ns) << ',' << fmt_double(l.read_ns) << ','
        << l.accumulator_bytes << '\n';
  out << "# write_ratio=" << fmt_double(r.write_ratio) << " read_ratio=" << fmt_double(r.read_ratio)
      << " oracle_capacity=" << r.oracle_capacity
      << " oracle_size_after_overfill=" << r.oracle_size_after_overfill << '\n';
}

}  // namespace errcomp
