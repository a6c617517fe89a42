#pragma once

// Row ingestion, chronological slotting, synthetic drifting streams and
// per-slot drift diagnostics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errcomp/errors.hpp"
#include "errcomp/random.hpp"
#include "errcomp/schema.hpp"

namespace errcomp {

template <class R>
struct BasicSlot {
  std::size_t index = 0;
  std::vector<R> rows;
  double t_begin = 0.0;
  double t_end = 0.0;
};

using Slot = BasicSlot<Row>;

inline double row_timestamp(const Row& r, std::optional<std::size_t> ts_field, double fallback) {
  if (!ts_field) return fallback;
  auto v = parse_double(r.cells.at(*ts_field));
  return v ? *v : fallback;
}

// Even chronological partition; the remainder goes to the last slot.
inline std::vector<Slot> make_slots(const std::vector<Row>& rows, std::size_t n_slots,
                                    std::optional<std::size_t> ts_field = std::nullopt) {
  if (n_slots < 1) throw InvalidParameter("make_slots: n_slots must be >= 1");
  if (rows.size() < n_slots)
    throw InvalidParameter("make_slots: " + std::to_string(rows.size()) + " rows cannot fill " +
                           std::to_string(n_slots) + " slots");
  const std::size_t per = rows.size() / n_slots;
  std::vector<Slot> slots(n_slots);
  std::size_t pos = 0;
  for (std::size_t s = 0; s < n_slots; ++s) {
    const std::size_t take = s + 1 == n_slots ? rows.size() - pos : per;
    Slot& slot = slots[s];
    slot.index = s;
    slot.rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(pos),
                     rows.begin() + static_cast<std::ptrdiff_t>(pos + take));
    slot.t_begin = row_timestamp(slot.rows.front(), ts_field, static_cast<double>(pos));
    slot.t_end = row_timestamp(slot.rows.back(), ts_field, static_cast<double>(pos + take - 1));
    pos += take;
  }
  return slots;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvLoadOptions {
  // Rows with timestamp < split go to train, the rest to test. When unset,
  // the median timestamp is used.
  std::optional<double> split_timestamp;
};

struct CsvLoadResult {
  std::vector<Row> train;
  std::vector<Row> test;
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  double split_timestamp = 0.0;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Plain comma-separated values without quoting. Columns are matched to the
// schema by header name; extra columns are ignored.
inline CsvLoadResult load_csv(std::istream& in, const FeatureSchema& schema,
                              const CsvLoadOptions& opts = {}) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: missing header");
  const auto header = split_csv_line(line);
  std::vector<std::size_t> column(schema.fields().size());
  for (std::size_t f = 0; f < schema.fields().size(); ++f) {
    auto it = std::find(header.begin(), header.end(), schema.fields()[f].name);
    if (it == header.end()) {
      if (schema.fields()[f].kind == FieldKind::label)
        throw SchemaError("csv: missing label column '" + schema.fields()[f].name + "'");
      throw SchemaError("csv: header lacks column '" + schema.fields()[f].name + "'");
    }
    column[f] = static_cast<std::size_t>(it - header.begin());
  }

  CsvLoadResult res;
  const auto ts_field = schema.timestamp_index();
  std::vector<std::pair<double, Row>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++line_no;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      ++res.skipped;
      continue;
    }
    Row r;
    r.cells.resize(column.size());
    bool ok = true;
    for (std::size_t f = 0; f < column.size() && ok; ++f) {
      std::string& cell = cells[column[f]];
      switch (schema.fields()[f].kind) {
        case FieldKind::label: {
          auto v = parse_double(cell);
          ok = v && (*v == 0.0 || *v == 1.0);
          break;
        }
        case FieldKind::numerical:
        case FieldKind::timestamp:
          ok = parse_double(cell).has_value();
          break;
        default:
          break;
      }
      r.cells[f] = std::move(cell);
    }
    if (!ok) {
      ++res.skipped;
      continue;
    }
    const double ts = row_timestamp(r, ts_field, static_cast<double>(line_no));
    rows.emplace_back(ts, std::move(r));
  }
  res.parsed = rows.size();
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  if (opts.split_timestamp) {
    res.split_timestamp = *opts.split_timestamp;
  } else if (!rows.empty()) {
    res.split_timestamp = rows[rows.size() / 2].first;
  }
  for (auto& [ts, r] : rows) (ts < res.split_timestamp ? res.train : res.test).push_back(std::move(r));
  return res;
}

inline CsvLoadResult load_csv(const std::string& path, const FeatureSchema& schema,
                              const CsvLoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_csv(in, schema, opts);
}

inline FeatureSchema load_schema_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema '" + path + "'");
  nlohmann::json j;
  in >> j;
  return FeatureSchema::from_json(j);
}

// ---------------------------------------------------------------------------
// Synthetic drifting streams

enum class DriftKind { none, covariate, label, concept_drift, abrupt_concept };

inline std::string to_string(DriftKind k) {
  switch (k) {
    case DriftKind::none: return "none";
    case DriftKind::covariate: return "covariate";
    case DriftKind::label: return "label";
    case DriftKind::concept_drift: return "concept";
    case DriftKind::abrupt_concept: return "abrupt_concept";
  }
  return "?";
}

inline DriftKind drift_kind_from_string(std::string_view s) {
  if (s == "none") return DriftKind::none;
  if (s == "covariate") return DriftKind::covariate;
  if (s == "label") return DriftKind::label;
  if (s == "concept") return DriftKind::concept_drift;
  if (s == "abrupt_concept") return DriftKind::abrupt_concept;
  throw InvalidParameter("unknown drift kind '" + std::string(s) + "'");
}

// Ground truth: logit = bias_t + user_w[u] + item_w[i] + cat_w[c] + ctx_w[x]
//                       + beta . (num_a, num_b) + interact * cat_sign[c] * num_a
// The per-slot weights rotate concept A through an independent concept B:
// w_t = cos(a_t pi) A + sin(a_t pi) B, where a_t is the drift progress scaled
// by the magnitude. a = 0.5 lands on B (unrelated preferences); a = 1 lands on
// -A (every preference flipped). bias_t is solved so the mean click
// probability over the slot's rows equals the slot's base rate.
struct DriftScenario {
  DriftKind kind = DriftKind::none;
  std::size_t n_slots = 10;
  std::size_t rows_per_slot = 5000;
  std::size_t train_rows = 50000;
  double magnitude = 1.0;
  std::size_t flip_slot = 5;  // abrupt_concept: first slot under the new concept
  double base_rate = 0.2;
  std::vector<double> slot_base_rates;  // label drift; overrides magnitude when set
  std::uint64_t seed = 7;

  std::size_t n_users = 2000;
  std::size_t n_items = 1000;
  std::size_t n_categories = 12;
  std::size_t n_contexts = 4;
  double zipf_exponent = 1.1;
  double signal_scale = 1.0;

  void validate() const {
    if (!std::isfinite(magnitude) || magnitude < 0.0)
      throw InvalidParameter("drift magnitude must be finite and non-negative");
    if ((kind == DriftKind::concept_drift || kind == DriftKind::abrupt_concept) && magnitude > 1.0)
      throw InvalidParameter("concept drift magnitude must lie in [0, 1]");
    if (n_slots < 1 || rows_per_slot < 1) throw InvalidParameter("scenario needs rows and slots");
    if (n_users < 1 || n_items < 1 || n_categories < 1 || n_contexts < 1)
      throw InvalidParameter("scenario vocabularies must be non-empty");
    if (!(base_rate > 0.0 && base_rate < 1.0)) throw InvalidParameter("base_rate must lie in (0, 1)");
    for (double r : slot_base_rates)
      if (!(r > 0.0 && r < 1.0)) throw InvalidParameter("slot base rates must lie in (0, 1)");
    if (!slot_base_rates.empty() && slot_base_rates.size() != n_slots)
      throw InvalidParameter("slot_base_rates must have one entry per slot");
    if (kind == DriftKind::abrupt_concept && flip_slot >= n_slots)
      throw InvalidParameter("flip_slot must index a test slot");
  }
};

inline FeatureSchema synthetic_schema() {
  return FeatureSchema({{"user_id", FieldKind::user_id},
                        {"item_id", FieldKind::categorical},
                        {"category", FieldKind::categorical},
                        {"context", FieldKind::categorical},
                        {"num_a", FieldKind::numerical},
                        {"num_b", FieldKind::numerical},
                        {"label", FieldKind::label},
                        {"timestamp", FieldKind::timestamp}});
}

struct SyntheticStream {
  std::vector<Row> train;
  std::vector<Slot> slots;
  std::vector<double> slot_target_rates;
};

namespace detail {

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
      cdf_[i] = acc;
    }
    for (double& c : cdf_) c /= acc;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

struct Concept {
  std::vector<double> user, item, cat, ctx;
  double beta_a = 0.0, beta_b = 0.0, interact = 0.0;
};

inline Concept draw_concept(Rng& rng, const DriftScenario& sc, std::size_t item_pool) {
  const double s = sc.signal_scale;
  Concept c;
  c.user.resize(sc.n_users);
  c.item.resize(item_pool);
  c.cat.resize(sc.n_categories);
  c.ctx.resize(sc.n_contexts);
  for (double& v : c.user) v = rng.normal(0.0, 0.6 * s);
  for (double& v : c.item) v = rng.normal(0.0, 0.8 * s);
  for (double& v : c.cat) v = rng.normal(0.0, 1.0 * s);
  for (double& v : c.ctx) v = rng.normal(0.0, 0.4 * s);
  c.beta_a = rng.normal(0.0, 0.5 * s);
  c.beta_b = rng.normal(0.0, 0.5 * s);
  c.interact = rng.normal(0.0, 0.5 * s);
  return c;
}

struct Draw {
  std::size_t user, item, cat, ctx;
  double num_a, num_b;
  double logit_wo_bias;
};

// Mean of sigmoid(z + bias) equals target; bisection on the bias.
inline double solve_bias(const std::vector<Draw>& draws, double target) {
  double lo = -30.0, hi = 30.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (const Draw& d : draws) mean += 1.0 / (1.0 + std::exp(-(d.logit_wo_bias + mid)));
    mean /= static_cast<double>(draws.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::string fmt_num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

// Slot-dependent stream. Training rows follow the slot-0 distribution of an
// undrifted world; test slot t follows the scenario's drift schedule.
inline SyntheticStream generate(const DriftScenario& sc) {
  sc.validate();
  Rng world(substream_seed(sc.seed, 1));
  // Covariate drift introduces new item ids beyond the training catalogue.
  const std::size_t item_pool = sc.n_items * 2;
  const detail::Concept a = detail::draw_concept(world, sc, item_pool);
  const detail::Concept b = detail::draw_concept(world, sc, item_pool);
  std::vector<std::size_t> item_cat(item_pool);
  std::vector<double> cat_sign(sc.n_categories);
  for (auto& c : item_cat) c = world.below(sc.n_categories);
  for (auto& s : cat_sign) s = world.bernoulli(0.5) ? 1.0 : -1.0;

  const detail::ZipfSampler user_zipf(sc.n_users, sc.zipf_exponent);
  const detail::ZipfSampler item_zipf(sc.n_items, sc.zipf_exponent);
  const double denom = sc.n_slots > 1 ? static_cast<double>(sc.n_slots - 1) : 1.0;

  // progress in [0, 1] for slot t (training uses the undrifted world)
  auto concept_angle = [&](std::optional<std::size_t> t) -> double {
    if (!t) return 0.0;
    if (sc.kind == DriftKind::concept_drift) return sc.magnitude * static_cast<double>(*t) / denom;
    if (sc.kind == DriftKind::abrupt_concept) return *t >= sc.flip_slot ? sc.magnitude : 0.0;
    return 0.0;
  };
  auto covariate_shift = [&](std::optional<std::size_t> t) -> double {
    if (!t || sc.kind != DriftKind::covariate) return 0.0;
    return sc.magnitude * static_cast<double>(*t + 1) / static_cast<double>(sc.n_slots);
  };
  auto target_rate = [&](std::optional<std::size_t> t) -> double {
    if (!t || sc.kind != DriftKind::label) return sc.base_rate;
    if (!sc.slot_base_rates.empty()) return sc.slot_base_rates[*t];
    const double r = sc.base_rate * (1.0 + sc.magnitude * static_cast<double>(*t) / denom);
    return std::clamp(r, 0.01, 0.99);
  };

  double timestamp = 0.0;
  auto make_rows = [&](std::optional<std::size_t> t, std::size_t n, std::uint64_t stream) {
    Rng rng(substream_seed(sc.seed, stream));
    const double angle = concept_angle(t) * std::numbers::pi;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double shift = covariate_shift(t);
    const auto item_offset = static_cast<std::size_t>(std::llround(shift * static_cast<double>(sc.n_items)));
    // User popularity rotates under covariate shift as well.
    const auto user_offset = static_cast<std::size_t>(std::llround(shift * static_cast<double>(sc.n_users) * 0.5));

    std::vector<detail::Draw> draws(n);
    for (auto& d : draws) {
      d.user = (user_zipf(rng) + user_offset) % sc.n_users;
      d.item = (item_zipf(rng) + item_offset) % item_pool;
      d.cat = item_cat[d.item];
      d.ctx = rng.below(sc.n_contexts);
      d.num_a = rng.normal(shift, 1.0);
      d.num_b = rng.normal(-0.5 * shift, 1.0);
      auto mix = [&](double wa, double wb) { return ca * wa + sa * wb; };
      d.logit_wo_bias = mix(a.user[d.user], b.user[d.user]) + mix(a.item[d.item], b.item[d.item]) +
                        mix(a.cat[d.cat], b.cat[d.cat]) + mix(a.ctx[d.ctx], b.ctx[d.ctx]) +
                        mix(a.beta_a, b.beta_a) * d.num_a + mix(a.beta_b, b.beta_b) * d.num_b +
                        mix(a.interact, b.interact) * cat_sign[d.cat] * d.num_a;
    }
    const double rate = target_rate(t);
    const double bias = detail::solve_bias(draws, rate);
    std::vector<Row> rows;
    rows.reserve(n);
    for (const auto& d : draws) {
      const double p = 1.0 / (1.0 + std::exp(-(d.logit_wo_bias + bias)));
      const bool click = rng.bernoulli(p);
      Row r;
      r.true_ctr = p;
      r.cells = {"u" + std::to_string(d.user),
                 "i" + std::to_string(d.item),
                 "c" + std::to_string(d.cat),
                 "x" + std::to_string(d.ctx),
                 detail::fmt_num(d.num_a),
                 detail::fmt_num(d.num_b),
                 click ? "1" : "0",
                 detail::fmt_num(timestamp)};
      timestamp += 1.0;
      rows.push_back(std::move(r));
    }
    return std::make_pair(std::move(rows), rate);
  };

  SyntheticStream out;
  out.train = make_rows(std::nullopt, sc.train_rows, 100).first;
  for (std::size_t t = 0; t < sc.n_slots; ++t) {
    auto [rows, rate] = make_rows(t, sc.rows_per_slot, 200 + t);
    Slot s;
    s.index = t;
    s.t_begin = parse_double(rows.front().cells.back()).value_or(0.0);
    s.t_end = parse_double(rows.back().cells.back()).value_or(0.0);
    s.rows = std::move(rows);
    out.slots.push_back(std::move(s));
    out.slot_target_rates.push_back(rate);
  }
  return out;
}

inline void write_csv(std::ostream& out, const FeatureSchema& schema, const std::vector<Row>& rows) {
  for (std::size_t f = 0; f < schema.fields().size(); ++f)
    out << (f ? "," : "") << schema.fields()[f].name;
  out << '\n';
  for (const Row& r : rows) {
    for (std::size_t f = 0; f < r.cells.size(); ++f) out << (f ? "," : "") << r.cells[f];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Drift diagnostics

struct CategoryStat {
  std::string category;
  double ctr = 0.0;
  std::size_t count = 0;
};

struct SlotDiagnostics {
  std::size_t slot = 0;
  double variance = 0.0;  // mean squared distance of embeddings to the slot centroid
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  double ctr = 0.0;
  std::vector<CategoryStat> categories;  // sorted by category name
};

using EmbedFn = std::function<std::vector<double>(const Example&)>;

inline std::vector<SlotDiagnostics> drift_report(const std::vector<std::vector<Example>>& slots,
                                                 const EmbedFn& embed) {
  if (slots.empty()) throw InvalidParameter("drift_report: no slots");
  std::vector<SlotDiagnostics> out;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const auto& rows = slots[s];
    SlotDiagnostics d;
    d.slot = s;
    if (!rows.empty()) {
      std::vector<std::vector<double>> embs;
      embs.reserve(rows.size());
      for (const auto& ex : rows) embs.push_back(embed(ex));
      std::vector<double> centroid(embs.front().size(), 0.0);
      for (const auto& e : embs)
        for (std::size_t i = 0; i < e.size(); ++i) centroid[i] += e[i];
      for (double& c : centroid) c /= static_cast<double>(embs.size());
      double var = 0.0;
      for (const auto& e : embs)
        for (std::size_t i = 0; i < e.size(); ++i) var += (e[i] - centroid[i]) * (e[i] - centroid[i]);
      d.variance = var / static_cast<double>(embs.size());

      std::set<std::string> users, items;
      std::map<std::string, std::pair<double, std::size_t>> cats;
      double clicks = 0.0;
      for (const auto& ex : rows) {
        users.insert(ex.user);
        items.insert(ex.item);
        clicks += ex.label;
        auto& c = cats[ex.category];
        c.first += ex.label;
        c.second += 1;
      }
      d.n_users = users.size();
      d.n_items = items.size();
      d.ctr = clicks / static_cast<double>(rows.size());
      for (const auto& [name, c] : cats)
        d.categories.push_back({name, c.first / static_cast<double>(c.second), c.second});
    }
    out.push_back(std::move(d));
  }
  return out;
}

// Columns: slot,variance,n_users,n_items,ctr,category,category_ctr; one line
// per (slot, category).
inline void write_drift_csv(std::ostream& out, const std::vector<SlotDiagnostics>& report) {
  out << "slot,variance,n_users,n_items,ctr,category,category_ctr\n";
  for (const auto& d : report) {
    auto prefix = [&] {
      out << d.slot << ',' << detail::fmt_num(d.variance) << ',' << d.n_users << ',' << d.n_items
          << ',' << detail::fmt_num(d.ctr) << ',';
    };
    if (d.categories.empty()) {
      prefix();
      out << ",\n";
    }
    for (const auto& c : d.categories) {
      prefix();
      out << c.category << ',' << detail::fmt_num(c.ctr) << '\n';
    }
  }
}

}  // namespace errcomp
