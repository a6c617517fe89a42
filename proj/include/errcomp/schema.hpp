#pragma once

// Feature schema: field kinds, fitted categorical vocabularies and numerical
// bucket boundaries, and the row -> id encoding consumed by the base model.
//
// Categorical and user_id fields are embedded through a vocabulary fitted on
// training rows; id 0 is reserved for out-of-vocabulary tokens. Numerical
// fields are bucketized by quantile boundaries fitted on training rows; a
// value v lands in bucket |{boundary <= v}|, so anything below the first
// boundary is bucket 0. Label and timestamp fields are not embedded.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "errcomp/errors.hpp"

namespace errcomp {

enum class FieldKind { categorical, numerical, label, user_id, timestamp };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::categorical: return "categorical";
    case FieldKind::numerical: return "numerical";
    case FieldKind::label: return "label";
    case FieldKind::user_id: return "user_id";
    case FieldKind::timestamp: return "timestamp";
  }
  return "?";
}

inline FieldKind field_kind_from_string(std::string_view s) {
  if (s == "categorical") return FieldKind::categorical;
  if (s == "numerical") return FieldKind::numerical;
  if (s == "label") return FieldKind::label;
  if (s == "user_id") return FieldKind::user_id;
  if (s == "timestamp") return FieldKind::timestamp;
  throw SchemaError("unknown field kind '" + std::string(s) + "'");
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::categorical;
};

// One raw row, cells aligned with the schema's field order.
struct Row {
  std::vector<std::string> cells;
  std::optional<double> true_ctr;  // known only for synthetic rows
};

// A row after vocabulary and bucket lookup.
struct Example {
  std::vector<std::uint32_t> ids;  // one per embedded field
  double label = 0.0;
  double timestamp = 0.0;
  std::string user;
  std::string item;
  std::string category;
  std::optional<double> true_ctr;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FieldSpec> fields, int num_buckets = 16)
      : fields_(std::move(fields)), num_buckets_(num_buckets) {
    validate();
  }

  const std::vector<FieldSpec>& fields() const { return fields_; }
  int num_buckets() const { return num_buckets_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < fields_.size(); ++i)
      if (fields_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t label_index() const { return *find_kind(FieldKind::label); }
  std::optional<std::size_t> user_index() const { return find_kind(FieldKind::user_id); }
  std::optional<std::size_t> timestamp_index() const { return find_kind(FieldKind::timestamp); }

  // Fields used by the drift report; default to the conventional names.
  std::string item_field = "item_id";
  std::string category_field = "category";

  static bool embedded(FieldKind k) {
    return k == FieldKind::categorical || k == FieldKind::user_id || k == FieldKind::numerical;
  }

  std::vector<std::size_t> embedded_fields() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fields_.size(); ++i)
      if (embedded(fields_[i].kind)) out.push_back(i);
    return out;
  }

  bool fitted() const { return fitted_; }

  // Rows per embedding table, OOV row included for categorical fields.
  std::vector<std::size_t> cardinalities() const {
    require_fitted();
    std::vector<std::size_t> out;
    for (std::size_t i : embedded_fields()) {
      if (fields_[i].kind == FieldKind::numerical)
        out.push_back(boundaries_[i].size() + 1);
      else
        out.push_back(vocab_[i].size() + 1);
    }
    return out;
  }

  const std::vector<double>& boundaries(std::size_t field) const { return boundaries_.at(field); }

  void fit(const std::vector<Row>& rows) {
    vocab_.assign(fields_.size(), {});
    boundaries_.assign(fields_.size(), {});
    for (std::size_t f = 0; f < fields_.size(); ++f) {
      const FieldKind kind = fields_[f].kind;
      if (kind == FieldKind::categorical || kind == FieldKind::user_id) {
        auto& v = vocab_[f];
        for (const Row& r : rows) {
          const std::string& tok = r.cells.at(f);
          if (!v.contains(tok)) v.emplace(tok, static_cast<std::uint32_t>(v.size() + 1));
        }
      } else if (kind == FieldKind::numerical) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (const Row& r : rows)
          if (auto x = parse_double(r.cells.at(f))) vals.push_back(*x);
        boundaries_[f] = quantile_boundaries(std::move(vals), num_buckets_);
      }
    }
    fitted_ = true;
  }

  std::uint32_t bucketize(std::size_t field, double v) const {
    const auto& b = boundaries_.at(field);
    return static_cast<std::uint32_t>(std::upper_bound(b.begin(), b.end(), v) - b.begin());
  }

  std::uint32_t lookup(std::size_t field, const std::string& token) const {
    const auto& v = vocab_.at(field);
    auto it = v.find(token);
    return it == v.end() ? 0u : it->second;
  }

  Example encode(const Row& row) const {
    require_fitted();
    if (row.cells.size() != fields_.size())
      throw SchemaError("row has " + std::to_string(row.cells.size()) + " cells, schema has " +
                        std::to_string(fields_.size()));
    Example e;
    e.true_ctr = row.true_ctr;
    for (std::size_t f = 0; f < fields_.size(); ++f) {
      const std::string& cell = row.cells[f];
      switch (fields_[f].kind) {
        case FieldKind::categorical:
        case FieldKind::user_id:
          e.ids.push_back(lookup(f, cell));
          break;
        case FieldKind::numerical: {
          auto v = parse_double(cell);
          if (!v) throw SchemaError("field '" + fields_[f].name + "': not a number: '" + cell + "'");
          e.ids.push_back(bucketize(f, *v));
          break;
        }
        case FieldKind::label: {
          auto v = parse_double(cell);
          if (!v || (*v != 0.0 && *v != 1.0))
            throw SchemaError("field '" + fields_[f].name + "': label must be 0 or 1");
          e.label = *v;
          break;
        }
        case FieldKind::timestamp: {
          auto v = parse_double(cell);
          if (!v) throw SchemaError("field '" + fields_[f].name + "': bad timestamp");
          e.timestamp = *v;
          break;
        }
      }
      if (fields_[f].kind == FieldKind::user_id) e.user = cell;
      if (fields_[f].name == item_field) e.item = cell;
      if (fields_[f].name == category_field) e.category = cell;
    }
    return e;
  }

  std::vector<Example> encode_all(const std::vector<Row>& rows) const {
    std::vector<Example> out;
    out.reserve(rows.size());
    for (const Row& r : rows) out.push_back(encode(r));
    return out;
  }

  // Sidecar form: {"fields":[{"name":..,"kind":..}], "num_buckets":16,
  // "item_field":..,"category_field":..}; fitted state is included when
  // present.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["num_buckets"] = num_buckets_;
    j["item_field"] = item_field;
    j["category_field"] = category_field;
    for (const auto& f : fields_) j["fields"].push_back({{"name", f.name}, {"kind", to_string(f.kind)}});
    if (fitted_) {
      nlohmann::json fitted = nlohmann::json::object();
      for (std::size_t f = 0; f < fields_.size(); ++f) {
        if (fields_[f].kind == FieldKind::numerical) {
          fitted[fields_[f].name] = {{"boundaries", boundaries_[f]}};
        } else if (fields_[f].kind == FieldKind::categorical || fields_[f].kind == FieldKind::user_id) {
          std::vector<std::string> tokens(vocab_[f].size());
          for (const auto& [tok, id] : vocab_[f]) tokens[id - 1] = tok;
          fitted[fields_[f].name] = {{"vocab", tokens}};
        }
      }
      j["fitted"] = std::move(fitted);
    }
    return j;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    std::vector<FieldSpec> fields;
    if (!j.contains("fields") || !j["fields"].is_array()) throw SchemaError("schema: missing 'fields'");
    for (const auto& f : j["fields"])
      fields.push_back({f.at("name").get<std::string>(),
                        field_kind_from_string(f.at("kind").get<std::string>())});
    FeatureSchema s(std::move(fields), j.value("num_buckets", 16));
    s.item_field = j.value("item_field", std::string("item_id"));
    s.category_field = j.value("category_field", std::string("category"));
    if (j.contains("fitted")) {
      const auto& fitted = j["fitted"];
      s.vocab_.assign(s.fields_.size(), {});
      s.boundaries_.assign(s.fields_.size(), {});
      for (std::size_t f = 0; f < s.fields_.size(); ++f) {
        if (!fitted.contains(s.fields_[f].name)) continue;
        const auto& e = fitted[s.fields_[f].name];
        if (e.contains("boundaries")) s.boundaries_[f] = e["boundaries"].get<std::vector<double>>();
        if (e.contains("vocab")) {
          const auto tokens = e["vocab"].get<std::vector<std::string>>();
          for (std::size_t i = 0; i < tokens.size(); ++i)
            s.vocab_[f].emplace(tokens[i], static_cast<std::uint32_t>(i + 1));
        }
      }
      s.fitted_ = true;
    }
    return s;
  }

  static std::vector<double> quantile_boundaries(std::vector<double> vals, int num_buckets) {
    std::vector<double> out;
    if (vals.empty() || num_buckets < 2) return out;
    std::sort(vals.begin(), vals.end());
    for (int q = 1; q < num_buckets; ++q) {
      const std::size_t pos = vals.size() * static_cast<std::size_t>(q) / static_cast<std::size_t>(num_buckets);
      const double b = vals[std::min(pos, vals.size() - 1)];
      if (out.empty() || b > out.back()) out.push_back(b);
    }
    return out;
  }

 private:
  std::optional<std::size_t> find_kind(FieldKind k) const {
    for (std::size_t i = 0; i < fields_.size(); ++i)
      if (fields_[i].kind == k) return i;
    return std::nullopt;
  }

  void validate() const {
    int labels = 0;
    for (const auto& f : fields_) labels += f.kind == FieldKind::label ? 1 : 0;
    if (labels != 1) throw SchemaError("schema must declare exactly one label field");
    if (embedded_fields().empty()) throw SchemaError("schema has no embeddable feature field");
    for (std::size_t i = 0; i < fields_.size(); ++i)
      for (std::size_t j = i + 1; j < fields_.size(); ++j)
        if (fields_[i].name == fields_[j].name)
          throw SchemaError("duplicate field name '" + fields_[i].name + "'");
  }

  void require_fitted() const {
    if (!fitted_) throw SchemaError("schema has not been fitted on training data");
  }

  std::vector<FieldSpec> fields_;
  int num_buckets_ = 16;
  bool fitted_ = false;
  std::vector<std::unordered_map<std::string, std::uint32_t>> vocab_;
  std::vector<std::vector<double>> boundaries_;
};

}  // namespace errcomp
