#pragma once

// Exact raw-sample memory with brute-force cosine top-k retrieval. Serves as
// the reference against which the sketch is checked, and as an alternative
// memory for the experiment runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "errcomp/errors.hpp"
#include "errcomp/random.hpp"
#include "errcomp/sketch_memory.hpp"

namespace errcomp {

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct OracleParams {
  std::size_t dim = 0;
  std::size_t capacity = 100000;
  std::size_t k = 32;
  double keep_probability = 1.0;  // random down-sampling of accepted records
  std::uint64_t seed = 0;
};

class OracleMemory {
 public:
  explicit OracleMemory(const OracleParams& params) : params_(params), rng_(params.seed) {
    if (params.dim < 1) throw InvalidParameter("OracleMemory: dim must be >= 1");
    if (params.capacity < 1) throw InvalidParameter("OracleMemory: capacity must be >= 1");
    if (params.k < 1) throw InvalidParameter("OracleMemory: k must be >= 1");
    if (!(params.keep_probability > 0.0 && params.keep_probability <= 1.0))
      throw InvalidParameter("OracleMemory: keep_probability must lie in (0, 1]");
  }

  std::size_t dim() const { return params_.dim; }
  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return params_.capacity; }
  std::size_t default_k() const { return params_.k; }
  const MemoryRecord& at(std::size_t i) const { return records_[i].record; }

  bool store(std::span<const double> hidden, double label, double base_pred,
             std::optional<double> sigma = std::nullopt) {
    if (hidden.size() != dim()) throw DimensionMismatch(dim(), hidden.size());
    validate_record_values(label, base_pred);
    validate_sigma(sigma);
    if (!passes_error_filter(label, base_pred, sigma)) return false;
    if (params_.keep_probability < 1.0 && !rng_.bernoulli(params_.keep_probability))
      return false;
    if (records_.size() == params_.capacity) records_.pop_front();
    Slot s;
    s.record.hidden.assign(hidden.begin(), hidden.end());
    s.record.label = label;
    s.record.base_pred = base_pred;
    double sq = 0.0;
    for (double v : hidden) sq += v * v;
    s.norm = std::sqrt(sq);
    s.sequence = next_sequence_++;
    records_.push_back(std::move(s));
    return true;
  }

  bool store(const MemoryRecord& r, std::optional<double> sigma = std::nullopt) {
    return store(r.hidden, r.label, r.base_pred, sigma);
  }

  std::optional<Neighborhood> try_top_k(std::span<const double> query, std::size_t k) const {
    if (query.size() != dim()) throw DimensionMismatch(dim(), query.size());
    if (k < 1) throw InvalidParameter("top_k: k must be >= 1");
    if (records_.empty()) return std::nullopt;

    double qn = 0.0;
    for (double v : query) qn += v * v;
    qn = std::sqrt(qn);

    std::vector<std::pair<double, std::size_t>> scored(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const Slot& s = records_[i];
      double sim = 0.0;
      if (qn > 0.0 && s.norm > 0.0) {
        double dot = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) dot += query[j] * s.record.hidden[j];
        sim = std::clamp(dot / (qn * s.norm), -1.0, 1.0);
      }
      scored[i] = {sim, i};
    }
    // Deque order is insertion order, so the index breaks ties oldest-first.
    const auto better = [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);

    Neighborhood n;
    n.source = NeighborSource::oracle;
    n.entries.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      const MemoryRecord& r = records_[scored[i].second].record;
      n.entries.push_back({scored[i].first, r.label, r.base_pred});
    }
    return n;
  }

  Neighborhood top_k(std::span<const double> query, std::size_t k) const {
    auto n = try_top_k(query, k);
    if (!n) throw EmptyNeighborhood();
    return std::move(*n);
  }

  std::optional<Neighborhood> try_read(std::span<const double> query) const {
    return try_top_k(query, params_.k);
  }

  Neighborhood read(std::span<const double> query) const { return top_k(query, params_.k); }

  void reset() { records_.clear(); }

 private:
  struct Slot {
    MemoryRecord record;
    double norm = 0.0;
    std::uint64_t sequence = 0;
  };

  OracleParams params_;
  Rng rng_;
  std::deque<Slot> records_;
  std::uint64_t next_sequence_ = 0;
};

}  // namespace errcomp
