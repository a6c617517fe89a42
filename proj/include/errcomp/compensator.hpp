#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errcomp/errors.hpp"
#include "errcomp/sketch_memory.hpp"

namespace errcomp {

struct CompensationConfig {
  double lambda = 0.5;  // compensation weight
  double gamma = 1.0;   // label-error vs prediction-error mix
  double tau = 0.1;     // softmax temperature

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("lambda must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidParameter("gamma must lie in [0, 1]");
    if (!(tau > 0.0)) throw InvalidParameter("tau must be positive");
  }
};

// Softmax over similarities / tau with max subtraction. Tied maxima share the
// mass equally, including in the tau -> 0 limit.
inline std::vector<double> attention_weights(std::span<const double> similarities, double tau) {
  if (similarities.empty()) throw InvalidParameter("attention_weights: empty input");
  if (!(tau > 0.0)) throw InvalidParameter("attention_weights: tau must be positive");
  const double top = *std::max_element(similarities.begin(), similarities.end());
  std::vector<double> w(similarities.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((similarities[i] - top) / tau);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

struct ErrorEstimate {
  double y_bar = 0.0;       // attention-weighted neighbour label
  double y_bar_base = 0.0;  // attention-weighted neighbour base prediction
  double y_err = 0.0;
};

inline ErrorEstimate estimate_error(const Neighborhood& n, double y_base,
                                    const CompensationConfig& cfg) {
  if (n.entries.empty()) throw EmptyNeighborhood();
  std::vector<double> sims(n.entries.size());
  for (std::size_t i = 0; i < sims.size(); ++i) sims[i] = n.entries[i].similarity;
  const auto a = attention_weights(sims, cfg.tau);
  ErrorEstimate e;
  for (std::size_t i = 0; i < a.size(); ++i) {
    e.y_bar += a[i] * n.entries[i].label;
    e.y_bar_base += a[i] * n.entries[i].base_pred;
  }
  e.y_err = cfg.gamma * e.y_bar + (1.0 - cfg.gamma) * e.y_bar_base - y_base;
  return e;
}

inline double compensate(double y_base, double y_err, double lambda) {
  return std::clamp(y_base + lambda * y_err, 0.0, 1.0);
}

struct PredictionDiagnostics {
  double y_base = 0.0;
  double y_err = 0.0;
  double y_pred = 0.0;
  double y_bar = 0.0;
  double y_bar_base = 0.0;
  std::size_t n_neighbors = 0;
  bool fallback = false;
};

template <class M>
concept ErrorMemory = requires(const M& m, std::span<const double> q) {
  { m.try_read(q) } -> std::same_as<std::optional<Neighborhood>>;
  { m.dim() } -> std::convertible_to<std::size_t>;
};

// Reads the memory for the hidden key, estimates the base model's error and
// returns the compensated output. An empty neighbourhood yields the base
// output unchanged with the fallback flag set.
template <ErrorMemory M>
PredictionDiagnostics predict(double y_base, std::span<const double> hidden, const M& memory,
                              const CompensationConfig& cfg) {
  if (hidden.size() != memory.dim()) throw DimensionMismatch(memory.dim(), hidden.size());
  PredictionDiagnostics d;
  d.y_base = y_base;
  auto n = memory.try_read(hidden);
  if (!n) {
    d.fallback = true;
    d.y_pred = y_base;
    return d;
  }
  const ErrorEstimate e = estimate_error(*n, y_base, cfg);
  d.n_neighbors = n->entries.size();
  d.y_bar = e.y_bar;
  d.y_bar_base = e.y_bar_base;
  d.y_err = e.y_err;
  d.y_pred = compensate(y_base, e.y_err, cfg.lambda);
  return d;
}

}  // namespace errcomp
