#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errcomp/errors.hpp"

namespace errcomp::metrics {

// Rank-sum (Mann-Whitney) AUC. Tied scores receive their average rank, which
// is equivalent to counting each tied positive/negative pair as one half.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks i+1 .. j+1 averaged
    const double avg_rank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] > 0.5) {
        pos += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j + 1;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw DegenerateLabels("auc: labels contain a single class");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// Impression-weighted mean of per-user AUC over users with both classes.
template <class UserId>
double gauc(std::span<const double> scores, std::span<const double> labels,
            std::span<const UserId> users) {
  if (scores.size() != labels.size()) throw DimensionMismatch(scores.size(), labels.size());
  if (scores.size() != users.size()) throw DimensionMismatch(scores.size(), users.size());

  std::unordered_map<UserId, std::vector<std::size_t>> groups;
  std::vector<const UserId*> first_seen;
  for (std::size_t i = 0; i < users.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(users[i]);
    if (inserted) first_seen.push_back(&it->first);
    it->second.push_back(i);
  }

  std::vector<std::pair<double, double>> per_user;  // (impressions, auc)
  double weight = 0.0;
  std::vector<double> s, l;
  // Iterate in first-appearance order so the floating-point sum is reproducible.
  for (const UserId* u : first_seen) {
    const auto& rows = groups.at(*u);
    double npos = 0.0;
    for (std::size_t r : rows) npos += labels[r] > 0.5 ? 1.0 : 0.0;
    if (npos == 0.0 || npos == static_cast<double>(rows.size())) continue;
    s.clear();
    l.clear();
    for (std::size_t r : rows) {
      s.push_back(scores[r]);
      l.push_back(labels[r]);
    }
    const double w = static_cast<double>(rows.size());
    per_user.push_back({w, auc(s, l)});
    weight += w;
  }
  if (weight == 0.0) throw DegenerateLabels("gauc: no user has both classes");
  // Normalised weights first, so a single user reproduces its AUC exactly.
  double out = 0.0;
  for (const auto& [w, a] : per_user) out += (w / weight) * a;
  return out;
}

// Mean binary cross-entropy; probabilities are clipped to [eps, 1 - eps].
inline double logloss(std::span<const double> probs, std::span<const double> labels,
                      double eps = 1e-15) {
  if (probs.size() != labels.size()) throw DimensionMismatch(probs.size(), labels.size());
  if (probs.empty()) throw InvalidParameter("logloss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    sum -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

// Relative improvement in percent.
inline double rel_imp(double metric, double reference) {
  if (reference == 0.0) throw InvalidParameter("rel_imp: zero reference");
  return (metric - reference) / reference * 100.0;
}

}  // namespace errcomp::metrics
