#pragma once

// Classification and group-fairness metrics for a binary task with a binary
// sensitive attribute.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fairac/error.hpp"

namespace fairac {

namespace detail {
inline void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": input lengths differ");
}
}  // namespace detail

inline double accuracy(std::span<const int> pred, std::span<const int> y) {
  detail::require_aligned(pred.size(), y.size(), "accuracy");
  if (pred.empty()) throw NumericError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

// |P(yhat = 1 | s = 0) - P(yhat = 1 | s = 1)|
inline double delta_sp(std::span<const int> pred, std::span<const int> s) {
  detail::require_aligned(pred.size(), s.size(), "delta_sp");
  std::array<std::size_t, 2> n{}, pos{};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 0 && s[i] != 1) throw NumericError("sensitive value outside {0,1}");
    ++n[s[i]];
    pos[s[i]] += pred[i] == 1;
  }
  if (n[0] == 0 || n[1] == 0) throw NumericError("delta_sp: a sensitive group is empty");
  return std::abs(static_cast<double>(pos[0]) / static_cast<double>(n[0]) -
                  static_cast<double>(pos[1]) / static_cast<double>(n[1]));
}

// |TPR(s = 0) - TPR(s = 1)|
inline double delta_eo(std::span<const int> pred, std::span<const int> y, std::span<const int> s) {
  detail::require_aligned(pred.size(), y.size(), "delta_eo");
  detail::require_aligned(pred.size(), s.size(), "delta_eo");
  std::array<std::size_t, 2> n{}, tp{};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 0 && s[i] != 1) throw NumericError("sensitive value outside {0,1}");
    if (y[i] != 1) continue;
    ++n[s[i]];
    tp[s[i]] += pred[i] == 1;
  }
  if (n[0] == 0 || n[1] == 0) throw NumericError("delta_eo: a sensitive group has no positives");
  return std::abs(static_cast<double>(tp[0]) / static_cast<double>(n[0]) -
                  static_cast<double>(tp[1]) / static_cast<double>(n[1]));
}

// Mann-Whitney AUC with average ranks for ties, so tied pairs count 1/2.
inline double auc(std::span<const double> scores, std::span<const int> y) {
  detail::require_aligned(scores.size(), y.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share their average
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw NumericError("auc needs both classes");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct RunMeta {
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::string method;
};

// All rates are fractions in [0, 1]; the *_pct accessors give the
// percentage-point values used in result tables.
struct EvaluationReport {
  double accuracy = 0.0;
  double auc = 0.0;
  double delta_sp = 0.0;
  double delta_eo = 0.0;
  double combined = 0.0;
  // counts[s][y][yhat]
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> counts{};
  RunMeta meta;

  double accuracy_pct() const { return 100.0 * accuracy; }
  double auc_pct() const { return 100.0 * auc; }
  double delta_sp_pct() const { return 100.0 * delta_sp; }
  double delta_eo_pct() const { return 100.0 * delta_eo; }
  double combined_pct() const { return delta_sp_pct() + delta_eo_pct(); }
};

inline EvaluationReport evaluate(std::span<const int> pred, std::span<const double> scores,
                                 std::span<const int> y, std::span<const int> s,
                                 RunMeta meta = {}) {
  detail::require_aligned(pred.size(), scores.size(), "evaluate");
  EvaluationReport r;
  r.accuracy = accuracy(pred, y);
  r.auc = auc(scores, y);
  r.delta_sp = delta_sp(pred, s);
  r.delta_eo = delta_eo(pred, y, s);
  r.combined = r.delta_sp + r.delta_eo;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw NumericError("labels must be 0 or 1");
    ++r.counts[s[i]][y[i]][pred[i] == 1 ? 1 : 0];
  }
  r.meta = std::move(meta);
  return r;
}

}  // namespace fairac
