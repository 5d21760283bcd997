#pragma once

// Ranking metrics for binary scores. Labels are 0/1 with 1 the positive class.

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "cyborg/error.hpp"

namespace cyborg {

namespace detail {

inline void require_binary_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "one label per score is required");
  for (int l : labels)
    if (l != 0 && l != 1) fail(ErrorKind::SchemaError, "labels must be 0 or 1");
}

/// Indices sorted by descending score.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace detail

/// Area under the ROC curve; tied scores count one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::require_binary_labels(scores, labels);
  const long long positives = std::count(labels.begin(), labels.end(), 1);
  const long long negatives = static_cast<long long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) fail(ErrorKind::SingleClass, "AUC needs both classes");

  // Ascending walk over tie groups; twice the Mann-Whitney count stays integral.
  auto order = detail::descending_order(scores);
  std::reverse(order.begin(), order.end());
  long long twice = 0, negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    long long pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg)++;
      ++j;
    }
    twice += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(positives * negatives));
}

/// Step-wise area under the precision-recall curve with one operating point
/// per distinct score.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  detail::require_binary_labels(scores, labels);
  const long long positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0) fail(ErrorKind::NoPositives, "average precision needs a positive sample");
  const auto order = detail::descending_order(scores);
  double ap = 0.0;
  long long tp = 0, fp = 0, prev_tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp)++;
      ++j;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(positives) * precision;
    prev_tp = tp;
    i = j;
  }
  return ap;
}

}  // namespace cyborg
