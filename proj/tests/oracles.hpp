#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cyborg/grid.hpp"

namespace oracle {

inline cyborg::Map random_map(std::mt19937_64& rng, std::size_t w, std::size_t h, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  cyborg::Map m(w, h);
  for (double& v : m) v = u(rng);
  return m;
}

/// Central differences of f at x, step h per coordinate.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Mann-Whitney: fraction of (positive, negative) pairs ordered correctly, ties 0.5.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

/// Step-wise area under the PR curve, one operating point per distinct score
/// threshold, each found by a full scan.
inline double brute_force_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  long long positives = std::count(labels.begin(), labels.end(), 1);
  double ap = 0.0;
  long long prev_tp = 0;
  for (double t : thresholds) {
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] == 1 ? tp : fp)++;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(positives) * precision;
    prev_tp = tp;
  }
  return ap;
}

/// Rank-sum winner by exhaustive comparison. `aucs[t][c]` is the AUC of cell c
/// in table t, where cells are listed in tie-break order. Returns the index of
/// the winning cell.
inline std::size_t rank_sum_winner(const std::vector<std::vector<double>>& aucs) {
  const std::size_t k = aucs.at(0).size();
  std::vector<long long> sums(k, 0);
  for (const auto& table : aucs)
    for (std::size_t c = 0; c < k; ++c) {
      // Rank = 1 + cells that beat c, counting earlier cells on equal AUC.
      long long rank = 1;
      for (std::size_t o = 0; o < k; ++o)
        if (table[o] > table[c] || (table[o] == table[c] && o < c)) ++rank;
      sums[c] += rank;
    }
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c)
    if (sums[c] < sums[best]) best = c;
  return best;
}

}  // namespace oracle
