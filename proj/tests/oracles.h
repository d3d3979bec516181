// Copyright 2026 The histore Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Independent reference computations shared by the unit tests and the
// acceptance binary. Each one is written from the definition, not from the
// library code it checks.

#ifndef HISTORE_TESTS_ORACLES_H_
#define HISTORE_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Minimum over every partition of the points into k non-empty groups of
// sum_i (1 - cos(x_i, direction of its group's sum)) * 2, which is the
// spherical K-means objective for unit-norm points.
inline double spherical_kmeans_optimum(const std::vector<std::vector<double>> &x, size_t k) {
  const size_t n = x.size(), dim = x[0].size();
  std::vector<size_t> label(n, 0);
  double best = INFINITY;
  for (;;) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<size_t> sizes(k, 0);
    for (size_t i = 0; i < n; ++i) {
      ++sizes[label[i]];
      for (size_t d = 0; d < dim; ++d) sums[label[i]][d] += x[i][d];
    }
    if (std::find(sizes.begin(), sizes.end(), 0u) == sizes.end()) {
      double value = 2.0 * n;
      for (const auto &s : sums) {
        double sq = 0;
        for (double v : s) sq += v * v;
        value -= 2.0 * std::sqrt(sq);
      }
      best = std::min(best, value);
    }
    size_t i = 0;
    while (i < n && ++label[i] == k) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

struct SeparatedSet {
  std::vector<std::vector<double>> points;
  std::vector<size_t> truth;
  size_t k = 0;
};

// k poles at pairwise angles of at least min_angle, each with one or more
// points drawn as pole + N(0, sigma) and renormalized.
inline SeparatedSet separated_points(std::mt19937_64 &rng, size_t n, size_t k, size_t dim,
                                     double min_angle, double sigma) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit = [&](std::vector<double> v) {
    double s = 0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    for (double &a : v) a /= s;
    return v;
  };
  std::vector<std::vector<double>> poles;
  while (poles.size() < k) {
    std::vector<double> v(dim);
    for (double &a : v) a = normal(rng);
    v = unit(v);
    bool ok = true;
    for (const auto &p : poles) {
      double c = std::inner_product(v.begin(), v.end(), p.begin(), 0.0);
      ok &= std::acos(std::clamp(c, -1.0, 1.0)) >= min_angle;
    }
    if (ok) poles.push_back(v);
  }
  SeparatedSet out;
  out.k = k;
  for (size_t i = 0; i < n; ++i) {
    size_t c = i < k ? i : rng() % k;
    std::vector<double> v = poles[c];
    for (double &a : v) a += sigma * normal(rng);
    out.points.push_back(unit(v));
    out.truth.push_back(c);
  }
  return out;
}

// Accuracy of the best one-to-one cluster-to-label mapping, by trying every
// permutation of labels.
inline double best_permutation_accuracy(const std::vector<size_t> &clusters,
                                        const std::vector<size_t> &gold, size_t k) {
  std::vector<size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  size_t best = 0;
  do {
    size_t hits = 0;
    for (size_t i = 0; i < clusters.size(); ++i) hits += perm[clusters[i]] == gold[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return clusters.empty() ? 0.0 : static_cast<double>(best) / clusters.size();
}

struct Metrics {
  double accuracy, precision, recall, f1;
};

// Definition-based binary metrics with 0 for undefined ratios.
inline Metrics binary_metrics(long tp, long fp, long fn, long tn) {
  Metrics m;
  m.accuracy = double(tp + tn) / double(tp + fp + fn + tn);
  m.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  // Harmonic mean of precision and recall, in count form.
  m.f1 = tp == 0 ? 0.0 : double(2 * tp) / double(2 * tp + fp + fn);
  return m;
}

}  // namespace oracle

#endif  // HISTORE_TESTS_ORACLES_H_
