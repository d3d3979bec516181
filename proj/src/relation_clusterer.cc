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


#include "histore/relation_clusterer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "histore/error.h"

namespace histore {
namespace {

using Point = std::vector<double>;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Uniform double in [0, 1) from 53 random bits; independent of the standard
// library's distribution implementations.
double uniform01(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Run {
  std::vector<size_t> labels;
  std::vector<Point> centroids;
  double inertia = 0;
  size_t iterations = 0;
  std::vector<double> trace;
};

class Fitter {
 public:
  Fitter(const std::vector<Point> &points, const ClusteringConfig &config)
      : x_(points), c_(config), dim_(points.front().size()) {}

  Run run(uint64_t seed) {
    std::mt19937_64 rng(seed);
    Run r;
    r.centroids = init(rng);
    r.labels.assign(x_.size(), 0);
    for (size_t it = 0; it < c_.max_iterations; ++it) {
      assign(r);
      repair_empty(r);
      auto previous = r.centroids;
      update(r);
      r.inertia = cost(r);
      r.trace.push_back(r.inertia);
      r.iterations = it + 1;
      double shift = 0;
      for (size_t k = 0; k < c_.k; ++k) shift = std::max(shift, std::sqrt(sq_dist(previous[k], r.centroids[k])));
      if (shift < c_.tolerance) break;
    }
    // Final labels are the nearest centroids, so replaying assignment on the
    // training points reproduces them.
    Run last = r;
    assign(last);
    if (!has_empty(last)) {
      last.inertia = cost(last);
      if (last.inertia != r.trace.back()) last.trace.push_back(last.inertia);
      return last;
    }
    return r;
  }

 private:
  std::vector<Point> init(std::mt19937_64 &rng) {
    const size_t n = x_.size();
    std::vector<Point> centers;
    centers.push_back(x_[rng() % n]);
    std::vector<double> d2(n);
    for (size_t i = 0; i < n; ++i) d2[i] = sq_dist(x_[i], centers[0]);
    const size_t trials = 2 + static_cast<size_t>(std::log(static_cast<double>(c_.k)));
    while (centers.size() < c_.k) {
      double total = 0;
      for (double d : d2) total += d;
      size_t best = 0;
      double best_potential = std::numeric_limits<double>::infinity();
      for (size_t t = 0; t < trials; ++t) {
        size_t cand = 0;
        if (total > 0) {
          double target = uniform01(rng) * total, acc = 0;
          cand = n - 1;
          for (size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc > target) {
              cand = i;
              break;
            }
          }
        } else {
          cand = rng() % n;
        }
        double potential = 0;
        for (size_t i = 0; i < n; ++i) potential += std::min(d2[i], sq_dist(x_[i], x_[cand]));
        if (potential < best_potential) {
          best_potential = potential;
          best = cand;
        }
      }
      centers.push_back(x_[best]);
      for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x_[i], x_[best]));
    }
    return centers;
  }

  void assign(Run &r) const {
    for (size_t i = 0; i < x_.size(); ++i) r.labels[i] = kmeans_assign(x_[i], r.centroids);
  }

  bool has_empty(const Run &r) const {
    std::vector<size_t> sizes(c_.k, 0);
    for (size_t l : r.labels) ++sizes[l];
    return std::count(sizes.begin(), sizes.end(), 0) > 0;
  }

  // Moves the point farthest from its centroid into each empty cluster.
  void repair_empty(Run &r) const {
    std::vector<size_t> sizes(c_.k, 0);
    for (size_t l : r.labels) ++sizes[l];
    for (size_t k = 0; k < c_.k; ++k) {
      if (sizes[k] != 0) continue;
      size_t far = x_.size();
      double far_d = -1;
      for (size_t i = 0; i < x_.size(); ++i) {
        if (sizes[r.labels[i]] < 2) continue;
        double d = sq_dist(x_[i], r.centroids[r.labels[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == x_.size()) continue;  // unreachable while n >= k
      --sizes[r.labels[far]];
      r.labels[far] = k;
      sizes[k] = 1;
      r.centroids[k] = x_[far];
    }
  }

  void update(Run &r) const {
    std::vector<Point> sums(c_.k, Point(dim_, 0.0));
    std::vector<size_t> sizes(c_.k, 0);
    for (size_t i = 0; i < x_.size(); ++i) {
      auto &s = sums[r.labels[i]];
      for (size_t d = 0; d < dim_; ++d) s[d] += x_[i][d];
      ++sizes[r.labels[i]];
    }
    for (size_t k = 0; k < c_.k; ++k) {
      if (sizes[k] == 0) continue;
      auto &s = sums[k];
      if (c_.normalize) {
        double norm = 0;
        for (double v : s) norm += v * v;
        norm = std::sqrt(norm);
        // Antipodal members cancel out; keep the previous direction.
        if (norm == 0) continue;
        for (double &v : s) v /= norm;
      } else {
        for (double &v : s) v /= static_cast<double>(sizes[k]);
      }
      r.centroids[k] = s;
    }
  }

  double cost(const Run &r) const {
    double total = 0;
    for (size_t i = 0; i < x_.size(); ++i) total += sq_dist(x_[i], r.centroids[r.labels[i]]);
    return total;
  }

  const std::vector<Point> &x_;
  const ClusteringConfig &c_;
  size_t dim_;
};

}  // namespace

void validate(const ClusteringConfig &c) {
  if (c.k == 0) throw Error(ErrorCode::kConfig, "k must be positive", "k");
  if (c.max_iterations == 0) {
    throw Error(ErrorCode::kConfig, "max_iterations must be positive", "max_iterations");
  }
  if (!(c.tolerance >= 0)) throw Error(ErrorCode::kConfig, "tolerance must be >= 0", "tolerance");
  if (c.init != "seeded_plusplus") {
    throw Error(ErrorCode::kConfig, "unknown init '" + c.init + "'", "init");
  }
  if (c.n_restarts == 0) throw Error(ErrorCode::kConfig, "n_restarts must be positive", "n_restarts");
}

std::vector<MaskEmbedding> normalize_embeddings(std::vector<MaskEmbedding> embeddings) {
  for (auto &e : embeddings) {
    double norm = 0;
    for (double v : e.vector) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0) || !std::isfinite(norm)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "embedding of " + e.instance_id + " cannot be normalized (norm " +
                      format_double(norm) + ")",
                  "instance_id");
    }
    for (double &v : e.vector) v /= norm;
  }
  return embeddings;
}

ClusteringResult kmeans_fit(std::span<const MaskEmbedding> embeddings, const ClusteringConfig &config) {
  validate(config);
  if (embeddings.size() < config.k) {
    throw Error(ErrorCode::kInvalidArgument,
                "k-means with k=" + std::to_string(config.k) + " needs at least that many points, got " +
                    std::to_string(embeddings.size()),
                "k");
  }
  std::vector<MaskEmbedding> sorted(embeddings.begin(), embeddings.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const MaskEmbedding &a, const MaskEmbedding &b) { return a.instance_id < b.instance_id; });
  for (size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].instance_id == sorted[i - 1].instance_id) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate instance " + sorted[i].instance_id,
                  "instance_id");
    }
  }
  const size_t dim = sorted.front().vector.size();
  for (const auto &e : sorted) {
    if (e.vector.size() != dim || dim == 0) {
      throw Error(ErrorCode::kInvalidArgument, "embedding of " + e.instance_id + " has dimension " +
                                                   std::to_string(e.vector.size()) + ", expected " +
                                                   std::to_string(dim),
                  "vector");
    }
  }
  if (config.normalize) sorted = normalize_embeddings(std::move(sorted));
  std::vector<Point> points;
  points.reserve(sorted.size());
  for (auto &e : sorted) points.push_back(std::move(e.vector));

  Fitter fitter(points, config);
  Run best;
  for (size_t r = 0; r < config.n_restarts; ++r) {
    Run run = fitter.run(fnv1a64("restart" + std::to_string(r), config.seed));
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }

  ClusteringResult out;
  out.config = config;
  for (size_t i = 0; i < sorted.size(); ++i) out.assignments[sorted[i].instance_id] = best.labels[i];
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  out.iterations_run = best.iterations;
  out.inertia_trace = std::move(best.trace);
  return out;
}

size_t kmeans_assign(std::span<const double> point, std::span<const std::vector<double>> centroids) {
  if (centroids.empty()) throw Error(ErrorCode::kInvalidArgument, "no centroids", "centroids");
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < centroids.size(); ++k) {
    if (centroids[k].size() != point.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "point has dimension " + std::to_string(point.size()) + ", centroid " +
                      std::to_string(k) + " has " + std::to_string(centroids[k].size()),
                  "vector");
    }
    double d = sq_dist(point, centroids[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

json to_json(const ClusteringConfig &c) {
  ordered_json j;
  j["k"] = c.k;
  j["seed"] = c.seed;
  j["max_iterations"] = c.max_iterations;
  j["tolerance"] = c.tolerance;
  j["init"] = c.init;
  j["n_restarts"] = c.n_restarts;
  j["normalize"] = c.normalize;
  return json(j);
}

ClusteringConfig clustering_config_from_json(const json &j) {
  ClusteringConfig c;
  auto get_size = [&](const char *key, size_t &out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer() || j[key].get<long long>() < 0) {
      throw Error(ErrorCode::kConfig, std::string(key) + " must be a non-negative integer", key);
    }
    out = j[key].get<size_t>();
  };
  get_size("k", c.k);
  get_size("max_iterations", c.max_iterations);
  get_size("n_restarts", c.n_restarts);
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("tolerance")) c.tolerance = j["tolerance"].get<double>();
  if (j.contains("init")) c.init = j["init"].get<std::string>();
  if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
  validate(c);
  return c;
}

json to_json(const ClusteringResult &r) {
  ordered_json j;
  j["config"] = ordered_json(to_json(r.config));
  ordered_json a = ordered_json::object();
  for (const auto &[id, k] : r.assignments) a[id] = k;
  j["assignments"] = a;
  j["centroids"] = r.centroids;
  j["inertia"] = r.inertia;
  j["iterations_run"] = r.iterations_run;
  j["inertia_trace"] = r.inertia_trace;
  return json(j);
}

ClusteringResult clustering_result_from_json(const json &j) {
  ClusteringResult r;
  r.config = clustering_config_from_json(j.at("config"));
  for (const auto &[id, k] : j.at("assignments").items()) r.assignments[id] = k.get<size_t>();
  r.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  r.inertia = j.at("inertia").get<double>();
  r.iterations_run = j.at("iterations_run").get<size_t>();
  r.inertia_trace = j.value("inertia_trace", std::vector<double>{});
  return r;
}

}  // namespace histore
