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


// Unsupervised grouping of mask embeddings: K-means on unit-normalized
// vectors, where squared Euclidean distance is 2 - 2 * cosine.

#ifndef HISTORE_RELATION_CLUSTERER_H_
#define HISTORE_RELATION_CLUSTERER_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "histore/encoder.h"
#include "histore/util.h"

namespace histore {

struct ClusteringConfig {
  size_t k = 2;
  uint64_t seed = 0;
  size_t max_iterations = 300;
  double tolerance = 1e-6;
  std::string init = "seeded_plusplus";
  size_t n_restarts = 1;
  // Off gives plain Euclidean K-means on the raw vectors.
  bool normalize = true;
};

void validate(const ClusteringConfig &c);

struct ClusteringResult {
  ClusteringConfig config;
  std::map<std::string, size_t> assignments;
  std::vector<std::vector<double>> centroids;
  double inertia = 0;
  size_t iterations_run = 0;
  // Objective after every iteration of the winning restart.
  std::vector<double> inertia_trace;
};

// Throws kInvalidArgument naming the instance when a vector is zero or not
// finite.
std::vector<MaskEmbedding> normalize_embeddings(std::vector<MaskEmbedding> embeddings);

// Points are ordered by instance_id before seeding, so the partition does
// not depend on input order.
ClusteringResult kmeans_fit(std::span<const MaskEmbedding> embeddings, const ClusteringConfig &config);

// Nearest centroid by squared Euclidean distance, ties to the lowest id.
// The caller normalizes the point when the fit did.
size_t kmeans_assign(std::span<const double> point, std::span<const std::vector<double>> centroids);

json to_json(const ClusteringConfig &c);
ClusteringConfig clustering_config_from_json(const json &j);
json to_json(const ClusteringResult &r);
ClusteringResult clustering_result_from_json(const json &j);

}  // namespace histore

#endif  // HISTORE_RELATION_CLUSTERER_H_
