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


#include <doctest.h>

#include <random>

#include "histore/error.h"
#include "histore/relation_clusterer.h"
#include "oracles.h"

using namespace histore;

namespace {

std::vector<MaskEmbedding> as_embeddings(const std::vector<std::vector<double>> &points) {
  std::vector<MaskEmbedding> out;
  for (size_t i = 0; i < points.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "i%03zu", i);
    out.push_back({id, "m", "P1", points[i]});
  }
  return out;
}

std::vector<size_t> labels_in_order(const ClusteringResult &r, size_t n) {
  std::vector<size_t> out;
  for (size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "i%03zu", i);
    out.push_back(r.assignments.at(id));
  }
  return out;
}

// Canonical form of a partition: each point's label renamed by first
// appearance.
std::vector<size_t> canonical(const std::vector<size_t> &labels) {
  std::map<size_t, size_t> rename;
  std::vector<size_t> out;
  for (size_t l : labels) out.push_back(rename.emplace(l, rename.size()).first->second);
  return out;
}

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

std::vector<std::vector<double>> random_vectors(std::mt19937_64 &rng, size_t n, size_t dim) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto &v : out)
    for (double &a : v) a = normal(rng);
  return out;
}

}  // namespace

TEST_CASE("normalization") {
  auto e = normalize_embeddings({{"a", "m", "t", {3, 4}}, {"b", "m", "t", {0.6, 0.8}}});
  CHECK(e[0].vector[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(e[0].vector[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::abs(e[1].vector[0] - 0.6) < 1e-15);
  try {
    normalize_embeddings({{"inst-7", "m", "t", {0, 0}}});
    FAIL("zero vector accepted");
  } catch (const Error &err) {
    CHECK(err.code() == ErrorCode::kInvalidArgument);
    CHECK(std::string(err.what()).find("inst-7") != std::string::npos);
  }
}

TEST_CASE("property: nearest centroid by distance is the most cosine-similar") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    size_t dim = 2 + rng() % 10, k = 2 + rng() % 4;
    auto points = normalize_embeddings(as_embeddings(random_vectors(rng, 1, dim)));
    auto cents = normalize_embeddings(as_embeddings(random_vectors(rng, k, dim)));
    std::vector<std::vector<double>> c;
    for (auto &e : cents) c.push_back(e.vector);
    size_t by_cos = 0;
    double best = -2;
    for (size_t j = 0; j < k; ++j) {
      double cos = std::inner_product(c[j].begin(), c[j].end(), points[0].vector.begin(), 0.0);
      if (cos > best) {
        best = cos;
        by_cos = j;
      }
    }
    CHECK(kmeans_assign(points[0].vector, c) == by_cos);
  }
}

TEST_CASE("two separable pairs form the two clusters") {
  auto pts = as_embeddings({{1, 0.05}, {0.05, 1}, {1, -0.05}, {-0.05, 1}});
  ClusteringConfig c;
  c.k = 2;
  auto r = kmeans_fit(pts, c);
  CHECK(r.assignments["i000"] == r.assignments["i002"]);
  CHECK(r.assignments["i001"] == r.assignments["i003"]);
  CHECK(r.assignments["i000"] != r.assignments["i001"]);
  for (const auto &cent : r.centroids) {
    CHECK(std::abs(std::hypot(cent[0], cent[1]) - 1) < 1e-12);
  }
}

TEST_CASE("k = 1 gives the normalized mean direction") {
  std::mt19937_64 rng(2);
  auto raw = random_vectors(rng, 9, 4);
  auto unit = normalize_embeddings(as_embeddings(raw));
  std::vector<double> mean(4, 0.0);
  for (const auto &e : unit)
    for (size_t d = 0; d < 4; ++d) mean[d] += e.vector[d];
  double norm = std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
  ClusteringConfig c;
  c.k = 1;
  auto r = kmeans_fit(as_embeddings(raw), c);
  for (size_t d = 0; d < 4; ++d) CHECK(std::abs(r.centroids[0][d] - mean[d] / norm) < 1e-12);
}

TEST_CASE("fit never beats the exhaustive optimum and reaches it when separated") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    auto random = normalize_embeddings(as_embeddings(random_vectors(rng, 8, 3)));
    std::vector<std::vector<double>> x;
    for (auto &e : random) x.push_back(e.vector);
    ClusteringConfig c;
    c.seed = trial;
    auto r = kmeans_fit(random, c);
    CHECK(r.inertia >= oracle::spherical_kmeans_optimum(x, 2) - 1e-9);

    auto sep = oracle::separated_points(rng, 8, 2, 5, M_PI / 3, 0.05);
    auto fit = kmeans_fit(as_embeddings(sep.points), c);
    CHECK(std::abs(fit.inertia - oracle::spherical_kmeans_optimum(sep.points, 2)) < 1e-9);
  }
}

TEST_CASE("out-of-sample assignment") {
  std::vector<std::vector<double>> c = {{1, 0}, {0, 1}, {-1, 0}};
  CHECK(kmeans_assign(std::vector<double>{0, 1}, c) == 1);
  CHECK(kmeans_assign(std::vector<double>{M_SQRT1_2, M_SQRT1_2}, c) == 0);
  CHECK(code_of([&] { kmeans_assign(std::vector<double>{1, 0, 0}, c); }) ==
        ErrorCode::kInvalidArgument);

  std::mt19937_64 rng(4);
  auto sep = oracle::separated_points(rng, 40, 3, 6, M_PI / 4, 0.2);
  ClusteringConfig cfg;
  cfg.k = 3;
  auto r = kmeans_fit(as_embeddings(sep.points), cfg);
  auto labels = labels_in_order(r, 40);
  for (size_t i = 0; i < 40; ++i) CHECK(kmeans_assign(sep.points[i], r.centroids) == labels[i]);
}

TEST_CASE("property: deterministic, monotone, order-independent") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    size_t n = 5 + rng() % 60, k = 1 + rng() % 4;
    auto pts = as_embeddings(random_vectors(rng, n, 2 + rng() % 6));
    ClusteringConfig c;
    c.k = k;
    c.seed = rng();
    auto a = kmeans_fit(pts, c);
    auto b = kmeans_fit(pts, c);
    CHECK(to_json(a).dump() == to_json(b).dump());
    for (size_t i = 1; i < a.inertia_trace.size(); ++i) {
      CHECK(a.inertia_trace[i] <= a.inertia_trace[i - 1]);
    }
    CHECK(a.inertia == a.inertia_trace.back());
    CHECK(a.assignments.size() == n);
    std::vector<size_t> sizes(k, 0);
    for (const auto &[id, l] : a.assignments) ++sizes.at(l);
    CHECK(std::count(sizes.begin(), sizes.end(), 0u) == 0);

    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto s = kmeans_fit(shuffled, c);
    CHECK(canonical(labels_in_order(s, n)) == canonical(labels_in_order(a, n)));
  }
}

TEST_CASE("empty clusters are reseeded") {
  // Duplicates force the seeding to pick coincident centers.
  auto pts = as_embeddings({{1, 0}, {1, 0}, {1, 0}, {0, 1}});
  ClusteringConfig c;
  c.k = 3;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    c.seed = seed;
    auto r = kmeans_fit(pts, c);
    std::vector<size_t> sizes(3, 0);
    for (const auto &[id, l] : r.assignments) ++sizes[l];
    CHECK(std::count(sizes.begin(), sizes.end(), 0u) == 0);
  }
}

TEST_CASE("restarts keep the best run") {
  std::mt19937_64 rng(6);
  auto pts = as_embeddings(random_vectors(rng, 60, 4));
  ClusteringConfig one;
  one.k = 4;
  one.seed = 9;
  auto many = one;
  many.n_restarts = 8;
  CHECK(kmeans_fit(pts, many).inertia <= kmeans_fit(pts, one).inertia);
}

TEST_CASE("configuration and input errors") {
  auto pts = as_embeddings({{1, 0}, {0, 1}});
  ClusteringConfig c;
  c.k = 3;
  CHECK(code_of([&] { kmeans_fit(pts, c); }) == ErrorCode::kInvalidArgument);
  c.k = 0;
  CHECK(code_of([&] { kmeans_fit(pts, c); }) == ErrorCode::kConfig);
  CHECK(code_of([] { clustering_config_from_json({{"tolerance", -1.0}}); }) == ErrorCode::kConfig);
  auto bad = as_embeddings({{1, 0}, {0, 1, 0}});
  c.k = 1;
  CHECK(code_of([&] { kmeans_fit(bad, c); }) == ErrorCode::kInvalidArgument);
  auto dup = as_embeddings({{1, 0}, {0, 1}});
  dup[1].instance_id = dup[0].instance_id;
  CHECK(code_of([&] { kmeans_fit(dup, c); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("results round-trip through JSON") {
  std::mt19937_64 rng(7);
  auto r = kmeans_fit(as_embeddings(random_vectors(rng, 20, 3)), ClusteringConfig{});
  auto back = clustering_result_from_json(to_json(r));
  CHECK(to_json(back).dump() == to_json(r).dump());
}
