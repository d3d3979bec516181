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


#include "histore/evaluator.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>

#include "histore/error.h"

namespace histore {
namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::vector<size_t> max_weight_assignment(const std::vector<std::vector<double>> &weights) {
  const size_t n = weights.size();
  if (n == 0) return {};
  double top = -std::numeric_limits<double>::infinity();
  for (const auto &row : weights) {
    if (row.size() != n) throw Error(ErrorCode::kInvalidArgument, "weight matrix must be square");
    for (double w : row) top = std::max(top, w);
  }
  // Shortest augmenting paths with potentials on cost = top - weight, rows
  // and columns 1-based with column 0 as the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<size_t> row_of(n + 1, 0), way(n + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      size_t i0 = row_of[j0], j1 = 0;
      double delta = inf;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = (top - weights[i0 - 1][j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<size_t> col_of(n);
  for (size_t j = 1; j <= n; ++j) col_of[row_of[j] - 1] = j - 1;
  return col_of;
}

std::map<size_t, std::string> align_clusters(const Assignments &assignments, const GoldLabels &gold,
                                             size_t k) {
  std::set<std::string> label_set;
  for (const auto &[id, cluster] : assignments) {
    auto it = gold.find(id);
    if (it == gold.end()) {
      throw Error(ErrorCode::kValidation, "instance " + id + " has no gold label", "instance_id");
    }
    if (cluster >= k) {
      throw Error(ErrorCode::kInvalidArgument,
                  "instance " + id + " is in cluster " + std::to_string(cluster) + " but k is " +
                      std::to_string(k),
                  "k");
    }
    label_set.insert(it->second);
  }
  if (label_set.size() != k) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(label_set.size()) + " distinct gold labels for k=" + std::to_string(k),
                "k");
  }
  std::vector<std::string> labels(label_set.begin(), label_set.end());
  std::vector<std::vector<double>> counts(k, std::vector<double>(k, 0.0));
  for (const auto &[id, cluster] : assignments) {
    size_t col = std::lower_bound(labels.begin(), labels.end(), gold.at(id)) - labels.begin();
    counts[cluster][col] += 1;
  }
  std::vector<size_t> col_of(k);
  if (k == 2) {
    double straight = counts[0][0] + counts[1][1], crossed = counts[0][1] + counts[1][0];
    col_of = crossed > straight ? std::vector<size_t>{1, 0} : std::vector<size_t>{0, 1};
  } else {
    col_of = max_weight_assignment(counts);
  }
  std::map<size_t, std::string> mapping;
  for (size_t c = 0; c < k; ++c) mapping[c] = labels[col_of[c]];
  return mapping;
}

Metrics compute_metrics(const BinaryCells &c) {
  if (c.total() <= 0) throw Error(ErrorCode::kInvalidArgument, "no instances to evaluate");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp == 0) {
    m.warnings.push_back("precision undefined (no positive predictions), set to 0");
  } else {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.warnings.push_back("recall undefined (no positive gold instances), set to 0");
  } else {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall == 0) {
    m.warnings.push_back("f1 undefined (precision and recall are 0), set to 0");
  } else {
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

Metrics metrics_from_records(std::span<const InstanceRecord> records,
                             const std::string &positive) {
  BinaryCells c;
  long correct = 0;
  for (const auto &r : records) {
    bool pred = r.predicted == positive, truth = r.gold == positive;
    c.tp += pred && truth;
    c.fp += pred && !truth;
    c.fn += !pred && truth;
    c.tn += !pred && !truth;
    correct += r.predicted == r.gold;
  }
  Metrics m = compute_metrics(c);
  // With more than two labels a wrong non-positive prediction is still a
  // true negative for the positive class, so accuracy comes from the labels.
  m.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return m;
}

EvalReport evaluate(std::string run_id, std::string model_id, std::vector<std::string> templates,
                    const Assignments &assignments, const GoldLabels &gold, size_t k,
                    const std::string &positive_label) {
  EvalReport r;
  r.run_id = std::move(run_id);
  r.model_id = std::move(model_id);
  r.templates = std::move(templates);
  r.positive_label = positive_label;
  r.mapping = align_clusters(assignments, gold, k);

  std::set<std::string> label_set;
  for (const auto &[id, label] : r.mapping) label_set.insert(label);
  if (!label_set.count(positive_label)) {
    throw Error(ErrorCode::kConfig, "positive label '" + positive_label + "' is not a gold label",
                "positive_label");
  }
  auto &cm = r.confusion;
  cm.labels.assign(label_set.begin(), label_set.end());
  cm.positive_label = positive_label;
  cm.counts.assign(k, std::vector<long>(cm.labels.size(), 0));
  for (const auto &[id, cluster] : assignments) {
    const auto &g = gold.at(id);
    size_t col = std::lower_bound(cm.labels.begin(), cm.labels.end(), g) - cm.labels.begin();
    ++cm.counts[cluster][col];
    r.records.push_back({id, cluster, r.mapping.at(cluster), g});
    bool pred = r.mapping.at(cluster) == positive_label, truth = g == positive_label;
    cm.cells.tp += pred && truth;
    cm.cells.fp += pred && !truth;
    cm.cells.fn += !pred && truth;
    cm.cells.tn += !pred && !truth;
  }
  r.metrics = metrics_from_records(r.records, positive_label);
  return r;
}

RunComparison compare_runs(const EvalReport &a, const EvalReport &b) {
  if (a.records.size() != b.records.size()) {
    throw Error(ErrorCode::kValidation, "runs " + a.run_id + " and " + b.run_id +
                                            " cover different instance sets",
                "run_id");
  }
  std::map<std::string, const InstanceRecord *> in_b;
  for (const auto &r : b.records) in_b[r.instance_id] = &r;
  RunComparison c;
  c.run_a = a.run_id;
  c.run_b = b.run_id;
  c.accuracy = b.metrics.accuracy - a.metrics.accuracy;
  c.precision = b.metrics.precision - a.metrics.precision;
  c.recall = b.metrics.recall - a.metrics.recall;
  c.f1 = b.metrics.f1 - a.metrics.f1;
  for (const auto &ra : a.records) {
    auto it = in_b.find(ra.instance_id);
    if (it == in_b.end()) {
      throw Error(ErrorCode::kValidation,
                  "instance " + ra.instance_id + " is missing from run " + b.run_id, "run_id");
    }
    bool ca = ra.predicted == ra.gold, cb = it->second->predicted == it->second->gold;
    c.both_correct += ca && cb;
    c.only_a += ca && !cb;
    c.only_b += !ca && cb;
    c.neither += !ca && !cb;
  }
  return c;
}

std::string format_metrics_table(std::span<const EvalReport> reports) {
  size_t width = 5;
  for (const auto &r : reports) width = std::max(width, r.run_id.size());
  auto pad = [](std::string s, size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("Model", width) + "  Accuracy  Precision  Recall  F1 Score\n";
  for (const auto &r : reports) {
    out += pad(r.run_id, width) + "  " + pad(fixed4(r.metrics.accuracy), 8) + "  " +
           pad(fixed4(r.metrics.precision), 9) + "  " + pad(fixed4(r.metrics.recall), 6) + "  " +
           fixed4(r.metrics.f1) + "\n";
  }
  return out;
}

json to_json(const Metrics &m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["warnings"] = m.warnings;
  return json(j);
}

json to_json(const EvalReport &r) {
  ordered_json j;
  j["run_id"] = r.run_id;
  j["model_id"] = r.model_id;
  j["templates"] = r.templates;
  j["positive_label"] = r.positive_label;
  ordered_json mapping = ordered_json::object();
  for (const auto &[c, l] : r.mapping) mapping[std::to_string(c)] = l;
  j["mapping"] = mapping;
  j["metrics"] = ordered_json(to_json(r.metrics));
  ordered_json cm;
  cm["labels"] = r.confusion.labels;
  cm["counts"] = r.confusion.counts;
  cm["positive_label"] = r.confusion.positive_label;
  cm["tp"] = r.confusion.cells.tp;
  cm["fp"] = r.confusion.cells.fp;
  cm["fn"] = r.confusion.cells.fn;
  cm["tn"] = r.confusion.cells.tn;
  j["confusion"] = cm;
  ordered_json records = ordered_json::array();
  for (const auto &x : r.records) {
    records.push_back(ordered_json{{"instance_id", x.instance_id},
                                   {"cluster", x.cluster},
                                   {"predicted", x.predicted},
                                   {"gold", x.gold}});
  }
  j["records"] = records;
  return json(j);
}

EvalReport eval_report_from_json(const json &j) {
  EvalReport r;
  r.run_id = j.at("run_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.templates = j.at("templates").get<std::vector<std::string>>();
  r.positive_label = j.at("positive_label").get<std::string>();
  for (const auto &[c, l] : j.at("mapping").items()) r.mapping[std::stoul(c)] = l.get<std::string>();
  const auto &m = j.at("metrics");
  r.metrics.accuracy = m.at("accuracy").get<double>();
  r.metrics.precision = m.at("precision").get<double>();
  r.metrics.recall = m.at("recall").get<double>();
  r.metrics.f1 = m.at("f1").get<double>();
  r.metrics.warnings = m.value("warnings", std::vector<std::string>{});
  const auto &cm = j.at("confusion");
  r.confusion.labels = cm.at("labels").get<std::vector<std::string>>();
  r.confusion.counts = cm.at("counts").get<std::vector<std::vector<long>>>();
  r.confusion.positive_label = cm.at("positive_label").get<std::string>();
  r.confusion.cells = {cm.at("tp").get<long>(), cm.at("fp").get<long>(), cm.at("fn").get<long>(),
                       cm.at("tn").get<long>()};
  for (const auto &x : j.at("records")) {
    r.records.push_back({x.at("instance_id").get<std::string>(), x.at("cluster").get<size_t>(),
                         x.at("predicted").get<std::string>(), x.at("gold").get<std::string>()});
  }
  return r;
}

json to_json(const RunComparison &c) {
  ordered_json j;
  j["run_a"] = c.run_a;
  j["run_b"] = c.run_b;
  j["accuracy_delta"] = c.accuracy;
  j["precision_delta"] = c.precision;
  j["recall_delta"] = c.recall;
  j["f1_delta"] = c.f1;
  j["both_correct"] = c.both_correct;
  j["only_a"] = c.only_a;
  j["only_b"] = c.only_b;
  j["neither"] = c.neither;
  return json(j);
}

}  // namespace histore
