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


// Scoring of unsupervised clusters against gold labels: accuracy-maximizing
// cluster-to-label alignment, binary metrics, and run comparisons.

#ifndef HISTORE_EVALUATOR_H_
#define HISTORE_EVALUATOR_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "histore/util.h"

namespace histore {

using Assignments = std::map<std::string, size_t>;    // instance_id -> cluster
using GoldLabels = std::map<std::string, std::string>;  // instance_id -> label

// Cluster -> label mapping that maximizes accuracy. Both permutations are
// tried for k == 2; larger k uses an optimal assignment on the count matrix.
// Throws kValidation when an instance lacks a gold label and
// kInvalidArgument when the number of distinct labels differs from k.
std::map<size_t, std::string> align_clusters(const Assignments &assignments, const GoldLabels &gold,
                                             size_t k);

// Maximum-weight perfect matching on a square matrix; returns the column for
// each row.
std::vector<size_t> max_weight_assignment(const std::vector<std::vector<double>> &weights);

struct BinaryCells {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  // Ratios whose denominator was zero and that were set to 0.
  std::vector<std::string> warnings;
};

// Throws kInvalidArgument when there are no instances.
Metrics compute_metrics(const BinaryCells &cells);

struct ConfusionMatrix {
  std::vector<std::string> labels;  // columns, sorted
  std::vector<std::vector<long>> counts;  // clusters x labels
  std::string positive_label;
  BinaryCells cells;
};

struct InstanceRecord {
  std::string instance_id;
  size_t cluster = 0;
  std::string predicted;
  std::string gold;
};

struct EvalReport {
  std::string run_id;
  std::string model_id;
  std::vector<std::string> templates;
  std::string positive_label;
  std::map<size_t, std::string> mapping;
  Metrics metrics;
  ConfusionMatrix confusion;
  std::vector<InstanceRecord> records;
};

// Aligns, fills the confusion matrix and computes metrics. Accuracy counts
// every instance; precision and recall treat positive_label as positive.
EvalReport evaluate(std::string run_id, std::string model_id, std::vector<std::string> templates,
                    const Assignments &assignments, const GoldLabels &gold, size_t k,
                    const std::string &positive_label);

// Recomputes metrics from the instance-level records alone.
Metrics metrics_from_records(std::span<const InstanceRecord> records,
                             const std::string &positive_label);

struct RunComparison {
  std::string run_a, run_b;
  // b minus a, per metric.
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  size_t both_correct = 0, only_a = 0, only_b = 0, neither = 0;
};

// Throws kValidation unless both reports cover the same instances.
RunComparison compare_runs(const EvalReport &a, const EvalReport &b);

// Aligned text table with one row per report, four decimals.
std::string format_metrics_table(std::span<const EvalReport> reports);

json to_json(const Metrics &m);
json to_json(const EvalReport &r);
EvalReport eval_report_from_json(const json &j);
json to_json(const RunComparison &c);

}  // namespace histore

#endif  // HISTORE_EVALUATOR_H_
