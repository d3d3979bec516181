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


// Biasing: continued masked-LM training of a registered encoder on chunks
// of domain text, producing a new registered model with lineage.

#ifndef HISTORE_MLM_BIASER_H_
#define HISTORE_MLM_BIASER_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "histore/corpus.h"
#include "histore/encoder.h"
#include "histore/registry.h"

namespace histore {

// Fate of a selected token: replaced by the mask token, replaced by a random
// token, or left unchanged.
struct CorruptSplit {
  double mask = 0.8;
  double random = 0.1;
  double keep = 0.1;
};

struct BiasingConfig {
  std::string base_model_id;
  std::string output_model_id;  // defaults to "<base>-biased"
  // Unset means the size-dependent default, see default_learning_rate().
  std::optional<double> learning_rate;
  size_t epochs = 5;
  double masking_probability = 0.15;
  CorruptSplit corrupt_split;
  std::string corpus_ref;
  uint64_t seed = 0;
  size_t batch_size = 8;
  double weight_decay = 0.01;
};

// 5e-6 for large encoders (hidden size >= 1024), 5e-5 otherwise.
double default_learning_rate(size_t hidden_size);

void validate(const BiasingConfig &config);
json to_json(const BiasingConfig &config);
BiasingConfig biasing_config_from_json(const json &j);

struct MaskingWarning {
  std::string chunk_id;
  std::string message;
};

struct MaskedExampleStream {
  std::vector<MaskedExample> examples;
  std::vector<MaskingWarning> warnings;
  size_t maskable_tokens = 0;
  size_t selected_tokens = 0;
  size_t mask_replaced = 0;
  size_t random_replaced = 0;
  size_t kept = 0;
};

// Frames each chunk as CLS + text + SEP (cut to max_length) and selects each
// non-special token independently with masking_probability. The stream is a
// pure function of (chunks, tokenizer, config, seed).
MaskedExampleStream make_masked_examples(std::span<const BiasingChunk> chunks,
                                         const Tokenizer &tokenizer, size_t max_length,
                                         const BiasingConfig &config, uint64_t seed);

// Consecutive groups of batch_size examples, in stream order.
std::vector<MaskedBatch> make_batches(std::span<const MaskedExample> examples,
                                      size_t batch_size);

struct BiasingReport {
  BiasingConfig config;  // with the learning rate resolved
  OptimizerConfig optimizer;
  std::vector<double> losses;
  double final_loss = 0;
  std::string output_model_id;
  size_t examples = 0;
  size_t maskable_tokens = 0;
  size_t selected_tokens = 0;
  std::vector<MaskingWarning> warnings;
};

json to_json(const BiasingReport &r);

// Loads the base model, trains it on the masked chunks and registers the
// result. Nothing is registered when training fails.
BiasingReport run_biasing(ModelRegistry &registry, const BiasingConfig &config,
                          std::span<const BiasingChunk> chunks);

}  // namespace histore

#endif  // HISTORE_MLM_BIASER_H_
