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


// Contract to a masked-LM encoder: prompt tokenization, top-k prediction at
// the mask, the final-layer hidden state at the mask, and MLM training.

#ifndef HISTORE_ENCODER_H_
#define HISTORE_ENCODER_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histore/tokenizer.h"
#include "histore/util.h"

namespace histore {

// Label value for positions that do not contribute to the MLM loss.
inline constexpr TokenId kIgnoreLabel = -100;

struct EncoderHandle {
  std::string model_id;
  size_t hidden_size = 0;
  size_t max_sequence_length = 0;
  std::string mask_token;
  std::string separator_token;
  size_t vocabulary_size = 0;
};

struct TokenizedPrompt {
  std::vector<TokenId> token_ids;
  size_t mask_index = 0;
  bool truncated = false;
  std::string instance_id;
  std::string template_id;
  std::string model_id;
};

struct TokenProbability {
  std::string token;
  TokenId id = 0;
  double probability = 0;
};
using TopKPrediction = std::vector<TokenProbability>;

struct MaskEmbedding {
  std::string instance_id;
  std::string model_id;
  std::string template_id;
  std::vector<double> vector;
};

struct MaskedExample {
  std::string example_id;
  std::vector<TokenId> input_ids;
  std::vector<TokenId> labels;  // kIgnoreLabel except at selected positions
};

struct MaskedBatch {
  std::string batch_id;
  std::vector<MaskedExample> examples;
};

// AdamW with a constant learning rate. Weight decay skips biases and
// normalization parameters.
struct OptimizerConfig {
  double learning_rate = 5e-5;
  size_t epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.01;
};

struct TrainingTrace {
  std::vector<double> epoch_losses;  // mean batch loss per epoch
  std::vector<double> step_losses;
};

class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderHandle &handle() const = 0;
  virtual const Tokenizer &tokenizer() const = 0;
  virtual std::string backend() const = 0;

  // Frames the text with the sequence-start token; the text carries its own
  // mask and trailing separator strings.
  TokenizedPrompt tokenize(std::string_view text, std::string instance_id = {},
                           std::string template_id = {}, bool truncated = false) const;

  // Token count of text as tokenize() would frame it.
  size_t count_tokens(std::string_view text) const;

  virtual TopKPrediction predict_masked_topk(const TokenizedPrompt &prompt, size_t k) const = 0;
  virtual MaskEmbedding mask_hidden_state(const TokenizedPrompt &prompt) const = 0;
  virtual TrainingTrace train_mlm(std::span<const MaskedBatch> batches,
                                  const OptimizerConfig &config) = 0;

  // Writes everything load_encoder() needs into dir.
  virtual void save(const std::filesystem::path &dir) const = 0;

  // Renames the model, as done when a trained copy is registered.
  virtual void set_model_id(std::string model_id) = 0;

 protected:
  void check_prompt(const TokenizedPrompt &prompt) const;
};

// Loads a saved encoder. model_id overrides the id stored with it.
std::unique_ptr<Encoder> load_encoder(const std::filesystem::path &dir,
                                      const std::string &model_id = {});

// Ranks probs and keeps the top k, ties broken by lower token id.
TopKPrediction top_k(std::span<const double> probs, size_t k, const Tokenizer &tokenizer);

json to_json(const EncoderHandle &h);
json to_json(const TokenizedPrompt &p);
json to_json(const TokenProbability &p);
json to_json(const MaskEmbedding &e, bool binary = false);
MaskEmbedding mask_embedding_from_json(const json &j);
json to_json(const OptimizerConfig &c);
OptimizerConfig optimizer_config_from_json(const json &j);

}  // namespace histore

#endif  // HISTORE_ENCODER_H_
