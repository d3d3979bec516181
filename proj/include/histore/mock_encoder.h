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


// Deterministic stand-in encoder. Hidden states come from a latent label
// per instance (one orthogonal basis vector per label) plus seeded Gaussian
// noise, or from label-independent noise; mask predictions come from a fixed
// logit table over a small word list.

#ifndef HISTORE_MOCK_ENCODER_H_
#define HISTORE_MOCK_ENCODER_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "histore/encoder.h"

namespace histore {

struct MockEncoderConfig {
  enum class Mode { kLabelKeyed, kRandom };

  std::string model_id = "mock";
  size_t hidden_size = 16;
  size_t max_sequence_length = 512;
  uint64_t seed = 0;
  double noise_sigma = 0.1;
  Mode mode = Mode::kLabelKeyed;
  // Label i maps to basis vector e_i.
  std::vector<std::string> labels;
  std::map<std::string, std::string> latent_labels;  // instance_id -> label
  std::vector<std::string> words;
  std::vector<double> logits;  // one per word
  std::map<std::string, std::vector<double>> label_logits;
};

json to_json(const MockEncoderConfig &c);
MockEncoderConfig mock_encoder_config_from_json(const json &j);

class MockEncoder : public Encoder {
 public:
  static constexpr const char *kConfigFile = "mock.json";

  explicit MockEncoder(MockEncoderConfig config);
  static std::unique_ptr<MockEncoder> load(const std::filesystem::path &dir,
                                           const std::string &model_id = {});

  const EncoderHandle &handle() const override { return handle_; }
  const Tokenizer &tokenizer() const override { return tokenizer_; }
  std::string backend() const override { return "mock"; }

  TopKPrediction predict_masked_topk(const TokenizedPrompt &prompt, size_t k) const override;
  MaskEmbedding mask_hidden_state(const TokenizedPrompt &prompt) const override;
  // The mock has no trainable parameters; always throws kUnsupported.
  TrainingTrace train_mlm(std::span<const MaskedBatch> batches,
                          const OptimizerConfig &config) override;
  void save(const std::filesystem::path &dir) const override;
  void set_model_id(std::string model_id) override;

  const MockEncoderConfig &config() const { return config_; }
  // Reseeds the noise, as pipelines do from their manifest's mock seed.
  void set_seed(uint64_t seed) { config_.seed = seed; }

 private:
  MockEncoderConfig config_;
  ByteTokenizer tokenizer_;
  EncoderHandle handle_;
  std::map<std::string, size_t> label_index_;
};

}  // namespace histore

#endif  // HISTORE_MOCK_ENCODER_H_
