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


#include "histore/mock_encoder.h"

#include <cmath>
#include <random>

#include "histore/error.h"

namespace histore {
namespace {

const char *mode_name(MockEncoderConfig::Mode m) {
  return m == MockEncoderConfig::Mode::kLabelKeyed ? "label_keyed" : "random";
}

void check_logits(const std::vector<double> &logits, size_t words, const std::string &what) {
  if (logits.size() != words) {
    throw Error(ErrorCode::kConfig,
                what + " has " + std::to_string(logits.size()) + " entries for " +
                    std::to_string(words) + " words",
                "logits");
  }
}

}  // namespace

json to_json(const MockEncoderConfig &c) {
  return {{"model_id", c.model_id},
          {"hidden_size", c.hidden_size},
          {"max_sequence_length", c.max_sequence_length},
          {"seed", c.seed},
          {"noise_sigma", c.noise_sigma},
          {"mode", mode_name(c.mode)},
          {"labels", c.labels},
          {"latent_labels", c.latent_labels},
          {"words", c.words},
          {"logits", c.logits},
          {"label_logits", c.label_logits}};
}

MockEncoderConfig mock_encoder_config_from_json(const json &j) {
  MockEncoderConfig c;
  c.model_id = j.value("model_id", c.model_id);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
  c.seed = j.value("seed", c.seed);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  std::string mode = j.value("mode", std::string("label_keyed"));
  if (mode == "label_keyed") {
    c.mode = MockEncoderConfig::Mode::kLabelKeyed;
  } else if (mode == "random") {
    c.mode = MockEncoderConfig::Mode::kRandom;
  } else {
    throw Error(ErrorCode::kConfig, "unknown mock mode " + mode, "mode");
  }
  c.labels = j.value("labels", c.labels);
  c.latent_labels = j.value("latent_labels", c.latent_labels);
  c.words = j.value("words", c.words);
  c.logits = j.value("logits", c.logits);
  c.label_logits = j.value("label_logits", c.label_logits);
  return c;
}

MockEncoder::MockEncoder(MockEncoderConfig config)
    : config_(std::move(config)), tokenizer_(config_.words) {
  if (config_.hidden_size == 0) throw Error(ErrorCode::kConfig, "hidden_size must be positive");
  if (config_.labels.size() > config_.hidden_size) {
    throw Error(ErrorCode::kConfig, "more labels than hidden dimensions", "labels");
  }
  if (!(config_.noise_sigma >= 0)) {
    throw Error(ErrorCode::kConfig, "noise_sigma must be non-negative", "noise_sigma");
  }
  for (size_t i = 0; i < config_.labels.size(); ++i) label_index_[config_.labels[i]] = i;
  for (const auto &[id, label] : config_.latent_labels) {
    if (!label_index_.count(label)) {
      throw Error(ErrorCode::kConfig, "instance " + id + " has undeclared label " + label,
                  "latent_labels");
    }
  }
  check_logits(config_.logits, config_.words.size(), "logits");
  for (const auto &[label, logits] : config_.label_logits) {
    check_logits(logits, config_.words.size(), "label_logits[" + label + "]");
  }
  handle_ = {config_.model_id,
             config_.hidden_size,
             config_.max_sequence_length,
             tokenizer_.specials().mask,
             tokenizer_.specials().sep,
             tokenizer_.vocab_size()};
}

std::unique_ptr<MockEncoder> MockEncoder::load(const std::filesystem::path &dir,
                                               const std::string &model_id) {
  auto config = mock_encoder_config_from_json(read_json(dir / kConfigFile));
  if (!model_id.empty()) config.model_id = model_id;
  return std::make_unique<MockEncoder>(std::move(config));
}

TopKPrediction MockEncoder::predict_masked_topk(const TokenizedPrompt &prompt, size_t k) const {
  check_prompt(prompt);
  const std::vector<double> *logits = &config_.logits;
  if (auto it = config_.latent_labels.find(prompt.instance_id);
      it != config_.latent_labels.end()) {
    if (auto l = config_.label_logits.find(it->second); l != config_.label_logits.end()) {
      logits = &l->second;
    }
  }
  std::vector<double> probs(tokenizer_.vocab_size(), 0.0);
  if (!logits->empty()) {
    double max = *std::max_element(logits->begin(), logits->end());
    double z = 0;
    for (double l : *logits) z += std::exp(l - max);
    for (size_t i = 0; i < logits->size(); ++i) {
      probs[ByteTokenizer::kFirstWord + i] = std::exp((*logits)[i] - max) / z;
    }
  }
  return top_k(probs, k, tokenizer_);
}

MaskEmbedding MockEncoder::mask_hidden_state(const TokenizedPrompt &prompt) const {
  check_prompt(prompt);
  MaskEmbedding e{prompt.instance_id, prompt.model_id, prompt.template_id,
                  std::vector<double>(config_.hidden_size, 0.0)};
  uint64_t seed = fnv1a64(config_.model_id + '\x1f' + prompt.instance_id + '\x1f' +
                              prompt.template_id,
                          config_.seed ^ 0xcbf29ce484222325ULL);
  std::mt19937_64 rng(seed);
  if (config_.mode == MockEncoderConfig::Mode::kRandom) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double &x : e.vector) x = normal(rng);
    return e;
  }
  auto it = config_.latent_labels.find(prompt.instance_id);
  if (it == config_.latent_labels.end()) {
    throw Error(ErrorCode::kNotFound, "no latent label for instance " + prompt.instance_id,
                "instance_id");
  }
  e.vector[label_index_.at(it->second)] = 1.0;
  if (config_.noise_sigma > 0) {
    std::normal_distribution<double> normal(0.0, config_.noise_sigma);
    for (double &x : e.vector) x += normal(rng);
  }
  return e;
}

TrainingTrace MockEncoder::train_mlm(std::span<const MaskedBatch>, const OptimizerConfig &) {
  throw Error(ErrorCode::kUnsupported,
              "the mock backend has no trainable parameters; bias a transformer model");
}

void MockEncoder::save(const std::filesystem::path &dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kConfigFile, to_json(config_).dump(1));
}

void MockEncoder::set_model_id(std::string model_id) {
  config_.model_id = model_id;
  handle_.model_id = std::move(model_id);
}

}  // namespace histore
