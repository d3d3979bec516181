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


// BERT/RoBERTa masked-LM encoders evaluated with Eigen: forward pass,
// handwritten backward pass for MLM training, and safetensors checkpoints
// using the usual parameter names. Dropout is never applied.

#ifndef HISTORE_TRANSFORMER_H_
#define HISTORE_TRANSFORMER_H_

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "histore/encoder.h"

namespace histore {

enum class ModelFamily { kBert, kRoberta };

struct TransformerConfig {
  ModelFamily family = ModelFamily::kBert;
  size_t vocab_size = 0;
  size_t hidden_size = 32;
  size_t num_layers = 2;
  size_t num_heads = 4;
  size_t intermediate_size = 64;
  size_t max_position_embeddings = 512;
  size_t type_vocab_size = 2;
  double layer_norm_eps = 1e-12;
  TokenId pad_token_id = 0;
  double initializer_range = 0.02;

  // RoBERTa numbers positions from pad_token_id + 1.
  size_t position_offset() const {
    return family == ModelFamily::kRoberta ? static_cast<size_t>(pad_token_id) + 1 : 0;
  }
  size_t max_sequence_length() const { return max_position_embeddings - position_offset(); }
};

// Reads and writes the config.json layout of BERT/RoBERTa checkpoints.
TransformerConfig transformer_config_from_json(const json &j);
json to_json(const TransformerConfig &c);

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Linear weights are [out, in]; biases and norm parameters are 1 x n.
template <typename S>
struct TransformerLayer {
  Matrix<S> query_w, query_b, key_w, key_b, value_w, value_b;
  Matrix<S> attn_out_w, attn_out_b, attn_ln_g, attn_ln_b;
  Matrix<S> inter_w, inter_b, out_w, out_b, out_ln_g, out_ln_b;
};

template <typename S>
struct TransformerParams {
  Matrix<S> word, position, token_type, emb_ln_g, emb_ln_b;
  std::vector<TransformerLayer<S>> layers;
  // MLM head; the decoder weight is tied to `word`.
  Matrix<S> head_w, head_b, head_ln_g, head_ln_b, decoder_b;
};

// Every tensor with its checkpoint name, in a fixed order.
template <typename P>
auto named_tensors(P &p, ModelFamily family) {
  using M = std::remove_pointer_t<decltype(&p.word)>;
  std::vector<std::pair<std::string, M *>> out;
  const std::string base = family == ModelFamily::kBert ? "bert." : "roberta.";
  const std::string e = base + "embeddings.";
  out.emplace_back(e + "word_embeddings.weight", &p.word);
  out.emplace_back(e + "position_embeddings.weight", &p.position);
  out.emplace_back(e + "token_type_embeddings.weight", &p.token_type);
  out.emplace_back(e + "LayerNorm.weight", &p.emb_ln_g);
  out.emplace_back(e + "LayerNorm.bias", &p.emb_ln_b);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    auto &l = p.layers[i];
    const std::string n = base + "encoder.layer." + std::to_string(i) + ".";
    out.emplace_back(n + "attention.self.query.weight", &l.query_w);
    out.emplace_back(n + "attention.self.query.bias", &l.query_b);
    out.emplace_back(n + "attention.self.key.weight", &l.key_w);
    out.emplace_back(n + "attention.self.key.bias", &l.key_b);
    out.emplace_back(n + "attention.self.value.weight", &l.value_w);
    out.emplace_back(n + "attention.self.value.bias", &l.value_b);
    out.emplace_back(n + "attention.output.dense.weight", &l.attn_out_w);
    out.emplace_back(n + "attention.output.dense.bias", &l.attn_out_b);
    out.emplace_back(n + "attention.output.LayerNorm.weight", &l.attn_ln_g);
    out.emplace_back(n + "attention.output.LayerNorm.bias", &l.attn_ln_b);
    out.emplace_back(n + "intermediate.dense.weight", &l.inter_w);
    out.emplace_back(n + "intermediate.dense.bias", &l.inter_b);
    out.emplace_back(n + "output.dense.weight", &l.out_w);
    out.emplace_back(n + "output.dense.bias", &l.out_b);
    out.emplace_back(n + "output.LayerNorm.weight", &l.out_ln_g);
    out.emplace_back(n + "output.LayerNorm.bias", &l.out_ln_b);
  }
  if (family == ModelFamily::kBert) {
    out.emplace_back("cls.predictions.transform.dense.weight", &p.head_w);
    out.emplace_back("cls.predictions.transform.dense.bias", &p.head_b);
    out.emplace_back("cls.predictions.transform.LayerNorm.weight", &p.head_ln_g);
    out.emplace_back("cls.predictions.transform.LayerNorm.bias", &p.head_ln_b);
    out.emplace_back("cls.predictions.bias", &p.decoder_b);
  } else {
    out.emplace_back("lm_head.dense.weight", &p.head_w);
    out.emplace_back("lm_head.dense.bias", &p.head_b);
    out.emplace_back("lm_head.layer_norm.weight", &p.head_ln_g);
    out.emplace_back("lm_head.layer_norm.bias", &p.head_ln_b);
    out.emplace_back("lm_head.bias", &p.decoder_b);
  }
  return out;
}

// Biases and normalization parameters are exempt from weight decay.
bool is_no_decay_tensor(std::string_view name);

template <typename S>
class TransformerModel {
 public:
  // Weights and biases zero, LayerNorm gains one.
  explicit TransformerModel(TransformerConfig config);

  // Normal(0, initializer_range) weights, zero biases, unit norm gains.
  void init_random(uint64_t seed);

  const TransformerConfig &config() const { return config_; }
  TransformerParams<S> &params() { return params_; }
  const TransformerParams<S> &params() const { return params_; }
  // Same shapes, every entry zero; used for gradients and optimizer state.
  TransformerParams<S> zeros_like() const;

  // Final-layer hidden states, one row per token.
  Matrix<S> hidden_states(std::span<const TokenId> ids) const;
  // MLM logits for the given rows of hidden_states(ids).
  Matrix<S> mlm_logits(const Matrix<S> &hidden, std::span<const size_t> rows) const;

  // Sum of token cross-entropies over positions whose label is not
  // kIgnoreLabel, and the number of such positions. When grad is non-null,
  // the gradient of that sum is added into it.
  std::pair<double, size_t> mlm_loss(std::span<const TokenId> ids,
                                     std::span<const TokenId> labels,
                                     TransformerParams<S> *grad) const;

  template <typename T>
  TransformerModel<T> cast() const {
    TransformerModel<T> out(config_);
    auto src = named_tensors(params_, config_.family);
    auto dst = named_tensors(out.params(), config_.family);
    for (size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
    return out;
  }

 private:
  void check_ids(std::span<const TokenId> ids) const;

  TransformerConfig config_;
  TransformerParams<S> params_;
};

// Reads model.safetensors (F32, F16 or BF16) with the names produced by
// named_tensors(); legacy gamma/beta names and checkpoints without the
// family prefix are accepted.
TransformerModel<float> load_safetensors(const std::filesystem::path &file,
                                         const TransformerConfig &config);
// Writes F32 tensors; the tied decoder weight is not duplicated.
void save_safetensors(const TransformerModel<float> &model, const std::filesystem::path &file);

class TransformerEncoder : public Encoder {
 public:
  TransformerEncoder(std::string model_id, TransformerModel<float> model,
                     std::unique_ptr<Tokenizer> tokenizer);

  // Reads config.json, model.safetensors and the tokenizer files.
  static std::unique_ptr<TransformerEncoder> load(const std::filesystem::path &dir,
                                                  const std::string &model_id = {});

  const EncoderHandle &handle() const override { return handle_; }
  const Tokenizer &tokenizer() const override { return *tokenizer_; }
  std::string backend() const override { return "transformer"; }

  TopKPrediction predict_masked_topk(const TokenizedPrompt &prompt, size_t k) const override;
  MaskEmbedding mask_hidden_state(const TokenizedPrompt &prompt) const override;
  TrainingTrace train_mlm(std::span<const MaskedBatch> batches,
                          const OptimizerConfig &config) override;
  void save(const std::filesystem::path &dir) const override;
  void set_model_id(std::string model_id) override { handle_.model_id = std::move(model_id); }

  const TransformerModel<float> &model() const { return model_; }

 private:
  TransformerModel<float> model_;
  std::unique_ptr<Tokenizer> tokenizer_;
  EncoderHandle handle_;
};

// A randomly initialized BERT-family encoder whose WordPiece vocabulary is
// built from texts. config.family and config.vocab_size are overridden.
std::unique_ptr<TransformerEncoder> init_wordpiece_encoder(std::string model_id,
                                                           std::span<const std::string> texts,
                                                           size_t max_words,
                                                           TransformerConfig config,
                                                           uint64_t seed);

}  // namespace histore

#endif  // HISTORE_TRANSFORMER_H_
