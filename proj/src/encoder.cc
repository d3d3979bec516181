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


#include "histore/encoder.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "histore/error.h"
#include "histore/mock_encoder.h"
#include "histore/transformer.h"
#include "unicode.h"

namespace histore {
namespace {

size_t count_occurrences(std::string_view text, std::string_view needle) {
  size_t n = 0;
  for (size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void check_utf8(std::string_view text) {
  for (const auto &cp : unicode::decode(text)) {
    if (cp.value == 0xFFFD && cp.length == 1) {
      size_t from = cp.offset >= 8 ? cp.offset - 8 : 0;
      throw Error(ErrorCode::kBackend,
                  "text is not valid UTF-8 near \"" + std::string(text.substr(from, 16)) + "\"",
                  "text");
    }
  }
}

}  // namespace

TokenizedPrompt Encoder::tokenize(std::string_view text, std::string instance_id,
                                  std::string template_id, bool truncated) const {
  const auto &h = handle();
  size_t masks = count_occurrences(text, h.mask_token);
  if (masks != 1) {
    throw Error(ErrorCode::kPromptShape,
                "prompt must contain exactly one " + h.mask_token + ", found " +
                    std::to_string(masks),
                "text");
  }
  check_utf8(text);
  const auto &tok = tokenizer();
  TokenizedPrompt p;
  p.token_ids.push_back(tok.specials().cls_id);
  auto body = tok.encode(text);
  p.token_ids.insert(p.token_ids.end(), body.begin(), body.end());
  size_t mask_ids = 0;
  for (size_t i = 0; i < p.token_ids.size(); ++i) {
    if (p.token_ids[i] == tok.specials().mask_id) {
      p.mask_index = i;
      ++mask_ids;
    }
  }
  if (mask_ids != 1) {
    throw Error(ErrorCode::kPromptShape,
                "prompt tokenizes to " + std::to_string(mask_ids) + " mask tokens", "text");
  }
  if (p.token_ids.size() > h.max_sequence_length) {
    throw Error(ErrorCode::kPromptShape,
                "prompt has " + std::to_string(p.token_ids.size()) + " tokens, model " +
                    h.model_id + " accepts " + std::to_string(h.max_sequence_length),
                "text");
  }
  p.truncated = truncated;
  p.instance_id = std::move(instance_id);
  p.template_id = std::move(template_id);
  p.model_id = h.model_id;
  return p;
}

size_t Encoder::count_tokens(std::string_view text) const {
  return 1 + tokenizer().encode(text).size();
}

void Encoder::check_prompt(const TokenizedPrompt &prompt) const {
  if (prompt.model_id != handle().model_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "prompt was tokenized for " + prompt.model_id + ", not " + handle().model_id,
                "model_id");
  }
  if (prompt.mask_index >= prompt.token_ids.size() ||
      prompt.token_ids[prompt.mask_index] != tokenizer().specials().mask_id) {
    throw Error(ErrorCode::kPromptShape, "mask_index does not point at the mask token");
  }
}

TopKPrediction top_k(std::span<const double> probs, size_t k, const Tokenizer &tokenizer) {
  if (k > probs.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k = " + std::to_string(k) + " exceeds the vocabulary size " +
                    std::to_string(probs.size()),
                "k");
  }
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(k), order.end(),
                    [&](TokenId a, TokenId b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  TopKPrediction out;
  for (size_t i = 0; i < k; ++i) {
    out.push_back({tokenizer.display_token(order[i]), order[i], probs[order[i]]});
  }
  return out;
}

std::unique_ptr<Encoder> load_encoder(const std::filesystem::path &dir,
                                      const std::string &model_id) {
  if (std::filesystem::exists(dir / MockEncoder::kConfigFile)) {
    return MockEncoder::load(dir, model_id);
  }
  if (std::filesystem::exists(dir / "config.json")) {
    return TransformerEncoder::load(dir, model_id);
  }
  throw Error(ErrorCode::kNotFound, "no encoder checkpoint in " + dir.string());
}

json to_json(const EncoderHandle &h) {
  return {{"model_id", h.model_id},
          {"hidden_size", h.hidden_size},
          {"max_sequence_length", h.max_sequence_length},
          {"mask_token", h.mask_token},
          {"separator_token", h.separator_token},
          {"vocabulary_size", h.vocabulary_size}};
}

json to_json(const TokenizedPrompt &p) {
  return {{"token_ids", p.token_ids},     {"mask_index", p.mask_index},
          {"truncated", p.truncated},     {"instance_id", p.instance_id},
          {"template_id", p.template_id}, {"model_id", p.model_id}};
}

json to_json(const TokenProbability &p) {
  return {{"token", p.token}, {"id", p.id}, {"probability", p.probability}};
}

json to_json(const MaskEmbedding &e, bool binary) {
  json j = {{"instance_id", e.instance_id},
            {"model_id", e.model_id},
            {"template_id", e.template_id}};
  if (binary) {
    std::string bytes(e.vector.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), e.vector.data(), bytes.size());
    j["vector_b64"] = base64_encode(bytes);
  } else {
    j["vector"] = e.vector;
  }
  return j;
}

MaskEmbedding mask_embedding_from_json(const json &j) {
  MaskEmbedding e;
  e.instance_id = j.at("instance_id").get<std::string>();
  e.model_id = j.at("model_id").get<std::string>();
  e.template_id = j.at("template_id").get<std::string>();
  if (j.contains("vector_b64")) {
    std::string bytes = base64_decode(j["vector_b64"].get<std::string>());
    if (bytes.size() % sizeof(double) != 0) {
      throw Error(ErrorCode::kValidation, "embedding payload is not a whole number of doubles",
                  "vector_b64");
    }
    e.vector.resize(bytes.size() / sizeof(double));
    std::memcpy(e.vector.data(), bytes.data(), bytes.size());
  } else {
    e.vector = j.at("vector").get<std::vector<double>>();
  }
  return e;
}

json to_json(const OptimizerConfig &c) {
  return {{"optimizer", "adamw"},          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},            {"beta1", c.beta1},
          {"beta2", c.beta2},              {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay}, {"schedule", "constant"}};
}

OptimizerConfig optimizer_config_from_json(const json &j) {
  OptimizerConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  return c;
}

}  // namespace histore
