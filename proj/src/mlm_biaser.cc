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


#include "histore/mlm_biaser.h"

#include <cmath>
#include <random>

#include "histore/error.h"

namespace histore {

double default_learning_rate(size_t hidden_size) { return hidden_size >= 1024 ? 5e-6 : 5e-5; }

void validate(const BiasingConfig &c) {
  if (c.base_model_id.empty()) {
    throw Error(ErrorCode::kConfig, "base_model is required", "base_model");
  }
  if (c.epochs == 0) throw Error(ErrorCode::kConfig, "epochs must be positive", "epochs");
  if (c.learning_rate && !(*c.learning_rate > 0)) {
    throw Error(ErrorCode::kConfig, "learning_rate must be positive", "learning_rate");
  }
  if (!(c.masking_probability > 0 && c.masking_probability < 1)) {
    throw Error(ErrorCode::kConfig, "masking_probability must lie in (0, 1)",
                "masking_probability");
  }
  const auto &s = c.corrupt_split;
  if (s.mask < 0 || s.random < 0 || s.keep < 0 ||
      std::abs(s.mask + s.random + s.keep - 1.0) > 1e-9) {
    throw Error(ErrorCode::kConfig, "corrupt_split must be non-negative and sum to 1",
                "corrupt_split");
  }
  if (c.batch_size == 0) throw Error(ErrorCode::kConfig, "batch_size must be positive", "batch_size");
  if (c.weight_decay < 0) {
    throw Error(ErrorCode::kConfig, "weight_decay must be non-negative", "weight_decay");
  }
}

json to_json(const BiasingConfig &c) {
  return {{"base_model", c.base_model_id},
          {"output_model", c.output_model_id},
          {"learning_rate", c.learning_rate ? json(*c.learning_rate) : json(nullptr)},
          {"epochs", c.epochs},
          {"masking_probability", c.masking_probability},
          {"corrupt_split", {c.corrupt_split.mask, c.corrupt_split.random, c.corrupt_split.keep}},
          {"corpus", c.corpus_ref},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay}};
}

BiasingConfig biasing_config_from_json(const json &j) {
  BiasingConfig c;
  c.base_model_id = j.value("base_model", std::string());
  c.output_model_id = j.value("output_model", std::string());
  if (j.contains("learning_rate") && !j["learning_rate"].is_null()) {
    c.learning_rate = j["learning_rate"].get<double>();
  }
  if (j.contains("epochs")) {
    if (!j["epochs"].is_number_integer() || j["epochs"].get<long long>() < 0) {
      throw Error(ErrorCode::kConfig, "epochs must be a non-negative integer", "epochs");
    }
    c.epochs = j["epochs"].get<size_t>();
  }
  c.masking_probability = j.value("masking_probability", c.masking_probability);
  if (j.contains("corrupt_split")) {
    auto s = j["corrupt_split"].get<std::vector<double>>();
    if (s.size() != 3) {
      throw Error(ErrorCode::kConfig, "corrupt_split needs three fractions", "corrupt_split");
    }
    c.corrupt_split = {s[0], s[1], s[2]};
  }
  c.corpus_ref = j.value("corpus", std::string());
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  return c;
}

MaskedExampleStream make_masked_examples(std::span<const BiasingChunk> chunks,
                                         const Tokenizer &tokenizer, size_t max_length,
                                         const BiasingConfig &config, uint64_t seed) {
  validate(config);
  if (max_length < 3) throw Error(ErrorCode::kInvalidArgument, "max_length must be at least 3");
  const auto &sp = tokenizer.specials();
  std::vector<TokenId> replacements;
  for (size_t id = 0; id < tokenizer.vocab_size(); ++id) {
    if (!tokenizer.is_special(static_cast<TokenId>(id))) {
      replacements.push_back(static_cast<TokenId>(id));
    }
  }
  const double p = config.masking_probability;
  const double mask_cut = config.corrupt_split.mask;
  const double random_cut = mask_cut + config.corrupt_split.random;

  MaskedExampleStream out;
  for (const auto &chunk : chunks) {
    std::vector<TokenId> ids = {sp.cls_id};
    auto body = tokenizer.encode(chunk.text);
    if (body.size() + 2 > max_length) {
      body.resize(max_length - 2);
      out.warnings.push_back({chunk.chunk_id, "cut to " + std::to_string(max_length) + " tokens"});
    }
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(sp.sep_id);

    size_t maskable = 0;
    for (TokenId id : ids) maskable += tokenizer.is_special(id) ? 0 : 1;
    if (maskable == 0) {
      out.warnings.push_back({chunk.chunk_id, "no maskable tokens; chunk skipped"});
      continue;
    }
    out.maskable_tokens += maskable;

    // Seeded per chunk so one chunk's masks do not depend on its neighbours.
    std::mt19937_64 rng(fnv1a64(chunk.chunk_id, seed ^ 0x9e3779b97f4a7c15ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<size_t> pick(0, replacements.size() - 1);
    MaskedExample ex{chunk.chunk_id, ids, std::vector<TokenId>(ids.size(), kIgnoreLabel)};
    for (size_t i = 0; i < ids.size(); ++i) {
      if (tokenizer.is_special(ids[i])) continue;
      if (unit(rng) >= p) continue;
      ex.labels[i] = ids[i];
      ++out.selected_tokens;
      double r = unit(rng);
      if (r < mask_cut) {
        ex.input_ids[i] = sp.mask_id;
        ++out.mask_replaced;
      } else if (r < random_cut) {
        ex.input_ids[i] = replacements[pick(rng)];
        ++out.random_replaced;
      } else {
        ++out.kept;
      }
    }
    out.examples.push_back(std::move(ex));
  }
  return out;
}

std::vector<MaskedBatch> make_batches(std::span<const MaskedExample> examples,
                                      size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  std::vector<MaskedBatch> batches;
  for (size_t i = 0; i < examples.size(); i += batch_size) {
    char id[32];
    std::snprintf(id, sizeof(id), "b%05zu", batches.size());
    MaskedBatch b{id, {}};
    for (size_t j = i; j < std::min(examples.size(), i + batch_size); ++j) {
      b.examples.push_back(examples[j]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

json to_json(const BiasingReport &r) {
  json warnings = json::array();
  for (const auto &w : r.warnings) warnings.push_back({{"chunk_id", w.chunk_id}, {"message", w.message}});
  return {{"config", to_json(r.config)},
          {"optimizer", to_json(r.optimizer)},
          {"losses", r.losses},
          {"final_loss", r.final_loss},
          {"output_model_id", r.output_model_id},
          {"examples", r.examples},
          {"maskable_tokens", r.maskable_tokens},
          {"selected_tokens", r.selected_tokens},
          {"warnings", warnings}};
}

BiasingReport run_biasing(ModelRegistry &registry, const BiasingConfig &input,
                          std::span<const BiasingChunk> chunks) {
  validate(input);
  BiasingConfig config = input;
  if (config.output_model_id.empty()) config.output_model_id = config.base_model_id + "-biased";
  validate_model_id(config.output_model_id);
  if (registry.contains(config.output_model_id)) {
    throw Error(ErrorCode::kAlreadyExists,
                "model " + config.output_model_id + " already registered", "output_model");
  }
  auto encoder = registry.load(config.base_model_id);
  if (!config.learning_rate) {
    config.learning_rate = default_learning_rate(encoder->handle().hidden_size);
  }

  auto stream = make_masked_examples(chunks, encoder->tokenizer(),
                                     encoder->handle().max_sequence_length, config, config.seed);
  if (stream.selected_tokens == 0) {
    throw Error(ErrorCode::kInvalidArgument, "the biasing corpus yields no masked tokens",
                "corpus");
  }
  auto batches = make_batches(stream.examples, config.batch_size);

  OptimizerConfig opt;
  opt.learning_rate = *config.learning_rate;
  opt.epochs = config.epochs;
  opt.weight_decay = config.weight_decay;
  auto trace = encoder->train_mlm(batches, opt);

  BiasingReport report;
  report.config = config;
  report.optimizer = opt;
  report.losses = trace.epoch_losses;
  report.final_loss = trace.epoch_losses.back();
  report.output_model_id = config.output_model_id;
  report.examples = stream.examples.size();
  report.maskable_tokens = stream.maskable_tokens;
  report.selected_tokens = stream.selected_tokens;
  report.warnings = stream.warnings;

  encoder->set_model_id(config.output_model_id);
  ModelMetadata meta;
  meta.model_id = config.output_model_id;
  meta.parent_model = config.base_model_id;
  meta.backend = encoder->backend();
  meta.biasing_config = to_json(config);
  meta.final_loss = report.final_loss;
  registry.register_model(*encoder, meta, to_json(report));
  return report;
}

}  // namespace histore
