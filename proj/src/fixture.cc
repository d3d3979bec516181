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


#include <set>

#include "histore/error.h"
#include "histore/mock_encoder.h"
#include "histore/pipeline.h"
#include "histore/registry.h"
#include "histore/synthetic.h"
#include "histore/transformer.h"

namespace histore {
namespace fs = std::filesystem;

fs::path write_fixture(const fs::path &dir, const FixtureOptions &options) {
  SyntheticOptions so;
  so.seed = options.seed;
  so.expert_sentences = options.expert_sentences;
  auto corpus = make_synthetic_corpus(so);
  fs::create_directories(dir / "corpus");

  // No normalization rules are configured, so the written text is also the
  // normalized text the annotation offsets address.
  write_file_atomic(dir / "corpus" / "target.txt", corpus.target.normalized_text);
  json experts = json::array();
  for (const auto &d : corpus.expert_books) {
    auto rel = "corpus/" + d.doc_id + ".txt";
    write_file_atomic(dir / rel, d.normalized_text);
    experts.push_back({{"doc_id", d.doc_id}, {"title", d.title}, {"path", rel}});
  }
  std::vector<json> annotations, gold;
  for (const auto &a : corpus.annotations) {
    annotations.push_back({{"doc_id", a.doc_id}, {"start", a.start}, {"end", a.end}, {"entity_id", a.entity_id}});
  }
  for (const auto &[id, label] : corpus.labels) gold.push_back({{"instance_id", id}, {"label", label}});
  write_file_atomic(dir / "corpus" / "annotations.jsonl", to_jsonl(annotations));
  write_file_atomic(dir / "corpus" / "gold.jsonl", to_jsonl(gold));

  ModelRegistry registry(dir / "models");
  auto add = [&](const Encoder &e, const std::string &id) {
    if (!registry.contains(id)) registry.register_model(e, {id, "", "", nullptr, std::nullopt, ""});
  };
  MockEncoderConfig keyed;
  keyed.model_id = "mock-keyed";
  keyed.seed = options.seed;
  keyed.noise_sigma = 0.1;
  keyed.labels = corpus.label_set;
  keyed.latent_labels = corpus.labels;
  keyed.words = {"hijo", "hija", "padre", "esposa", "vecino", "vecina", "morador", "natural"};
  keyed.logits = std::vector<double>(keyed.words.size(), 0.0);
  keyed.label_logits["parentesco"] = {2.0, 1.8, 1.5, 1.2, 0.1, 0.0, -0.5, -0.8};
  keyed.label_logits["vecindad"] = {0.0, -0.2, -0.5, -0.8, 2.0, 1.7, 1.4, 1.1};
  add(MockEncoder(keyed), "mock-keyed");

  MockEncoderConfig random = keyed;
  random.model_id = "mock-random";
  random.mode = MockEncoderConfig::Mode::kRandom;
  random.latent_labels.clear();
  random.label_logits.clear();
  add(MockEncoder(random), "mock-random");

  std::vector<std::string> models = {"mock-keyed", "mock-random"};
  json biasing = json::array();
  if (options.with_trainable_model) {
    std::vector<std::string> texts = {corpus.target.normalized_text};
    for (const auto &d : corpus.expert_books) texts.push_back(d.normalized_text);
    TransformerConfig dims;
    dims.hidden_size = 32;
    dims.num_layers = 2;
    dims.num_heads = 4;
    dims.intermediate_size = 64;
    dims.max_position_embeddings = 128;
    if (!registry.contains("tiny-bert")) {
      add(*init_wordpiece_encoder("tiny-bert", texts, 300, dims, options.seed), "tiny-bert");
    }
    biasing.push_back({{"base_model", "tiny-bert"},
                       {"output_model", "tiny-bert-biased"},
                       {"learning_rate", 5e-5},
                       {"epochs", 5}});
    models.push_back("tiny-bert");
    models.push_back("tiny-bert-biased");
  }

  ordered_json config;
  config["run_id"] = "fixture";
  config["output_dir"] = "runs";
  config["registry"] = "models";
  config["seeds"] = {{"masking", options.seed}, {"clustering", options.seed}};
  config["corpus"] = {{"target", {{{"doc_id", corpus.target.doc_id},
                                   {"title", corpus.target.title},
                                   {"path", "corpus/target.txt"}}}},
                      {"expert_books", experts},
                      {"annotations", "corpus/annotations.jsonl"},
                      {"gold", "corpus/gold.jsonl"},
                      {"chunk_max_tokens", 64}};
  config["biasing"] = biasing;
  config["prompting"] = {{"models", models}, {"templates", {"P1", "P_anaphoric"}}, {"top_k", 10}};
  config["clustering"] = {{"k", 2}};
  config["evaluation"] = {{"positive_label", "parentesco"}, {"label_set", corpus.label_set}};
  config["serve"] = {{"host", "127.0.0.1"}, {"port", 8080}, {"label_set", corpus.label_set}};
  auto path = dir / "config.json";
  write_file_atomic(path, config.dump(2) + "\n");
  return path;
}

}  // namespace histore
