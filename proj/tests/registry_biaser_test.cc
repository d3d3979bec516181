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


#include <doctest.h>

#include <cmath>
#include <random>

#include "histore/error.h"
#include "histore/mlm_biaser.h"
#include "histore/mock_encoder.h"
#include "histore/registry.h"
#include "histore/synthetic.h"
#include "histore/transformer.h"

using namespace histore;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string &name)
      : path(std::filesystem::temp_directory_path() / ("histore_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

MockEncoder small_mock(const std::string &id) {
  MockEncoderConfig c;
  c.model_id = id;
  c.words = {"a", "b"};
  c.logits = {0, 1};
  return MockEncoder(c);
}

std::vector<BiasingChunk> chunks_of(const std::vector<std::string> &texts) {
  std::vector<BiasingChunk> out;
  for (size_t i = 0; i < texts.size(); ++i) {
    out.push_back({"d:c" + std::to_string(i), "d", 0, texts[i].size(), texts[i], 0});
  }
  return out;
}

TransformerConfig tiny_dims() {
  TransformerConfig c;
  c.hidden_size = 32;
  c.num_layers = 2;
  c.num_heads = 4;
  c.intermediate_size = 64;
  c.max_position_embeddings = 128;
  c.type_vocab_size = 2;
  return c;
}

std::vector<BiasingChunk> synthetic_chunks(size_t sentences) {
  SyntheticOptions o;
  o.expert_sentences = sentences;
  auto corpus = make_synthetic_corpus(o);
  std::vector<BiasingChunk> out;
  for (const auto &book : corpus.expert_books) {
    for (const auto &s : segment_sentences(book, {})) {
      out.push_back({s.sentence_id, book.doc_id, s.char_range.first, s.char_range.second, s.text,
                     0});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("register then lookup returns the same metadata") {
  TempDir dir("registry_roundtrip");
  ModelRegistry reg(dir.path);
  auto enc = small_mock("base");
  ModelMetadata m{"base", "", "mock", nullptr, std::nullopt, "2026-01-01T00:00:00Z"};
  auto stored = reg.register_model(enc, m);
  auto back = reg.lookup("base");
  CHECK(to_json(back) == to_json(stored));
  CHECK(back.created_at == "2026-01-01T00:00:00Z");
  CHECK(reg.list() == std::vector<std::string>{"base"});
  CHECK(reg.load("base")->handle().model_id == "base");
}

TEST_CASE("registry errors") {
  TempDir dir("registry_errors");
  ModelRegistry reg(dir.path);
  CHECK(code_of([&] { reg.lookup("nope"); }) == ErrorCode::kNotFound);
  auto enc = small_mock("base");
  reg.register_model(enc, {"base", "", "", nullptr, std::nullopt, ""});
  CHECK(code_of([&] { reg.register_model(enc, {"base", "", "", nullptr, std::nullopt, ""}); }) ==
        ErrorCode::kAlreadyExists);
  auto child = small_mock("child");
  CHECK(code_of([&] {
          reg.register_model(child, {"child", "ghost", "", nullptr, std::nullopt, ""});
        }) == ErrorCode::kValidation);
  CHECK(!reg.contains("child"));
  CHECK(code_of([&] { reg.lookup("../etc"); }) == ErrorCode::kInvalidArgument);
  // No staging directories are left behind.
  size_t entries = 0;
  for (const auto &e : std::filesystem::directory_iterator(dir.path)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
}

TEST_CASE("lineage walks from a model to its base") {
  TempDir dir("registry_lineage");
  ModelRegistry reg(dir.path);
  auto base = small_mock("m0");
  reg.register_model(base, {"m0", "", "", nullptr, std::nullopt, ""});
  for (int i = 1; i <= 3; ++i) {
    auto id = "m" + std::to_string(i);
    auto enc = small_mock(id);
    reg.register_model(enc, {id, "m" + std::to_string(i - 1), "", nullptr, 0.5, ""});
  }
  auto chain = reg.lineage("m3");
  REQUIRE(chain.size() == 4);  // three biasing links
  CHECK(chain[0].model_id == "m3");
  CHECK(chain[3].model_id == "m0");
  CHECK(chain[3].parent_model.empty());
  // A parent deleted behind the registry's back is reported.
  std::filesystem::remove_all(dir.path / "m1");
  CHECK(code_of([&] { reg.lineage("m3"); }) == ErrorCode::kValidation);
}

TEST_CASE("import copies a checkpoint directory") {
  TempDir dir("registry_import");
  ModelRegistry reg(dir.path / "models");
  auto src = dir.path / "src";
  small_mock("x").save(src);
  auto m = reg.import_model(src, "imported");
  CHECK(m.backend == "mock");
  CHECK(reg.load("imported")->handle().model_id == "imported");
}

TEST_CASE("masking selects close to p of the maskable tokens") {
  ByteTokenizer tok;
  // 100 chunks of 100 single-byte tokens each: 10,000 maskable tokens.
  std::vector<std::string> texts;
  std::mt19937 rng(3);
  for (int i = 0; i < 100; ++i) {
    std::string t;
    for (int j = 0; j < 100; ++j) t.push_back(static_cast<char>('a' + rng() % 26));
    texts.push_back(t);
  }
  auto chunks = chunks_of(texts);
  BiasingConfig config;
  config.base_model_id = "m";
  for (uint64_t seed : {1u, 2u, 3u}) {
    auto stream = make_masked_examples(chunks, tok, 512, config, seed);
    CHECK(stream.maskable_tokens == 10000);
    // Oracle: Binomial(n = 10000, p = 0.15).
    double mean = 10000 * 0.15;
    double sigma = std::sqrt(10000 * 0.15 * 0.85);
    CHECK(std::abs(double(stream.selected_tokens) - mean) <= 3 * sigma);
    CHECK(stream.mask_replaced + stream.random_replaced + stream.kept == stream.selected_tokens);
    double n = double(stream.selected_tokens);
    CHECK(std::abs(double(stream.mask_replaced) - 0.8 * n) <= 3 * std::sqrt(n * 0.8 * 0.2));
    size_t labelled = 0;
    for (const auto &ex : stream.examples) {
      for (size_t i = 0; i < ex.labels.size(); ++i) {
        if (ex.labels[i] == kIgnoreLabel) continue;
        ++labelled;
        CHECK(!tok.is_special(ex.labels[i]));
        bool ok = !tok.is_special(ex.input_ids[i]) || ex.input_ids[i] == tok.specials().mask_id;
        CHECK(ok);
      }
    }
    CHECK(labelled == stream.selected_tokens);
  }
}

TEST_CASE("special tokens are never selected") {
  ByteTokenizer tok;
  std::vector<std::string> texts;
  for (int i = 0; i < 50; ++i) texts.push_back("ab [MASK] cd [SEP] [CLS] ef [PAD]");
  BiasingConfig config;
  config.base_model_id = "m";
  config.masking_probability = 0.9;
  auto stream = make_masked_examples(chunks_of(texts), tok, 512, config, 4);
  for (const auto &ex : stream.examples) {
    auto original = tok.encode("ab [MASK] cd [SEP] [CLS] ef [PAD]");
    original.insert(original.begin(), tok.specials().cls_id);
    original.push_back(tok.specials().sep_id);
    REQUIRE(ex.labels.size() == original.size());
    for (size_t i = 0; i < original.size(); ++i) {
      if (tok.is_special(original[i])) {
        CHECK(ex.labels[i] == kIgnoreLabel);
        CHECK(ex.input_ids[i] == original[i]);
      } else if (ex.labels[i] == kIgnoreLabel) {
        CHECK(ex.input_ids[i] == original[i]);
      } else {
        CHECK(ex.labels[i] == original[i]);
      }
    }
  }
}

TEST_CASE("masked example stream is a function of the seed") {
  ByteTokenizer tok;
  auto chunks = chunks_of({"el reo dixo que estaba", "en casa de Pedro de Cazalla"});
  BiasingConfig config;
  config.base_model_id = "m";
  auto a = make_masked_examples(chunks, tok, 64, config, 11);
  auto b = make_masked_examples(chunks, tok, 64, config, 11);
  auto c = make_masked_examples(chunks, tok, 64, config, 12);
  REQUIRE(a.examples.size() == 2);
  bool differs = false;
  for (size_t i = 0; i < 2; ++i) {
    CHECK(a.examples[i].input_ids == b.examples[i].input_ids);
    CHECK(a.examples[i].labels == b.examples[i].labels);
    differs |= a.examples[i].labels != c.examples[i].labels;
  }
  CHECK(differs);
}

TEST_CASE("chunks without maskable tokens are skipped with a warning") {
  ByteTokenizer tok;
  BiasingConfig config;
  config.base_model_id = "m";
  auto stream = make_masked_examples(chunks_of({"", "[MASK][SEP]", "ok"}), tok, 64, config, 1);
  CHECK(stream.examples.size() == 1);
  CHECK(stream.warnings.size() == 2);
  CHECK(stream.warnings[0].chunk_id == "d:c0");
}

TEST_CASE("biasing config validation and defaults") {
  BiasingConfig c;
  c.base_model_id = "m";
  c.epochs = 0;
  CHECK(code_of([&] { validate(c); }) == ErrorCode::kConfig);
  c.epochs = 5;
  c.corrupt_split = {0.5, 0.1, 0.1};
  CHECK(code_of([&] { validate(c); }) == ErrorCode::kConfig);
  CHECK(default_learning_rate(768) == 5e-5);
  CHECK(default_learning_rate(1024) == 5e-6);
  auto parsed = biasing_config_from_json(
      {{"base_model", "beto"}, {"learning_rate", 5e-5}, {"epochs", 5}, {"seed", 3}});
  CHECK(parsed.learning_rate == 5e-5);
  CHECK(parsed.epochs == 5);
  CHECK(parsed.masking_probability == 0.15);
  CHECK(code_of([] { biasing_config_from_json({{"epochs", -1}}); }) == ErrorCode::kConfig);
  CHECK(biasing_config_from_json(to_json(parsed)).seed == 3);
}

TEST_CASE("biasing a tiny encoder lowers its loss and registers lineage") {
  TempDir dir("biaser_smoke");
  ModelRegistry reg(dir.path);
  auto chunks = synthetic_chunks(50);
  REQUIRE(chunks.size() == 50);
  std::vector<std::string> texts;
  for (const auto &c : chunks) texts.push_back(c.text);
  auto base = init_wordpiece_encoder("tiny", texts, 200, tiny_dims(), 5);
  reg.register_model(*base, {"tiny", "", "", nullptr, std::nullopt, ""});

  BiasingConfig config;
  config.base_model_id = "tiny";
  config.seed = 13;
  auto report = run_biasing(reg, config, chunks);
  CHECK(report.config.learning_rate == 5e-5);
  REQUIRE(report.losses.size() == 5);
  CHECK(report.losses.back() < report.losses.front());
  CHECK(report.final_loss == report.losses.back());
  CHECK(report.output_model_id == "tiny-biased");

  auto meta = reg.lookup("tiny-biased");
  CHECK(meta.parent_model == "tiny");
  CHECK(meta.final_loss == report.final_loss);
  auto stored = reg.report("tiny-biased");
  REQUIRE(stored.has_value());
  CHECK((*stored)["config"]["learning_rate"] == 5e-5);
  CHECK((*stored)["config"]["epochs"] == 5);
  CHECK((*stored)["losses"].size() == 5);
  auto chain = reg.lineage("tiny-biased");
  REQUIRE(chain.size() == 2);
  CHECK(chain[1].model_id == "tiny");

  // The registered copy is the trained model, not the base.
  auto biased = reg.load("tiny-biased");
  auto p = biased->tokenize("el padre [MASK] [SEP]");
  auto q = base->tokenize("el padre [MASK] [SEP]");
  CHECK(biased->mask_hidden_state(p).vector != base->mask_hidden_state(q).vector);

  CHECK(code_of([&] { run_biasing(reg, config, chunks); }) == ErrorCode::kAlreadyExists);
  config.base_model_id = "missing";
  CHECK(code_of([&] { run_biasing(reg, config, chunks); }) == ErrorCode::kNotFound);
}

TEST_CASE("a diverging run registers nothing") {
  TempDir dir("biaser_nan");
  ModelRegistry reg(dir.path);
  auto chunks = synthetic_chunks(10);
  std::vector<std::string> texts;
  for (const auto &c : chunks) texts.push_back(c.text);
  auto base = init_wordpiece_encoder("tiny", texts, 50, tiny_dims(), 5);
  auto model = base->model();
  model.params().head_b(0, 0) = std::numeric_limits<float>::infinity();
  TransformerEncoder broken("tiny", std::move(model),
                            std::make_unique<WordPieceTokenizer>(
                                dynamic_cast<const WordPieceTokenizer &>(base->tokenizer())));
  reg.register_model(broken, {"tiny", "", "", nullptr, std::nullopt, ""});
  BiasingConfig config;
  config.base_model_id = "tiny";
  CHECK(code_of([&] { run_biasing(reg, config, chunks); }) == ErrorCode::kNumeric);
  CHECK(!reg.contains("tiny-biased"));
}

TEST_CASE("synthetic corpus has the requested instance mix") {
  auto corpus = make_synthetic_corpus();
  CHECK(corpus.labels.size() == 200);
  size_t kin = 0;
  for (const auto &[id, label] : corpus.labels) kin += label == "parentesco";
  CHECK(kin > 60);
  CHECK(kin < 140);
  auto sentences = attach_entities(segment_sentences(corpus.target, {}), corpus.annotations);
  auto hist = entity_histogram(sentences);
  CHECK(hist.counts[1] == 20);
  CHECK(hist.counts[2] == 150);
  CHECK(hist.counts[3] == 10);
  CHECK(hist.counts[0] == 5);
}
