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

#include <cstdlib>
#include <filesystem>
#include <random>

#include "histore/error.h"
#include "histore/tokenizer.h"
#include "histore/util.h"

using namespace histore;

namespace {

std::filesystem::path reference_dir() {
  const char *root = std::getenv("HISTORE_FIXTURES");
  return std::filesystem::path(root ? root : HISTORE_FIXTURE_DIR) / "reference";
}

void check_cases(const Tokenizer &tok, const json &cases) {
  for (const auto &c : cases) {
    std::string text = c["text"];
    INFO("text: " << text);
    auto ids = tok.encode(text);
    CHECK(ids == c["ids"].get<std::vector<TokenId>>());
  }
}

std::string random_spanish(std::mt19937 &rng, size_t n) {
  static const char *kPieces[] = {"el", " ", "  ", "señor", "Íñigo", "año", "¿qué?", ",",
                                  ".", "\n", "120", "vecino", "'s", "«", "»", "Güeñes",
                                  "\t", "MDCXX", "ç", "—", "dixo", "x", "ü", "Ávila"};
  std::uniform_int_distribution<size_t> pick(0, std::size(kPieces) - 1);
  std::string out;
  for (size_t i = 0; i < n; ++i) out += kPieces[pick(rng)];
  return out;
}

}  // namespace

TEST_CASE("cased wordpiece matches the reference tokenizer") {
  auto cases = read_json(reference_dir() / "tokenizer_cases.json");
  auto tok = load_tokenizer(reference_dir() / "wordpiece_cased");
  CHECK(tok->kind() == "wordpiece");
  check_cases(*tok, cases["wordpiece_cased"]);
}

TEST_CASE("uncased wordpiece folds case and accents like the reference") {
  auto cases = read_json(reference_dir() / "tokenizer_cases.json");
  auto tok = load_tokenizer(reference_dir() / "wordpiece_uncased");
  check_cases(*tok, cases["wordpiece_uncased"]);
}

TEST_CASE("byte-level BPE matches the reference tokenizer") {
  auto cases = read_json(reference_dir() / "tokenizer_cases.json");
  auto tok = load_tokenizer(reference_dir() / "byte_bpe");
  CHECK(tok->kind() == "byte_bpe");
  check_cases(*tok, cases["byte_bpe"]);
}

TEST_CASE("BPE mask token absorbs whitespace on its left") {
  auto tok = load_tokenizer(reference_dir() / "byte_bpe");
  CHECK(tok->encode("de <mask>") == tok->encode("de<mask>"));
  CHECK(tok->encode("de   <mask>") == tok->encode("de<mask>"));
  CHECK(tok->encode("<mask> de") != tok->encode("<mask>de"));
}

TEST_CASE("pretokenizer pieces concatenate to the input") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text = random_spanish(rng, 1 + rng() % 12);
    std::string joined;
    for (const auto &p : ByteBpeTokenizer::pretokenize(text)) {
      CHECK(!p.empty());
      joined += p;
    }
    CHECK(joined == text);
  }
  CHECK(ByteBpeTokenizer::pretokenize("a  b") == std::vector<std::string>{"a", " ", " b"});
  CHECK(ByteBpeTokenizer::pretokenize("it's ok  ") ==
        std::vector<std::string>{"it", "'s", " ok", "  "});
}

TEST_CASE("byte-level BPE round-trips arbitrary text") {
  auto tok = load_tokenizer(reference_dir() / "byte_bpe");
  std::mt19937 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text = random_spanish(rng, rng() % 12);
    auto ids = tok->encode(text);
    CHECK(tok->decode(ids) == text);
  }
}

TEST_CASE("wordpiece round-trips up to basic tokenization") {
  std::mt19937 rng(23);
  std::vector<std::string> texts;
  for (int i = 0; i < 200; ++i) texts.push_back(random_spanish(rng, rng() % 10));
  for (bool lower : {false, true}) {
    WordPieceOptions options;
    options.do_lower_case = lower;
    WordPieceTokenizer tok(build_wordpiece_vocab(texts, 20, options), options);
    for (const auto &text : texts) {
      // Oracle: the basic-tokenized words joined by single spaces.
      std::string expected;
      for (const auto &w : tok.basic_tokenize(text)) {
        if (!expected.empty()) expected += ' ';
        expected += w;
      }
      auto ids = tok.encode(text);
      for (TokenId id : ids) CHECK(id != tok.specials().unk_id);
      CHECK(tok.decode(ids) == expected);
    }
  }
}

TEST_CASE("byte tokenizer round-trips every byte string") {
  ByteTokenizer tok({"relación"});
  std::mt19937 rng(24);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    size_t n = rng() % 40;
    for (size_t i = 0; i < n; ++i) text.push_back(static_cast<char>(rng() % 256));
    if (text.find('[') != std::string::npos) continue;
    CHECK(tok.decode(tok.encode(text)) == text);
  }
  auto ids = tok.encode("a [MASK] b[SEP]");
  CHECK(ids == std::vector<TokenId>{5 + 'a', 5 + ' ', 4, 5 + ' ', 5 + 'b', 3});
  CHECK(tok.token_to_id("relación") == ByteTokenizer::kFirstWord);
  CHECK(tok.vocab_size() == 262);
}

TEST_CASE("specials are recognized literally") {
  auto tok = load_tokenizer(reference_dir() / "wordpiece_cased");
  auto ids = tok->encode("de [MASK] [SEP]");
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == tok->specials().mask_id);
  CHECK(ids[2] == tok->specials().sep_id);
  CHECK(tok->is_special(ids[1]));
  CHECK(!tok->is_special(ids[0]));
}

TEST_CASE("save and load preserve encodings") {
  auto dir = std::filesystem::temp_directory_path() / "histore_tokenizer_test";
  std::filesystem::remove_all(dir);
  for (const char *name : {"wordpiece_uncased", "byte_bpe"}) {
    auto tok = load_tokenizer(reference_dir() / name);
    auto out = dir / name;
    std::filesystem::create_directories(out);
    tok->save(out);
    auto again = load_tokenizer(out);
    CHECK(again->kind() == tok->kind());
    CHECK(again->vocab_size() == tok->vocab_size());
    std::string text = "¿Quién es el señor? ÍÑIGO Ortiz y Güeñes";
    CHECK(again->encode(text) == tok->encode(text));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("display tokens are readable") {
  auto bpe = load_tokenizer(reference_dir() / "byte_bpe");
  auto ids = bpe->encode(" relación");
  std::string shown;
  for (TokenId id : ids) shown += bpe->display_token(id);
  CHECK(shown == "relación");
  auto wp = load_tokenizer(reference_dir() / "wordpiece_cased");
  auto id = wp->token_to_id("##ña");
  REQUIRE(id.has_value());
  CHECK(wp->display_token(*id) == "ña");
}

TEST_CASE("missing tokenizer files are reported") {
  CHECK_THROWS_AS(load_tokenizer(std::filesystem::temp_directory_path() / "histore_nothing"),
                  Error);
}
