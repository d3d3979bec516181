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

// Tokenizers behind the encoder contract. Special tokens are recognized
// literally inside the input text, which is how prompts carry their mask and
// separator slots.

#ifndef HISTORE_TOKENIZER_H_
#define HISTORE_TOKENIZER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace histore {

using TokenId = int32_t;

struct SpecialTokens {
  std::string cls, sep, mask, pad, unk;
  TokenId cls_id = -1, sep_id = -1, mask_id = -1, pad_id = -1, unk_id = -1;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Encodes without adding framing tokens.
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::string id_to_token(TokenId id) const = 0;
  virtual std::optional<TokenId> token_to_id(std::string_view token) const = 0;
  virtual size_t vocab_size() const = 0;
  virtual std::string kind() const = 0;
  virtual void save(const std::filesystem::path &dir) const = 0;

  // Human-readable form of one vocabulary entry, as shown to annotators.
  virtual std::string display_token(TokenId id) const { return id_to_token(id); }

  const SpecialTokens &specials() const { return specials_; }
  bool is_special(TokenId id) const;

 protected:
  SpecialTokens specials_;
};

// One token per UTF-8 byte plus five bracketed specials and optional whole
// words; decode(encode(s)) == s exactly.
class ByteTokenizer : public Tokenizer {
 public:
  explicit ByteTokenizer(std::vector<std::string> extra_words = {});

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::string id_to_token(TokenId id) const override;
  std::optional<TokenId> token_to_id(std::string_view token) const override;
  size_t vocab_size() const override { return kFirstWord + extra_words_.size(); }
  std::string kind() const override { return "byte"; }
  void save(const std::filesystem::path &dir) const override;

  static constexpr TokenId kFirstByte = 5;
  static constexpr TokenId kFirstWord = kFirstByte + 256;

 private:
  std::vector<std::string> extra_words_;
  std::unordered_map<std::string, TokenId> word_ids_;
};

struct WordPieceOptions {
  bool do_lower_case = false;
  // Defaults to do_lower_case when unset, as BERT tokenizers do.
  std::optional<bool> strip_accents;
  size_t max_chars_per_word = 100;
  std::string cls = "[CLS]", sep = "[SEP]", mask = "[MASK]", pad = "[PAD]", unk = "[UNK]";
};

class WordPieceTokenizer : public Tokenizer {
 public:
  WordPieceTokenizer(std::vector<std::string> vocab, WordPieceOptions options);

  // Reads vocab.txt and, when present, tokenizer_config.json.
  static std::unique_ptr<WordPieceTokenizer> load(const std::filesystem::path &dir);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::string id_to_token(TokenId id) const override;
  std::optional<TokenId> token_to_id(std::string_view token) const override;
  size_t vocab_size() const override { return vocab_.size(); }
  std::string kind() const override { return "wordpiece"; }
  void save(const std::filesystem::path &dir) const override;
  std::string display_token(TokenId id) const override;

  // Whitespace/punctuation split with case and accent folding; the
  // normalization under which decode(encode(s)) round-trips.
  std::vector<std::string> basic_tokenize(std::string_view text) const;

  const WordPieceOptions &options() const { return options_; }

 private:
  void wordpiece(const std::string &word, std::vector<TokenId> *out) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> ids_;
  WordPieceOptions options_;
};

// Builds a vocabulary for small from-scratch models: specials, every
// character seen (bare and "##"-prefixed) and the most frequent words.
std::vector<std::string> build_wordpiece_vocab(std::span<const std::string> texts,
                                               size_t max_words, const WordPieceOptions &options);

struct ByteBpeOptions {
  bool add_prefix_space = false;
  std::string cls = "<s>", sep = "</s>", mask = "<mask>", pad = "<pad>", unk = "<unk>";
};

// GPT-2 style byte-level BPE as used by RoBERTa checkpoints.
class ByteBpeTokenizer : public Tokenizer {
 public:
  ByteBpeTokenizer(std::unordered_map<std::string, TokenId> vocab,
                   std::vector<std::pair<std::string, std::string>> merges,
                   ByteBpeOptions options);

  // Reads vocab.json and merges.txt.
  static std::unique_ptr<ByteBpeTokenizer> load(const std::filesystem::path &dir);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::string id_to_token(TokenId id) const override;
  std::optional<TokenId> token_to_id(std::string_view token) const override;
  size_t vocab_size() const override { return id_to_token_.size(); }
  std::string kind() const override { return "byte_bpe"; }
  void save(const std::filesystem::path &dir) const override;
  std::string display_token(TokenId id) const override;

  // Pre-tokenizer split (exposed for tests).
  static std::vector<std::string> pretokenize(std::string_view text);

 private:
  void bpe(const std::string &piece, std::vector<TokenId> *out) const;

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::vector<std::pair<std::string, std::string>> merge_list_;
  std::map<std::pair<std::string, std::string>, size_t> merge_rank_;
  ByteBpeOptions options_;
};

// Loads whichever tokenizer the directory holds.
std::unique_ptr<Tokenizer> load_tokenizer(const std::filesystem::path &dir);

}  // namespace histore

#endif  // HISTORE_TOKENIZER_H_
