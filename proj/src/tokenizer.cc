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

#include "histore/tokenizer.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <sstream>

#include "histore/error.h"
#include "histore/util.h"
#include "unicode.h"

namespace histore {
namespace {

struct Piece {
  bool special = false;
  std::string_view text;
  TokenId id = -1;
};

// Splits on literal special-token strings, longest first.
std::vector<Piece> split_specials(std::string_view text,
                                  const std::vector<std::pair<std::string, TokenId>> &specials) {
  std::vector<Piece> out;
  size_t start = 0;
  size_t i = 0;
  while (i < text.size()) {
    const std::pair<std::string, TokenId> *hit = nullptr;
    if (text[i] == '[' || text[i] == '<') {
      for (const auto &s : specials) {
        if (!s.first.empty() && text.compare(i, s.first.size(), s.first) == 0 &&
            (hit == nullptr || s.first.size() > hit->first.size())) {
          hit = &s;
        }
      }
    }
    if (hit == nullptr) {
      ++i;
      continue;
    }
    if (i > start) out.push_back({false, text.substr(start, i - start)});
    out.push_back({true, text.substr(i, hit->first.size()), hit->second});
    i += hit->first.size();
    start = i;
  }
  if (start < text.size()) out.push_back({false, text.substr(start)});
  return out;
}

std::vector<std::pair<std::string, TokenId>> special_list(const SpecialTokens &s) {
  std::vector<std::pair<std::string, TokenId>> out;
  for (auto [t, id] : {std::pair{s.cls, s.cls_id}, {s.sep, s.sep_id}, {s.mask, s.mask_id},
                       {s.pad, s.pad_id}, {s.unk, s.unk_id}}) {
    if (id >= 0) out.emplace_back(t, id);
  }
  return out;
}

// GPT-2 reversible byte <-> printable code point table.
const std::array<char32_t, 256> &byte_encoder() {
  static const auto table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

const std::unordered_map<char32_t, unsigned char> &byte_decoder() {
  static const auto table = [] {
    std::unordered_map<char32_t, unsigned char> t;
    const auto &enc = byte_encoder();
    for (int b = 0; b < 256; ++b) t[enc[b]] = static_cast<unsigned char>(b);
    return t;
  }();
  return table;
}

std::string bytes_to_symbols(std::string_view bytes) {
  std::string out;
  const auto &enc = byte_encoder();
  for (char c : bytes) unicode::append_utf8(enc[static_cast<unsigned char>(c)], &out);
  return out;
}

std::string symbols_to_bytes(std::string_view symbols) {
  std::string out;
  const auto &dec = byte_decoder();
  for (const auto &cp : unicode::decode(symbols)) {
    auto it = dec.find(cp.value);
    if (it != dec.end()) out.push_back(static_cast<char>(it->second));
  }
  return out;
}

}  // namespace

bool Tokenizer::is_special(TokenId id) const {
  const auto &s = specials_;
  return id == s.cls_id || id == s.sep_id || id == s.mask_id || id == s.pad_id || id == s.unk_id;
}

// ---------------------------------------------------------------------------
// ByteTokenizer

ByteTokenizer::ByteTokenizer(std::vector<std::string> extra_words)
    : extra_words_(std::move(extra_words)) {
  specials_ = {"[CLS]", "[SEP]", "[MASK]", "[PAD]", "[UNK]", 2, 3, 4, 0, 1};
  for (size_t i = 0; i < extra_words_.size(); ++i) {
    word_ids_.emplace(extra_words_[i], static_cast<TokenId>(kFirstWord + i));
  }
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto &p : split_specials(text, special_list(specials_))) {
    if (p.special) {
      ids.push_back(p.id);
      continue;
    }
    for (char c : p.text) ids.push_back(kFirstByte + static_cast<unsigned char>(c));
  }
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= kFirstByte && id < kFirstWord) {
      out.push_back(static_cast<char>(id - kFirstByte));
    } else {
      out += id_to_token(id);
    }
  }
  return out;
}

std::string ByteTokenizer::id_to_token(TokenId id) const {
  switch (id) {
    case 0: return specials_.pad;
    case 1: return specials_.unk;
    case 2: return specials_.cls;
    case 3: return specials_.sep;
    case 4: return specials_.mask;
    default: break;
  }
  if (id >= kFirstByte && id < kFirstWord) return std::string(1, static_cast<char>(id - kFirstByte));
  if (id >= kFirstWord && static_cast<size_t>(id - kFirstWord) < extra_words_.size()) {
    return extra_words_[static_cast<size_t>(id - kFirstWord)];
  }
  throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
}

std::optional<TokenId> ByteTokenizer::token_to_id(std::string_view token) const {
  for (const auto &[t, id] : special_list(specials_)) {
    if (t == token) return id;
  }
  if (auto it = word_ids_.find(std::string(token)); it != word_ids_.end()) return it->second;
  if (token.size() == 1) return kFirstByte + static_cast<unsigned char>(token[0]);
  return std::nullopt;
}

void ByteTokenizer::save(const std::filesystem::path &dir) const {
  json j = {{"tokenizer_class", "ByteTokenizer"}, {"extra_words", extra_words_}};
  write_file_atomic(dir / "byte_tokenizer.json", j.dump(2));
}

// ---------------------------------------------------------------------------
// WordPieceTokenizer

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, WordPieceOptions options)
    : vocab_(std::move(vocab)), options_(std::move(options)) {
  for (size_t i = 0; i < vocab_.size(); ++i) ids_.emplace(vocab_[i], static_cast<TokenId>(i));
  auto need = [&](const std::string &t) -> TokenId {
    auto it = ids_.find(t);
    if (it == ids_.end()) {
      throw Error(ErrorCode::kBackend, "vocabulary lacks special token " + t);
    }
    return it->second;
  };
  specials_.cls = options_.cls;
  specials_.sep = options_.sep;
  specials_.mask = options_.mask;
  specials_.pad = options_.pad;
  specials_.unk = options_.unk;
  specials_.cls_id = need(options_.cls);
  specials_.sep_id = need(options_.sep);
  specials_.mask_id = need(options_.mask);
  specials_.pad_id = need(options_.pad);
  specials_.unk_id = need(options_.unk);
}

std::unique_ptr<WordPieceTokenizer> WordPieceTokenizer::load(const std::filesystem::path &dir) {
  std::vector<std::string> vocab;
  std::istringstream in(read_file(dir / "vocab.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  WordPieceOptions options;
  if (std::filesystem::exists(dir / "tokenizer_config.json")) {
    auto cfg = read_json(dir / "tokenizer_config.json");
    options.do_lower_case = cfg.value("do_lower_case", options.do_lower_case);
    if (cfg.contains("strip_accents") && cfg["strip_accents"].is_boolean()) {
      options.strip_accents = cfg["strip_accents"].get<bool>();
    }
    auto token = [&](const char *key, std::string *dst) {
      if (!cfg.contains(key)) return;
      const auto &v = cfg[key];
      if (v.is_string()) *dst = v.get<std::string>();
      if (v.is_object() && v.contains("content")) *dst = v["content"].get<std::string>();
    };
    token("cls_token", &options.cls);
    token("sep_token", &options.sep);
    token("mask_token", &options.mask);
    token("pad_token", &options.pad);
    token("unk_token", &options.unk);
  }
  return std::make_unique<WordPieceTokenizer>(std::move(vocab), std::move(options));
}

std::vector<std::string> WordPieceTokenizer::basic_tokenize(std::string_view text) const {
  const bool lower = options_.do_lower_case;
  const bool strip = options_.strip_accents.value_or(options_.do_lower_case);
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (const auto &cp : unicode::decode(text)) {
    char32_t c = cp.value;
    if (c == 0 || c == 0xFFFD || unicode::is_control(c)) continue;
    if (unicode::is_whitespace(c)) {
      flush();
      continue;
    }
    if (lower) c = unicode::to_lower(c);
    if (strip) {
      if (unicode::is_combining_mark(c)) continue;
      c = unicode::strip_accent(c);
    }
    if (unicode::is_punctuation(c) || unicode::is_cjk(c)) {
      flush();
      tokens.push_back(unicode::to_utf8(c));
      continue;
    }
    unicode::append_utf8(c, &current);
  }
  flush();
  return tokens;
}

void WordPieceTokenizer::wordpiece(const std::string &word, std::vector<TokenId> *out) const {
  auto cps = unicode::decode(word);
  if (cps.size() > options_.max_chars_per_word) {
    out->push_back(specials_.unk_id);
    return;
  }
  std::vector<TokenId> pieces;
  size_t start = 0;
  while (start < cps.size()) {
    size_t end = cps.size();
    std::optional<TokenId> found;
    while (start < end) {
      size_t b = cps[start].offset;
      size_t e = end == cps.size() ? word.size() : cps[end].offset;
      std::string sub = (start > 0 ? "##" : "") + word.substr(b, e - b);
      if (auto it = ids_.find(sub); it != ids_.end()) {
        found = it->second;
        break;
      }
      --end;
    }
    if (!found) {
      out->push_back(specials_.unk_id);
      return;
    }
    pieces.push_back(*found);
    start = end;
  }
  out->insert(out->end(), pieces.begin(), pieces.end());
}

std::vector<TokenId> WordPieceTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto &p : split_specials(text, special_list(specials_))) {
    if (p.special) {
      ids.push_back(p.id);
      continue;
    }
    for (const auto &word : basic_tokenize(p.text)) wordpiece(word, &ids);
  }
  return ids;
}

std::string WordPieceTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    const std::string &tok = vocab_.at(static_cast<size_t>(id));
    if (tok.rfind("##", 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

std::string WordPieceTokenizer::id_to_token(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= vocab_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
  }
  return vocab_[static_cast<size_t>(id)];
}

std::optional<TokenId> WordPieceTokenizer::token_to_id(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::string WordPieceTokenizer::display_token(TokenId id) const {
  std::string t = id_to_token(id);
  return t.rfind("##", 0) == 0 ? t.substr(2) : t;
}

void WordPieceTokenizer::save(const std::filesystem::path &dir) const {
  std::string text;
  for (const auto &t : vocab_) text += t + "\n";
  write_file_atomic(dir / "vocab.txt", text);
  json cfg = {{"tokenizer_class", "BertTokenizer"},
              {"do_lower_case", options_.do_lower_case},
              {"cls_token", options_.cls},
              {"sep_token", options_.sep},
              {"mask_token", options_.mask},
              {"pad_token", options_.pad},
              {"unk_token", options_.unk}};
  cfg["strip_accents"] = options_.strip_accents ? json(*options_.strip_accents) : json(nullptr);
  write_file_atomic(dir / "tokenizer_config.json", cfg.dump(2));
}

std::vector<std::string> build_wordpiece_vocab(std::span<const std::string> texts,
                                               size_t max_words, const WordPieceOptions &options) {
  std::vector<std::string> vocab = {options.pad, options.unk, options.cls, options.sep,
                                    options.mask};
  WordPieceTokenizer basic(vocab, options);
  std::map<std::string, size_t> word_freq;
  std::map<std::string, size_t> chars;
  for (const auto &t : texts) {
    for (const auto &w : basic.basic_tokenize(t)) {
      ++word_freq[w];
      for (const auto &cp : unicode::decode(w)) ++chars[w.substr(cp.offset, cp.length)];
    }
  }
  for (const auto &[c, n] : chars) vocab.push_back(c);
  for (const auto &[c, n] : chars) vocab.push_back("##" + c);
  std::vector<std::pair<std::string, size_t>> words(word_freq.begin(), word_freq.end());
  std::stable_sort(words.begin(), words.end(),
                   [](const auto &a, const auto &b) { return a.second > b.second; });
  for (size_t i = 0; i < words.size() && i < max_words; ++i) {
    if (!chars.count(words[i].first)) vocab.push_back(words[i].first);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// ByteBpeTokenizer

ByteBpeTokenizer::ByteBpeTokenizer(std::unordered_map<std::string, TokenId> vocab,
                                   std::vector<std::pair<std::string, std::string>> merges,
                                   ByteBpeOptions options)
    : vocab_(std::move(vocab)), merge_list_(std::move(merges)), options_(std::move(options)) {
  TokenId max_id = -1;
  for (const auto &[t, id] : vocab_) max_id = std::max(max_id, id);
  id_to_token_.resize(static_cast<size_t>(max_id + 1));
  for (const auto &[t, id] : vocab_) id_to_token_[static_cast<size_t>(id)] = t;
  for (size_t i = 0; i < merge_list_.size(); ++i) merge_rank_.emplace(merge_list_[i], i);
  auto need = [&](const std::string &t) -> TokenId {
    auto it = vocab_.find(t);
    if (it == vocab_.end()) throw Error(ErrorCode::kBackend, "vocabulary lacks special token " + t);
    return it->second;
  };
  specials_ = {options_.cls, options_.sep, options_.mask, options_.pad, options_.unk,
               need(options_.cls), need(options_.sep), need(options_.mask), need(options_.pad),
               need(options_.unk)};
}

std::unique_ptr<ByteBpeTokenizer> ByteBpeTokenizer::load(const std::filesystem::path &dir) {
  auto vj = read_json(dir / "vocab.json");
  std::unordered_map<std::string, TokenId> vocab;
  for (auto it = vj.begin(); it != vj.end(); ++it) vocab.emplace(it.key(), it.value().get<TokenId>());
  std::vector<std::pair<std::string, std::string>> merges;
  std::istringstream in(read_file(dir / "merges.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos) {
      throw Error(ErrorCode::kBackend, "malformed merge rule: " + line);
    }
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  ByteBpeOptions options;
  if (std::filesystem::exists(dir / "tokenizer_config.json")) {
    auto cfg = read_json(dir / "tokenizer_config.json");
    options.add_prefix_space = cfg.value("add_prefix_space", false);
    auto token = [&](const char *key, std::string *dst) {
      if (!cfg.contains(key)) return;
      const auto &v = cfg[key];
      if (v.is_string()) *dst = v.get<std::string>();
      if (v.is_object() && v.contains("content")) *dst = v["content"].get<std::string>();
    };
    token("bos_token", &options.cls);
    token("sep_token", &options.sep);
    token("mask_token", &options.mask);
    token("pad_token", &options.pad);
    token("unk_token", &options.unk);
  }
  return std::make_unique<ByteBpeTokenizer>(std::move(vocab), std::move(merges), std::move(options));
}

std::vector<std::string> ByteBpeTokenizer::pretokenize(std::string_view text) {
  // Hand-rolled equivalent of the GPT-2 split pattern:
  //   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
  auto cps = unicode::decode(text);
  auto kind = [&](size_t i) {
    char32_t c = cps[i].value;
    if (unicode::is_whitespace(c)) return 0;
    if (unicode::is_letter(c)) return 1;
    if (unicode::is_number(c)) return 2;
    return 3;
  };
  auto byte_at = [&](size_t i) { return i < cps.size() ? cps[i].offset : text.size(); };
  std::vector<std::string> out;
  size_t i = 0;
  while (i < cps.size()) {
    if (cps[i].value == '\'') {
      static const std::string_view kSuffixes[] = {"re", "ve", "ll", "s", "t", "m", "d"};
      bool matched = false;
      for (auto suffix : kSuffixes) {
        if (text.compare(cps[i].offset + 1, suffix.size(), suffix) == 0) {
          out.emplace_back(text.substr(cps[i].offset, 1 + suffix.size()));
          i += 1 + suffix.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    size_t j = i;
    if (cps[i].value == ' ' && i + 1 < cps.size() && kind(i + 1) != 0) j = i + 1;
    int k = kind(j);
    if (k != 0) {
      size_t e = j + 1;
      while (e < cps.size() && kind(e) == k) ++e;
      out.emplace_back(text.substr(cps[i].offset, byte_at(e) - cps[i].offset));
      i = e;
      continue;
    }
    size_t e = i;
    while (e < cps.size() && kind(e) == 0) ++e;
    if (e < cps.size() && e - i > 1) --e;
    out.emplace_back(text.substr(cps[i].offset, byte_at(e) - cps[i].offset));
    i = e;
  }
  return out;
}

void ByteBpeTokenizer::bpe(const std::string &piece, std::vector<TokenId> *out) const {
  std::string symbols = bytes_to_symbols(piece);
  std::vector<std::string> word;
  for (const auto &cp : unicode::decode(symbols)) word.push_back(symbols.substr(cp.offset, cp.length));
  while (word.size() > 1) {
    size_t best_rank = std::numeric_limits<size_t>::max();
    std::pair<std::string, std::string> best;
    for (size_t i = 0; i + 1 < word.size(); ++i) {
      auto it = merge_rank_.find({word[i], word[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = it->first;
      }
    }
    if (best_rank == std::numeric_limits<size_t>::max()) break;
    std::vector<std::string> merged;
    for (size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == best.first && word[i + 1] == best.second) {
        merged.push_back(word[i] + word[i + 1]);
        i += 2;
      } else {
        merged.push_back(word[i]);
        ++i;
      }
    }
    word = std::move(merged);
  }
  for (const auto &sym : word) {
    auto it = vocab_.find(sym);
    out->push_back(it != vocab_.end() ? it->second : specials_.unk_id);
  }
}

std::vector<TokenId> ByteBpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  auto pieces = split_specials(text, special_list(specials_));
  // The mask token absorbs whitespace on its left.
  for (size_t i = 0; i + 1 < pieces.size(); ++i) {
    if (pieces[i + 1].special && pieces[i + 1].id == specials_.mask_id && !pieces[i].special) {
      auto &t = pieces[i].text;
      while (!t.empty() && is_space(t.back())) t.remove_suffix(1);
    }
  }
  bool first = true;
  for (const auto &p : pieces) {
    if (p.special) {
      ids.push_back(p.id);
      first = false;
      continue;
    }
    if (p.text.empty()) continue;
    std::string segment(p.text);
    if (first && options_.add_prefix_space && !segment.empty() && segment[0] != ' ') {
      segment.insert(segment.begin(), ' ');
    }
    first = false;
    for (const auto &pre : pretokenize(segment)) bpe(pre, &ids);
  }
  return ids;
}

std::string ByteBpeTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  std::string pending;
  for (TokenId id : ids) {
    if (is_special(id)) {
      out += symbols_to_bytes(pending);
      pending.clear();
      out += id_to_token(id);
    } else {
      pending += id_to_token(id);
    }
  }
  out += symbols_to_bytes(pending);
  return out;
}

std::string ByteBpeTokenizer::id_to_token(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<size_t>(id)];
}

std::optional<TokenId> ByteBpeTokenizer::token_to_id(std::string_view token) const {
  if (auto it = vocab_.find(std::string(token)); it != vocab_.end()) return it->second;
  return std::nullopt;
}

std::string ByteBpeTokenizer::display_token(TokenId id) const {
  if (is_special(id)) return id_to_token(id);
  return std::string(trim(symbols_to_bytes(id_to_token(id))));
}

void ByteBpeTokenizer::save(const std::filesystem::path &dir) const {
  json v = json::object();
  for (const auto &[t, id] : vocab_) v[t] = id;
  write_file_atomic(dir / "vocab.json", v.dump());
  std::string merges = "#version: 0.2\n";
  for (const auto &[a, b] : merge_list_) merges += a + " " + b + "\n";
  write_file_atomic(dir / "merges.txt", merges);
  json cfg = {{"tokenizer_class", "RobertaTokenizer"},
              {"add_prefix_space", options_.add_prefix_space},
              {"bos_token", options_.cls},
              {"sep_token", options_.sep},
              {"mask_token", options_.mask},
              {"pad_token", options_.pad},
              {"unk_token", options_.unk}};
  write_file_atomic(dir / "tokenizer_config.json", cfg.dump(2));
}

std::unique_ptr<Tokenizer> load_tokenizer(const std::filesystem::path &dir) {
  if (std::filesystem::exists(dir / "vocab.txt")) return WordPieceTokenizer::load(dir);
  if (std::filesystem::exists(dir / "vocab.json") && std::filesystem::exists(dir / "merges.txt")) {
    return ByteBpeTokenizer::load(dir);
  }
  if (std::filesystem::exists(dir / "byte_tokenizer.json")) {
    auto j = read_json(dir / "byte_tokenizer.json");
    return std::make_unique<ByteTokenizer>(j.value("extra_words", std::vector<std::string>{}));
  }
  throw Error(ErrorCode::kBackend, "no tokenizer files in " + dir.string());
}

}  // namespace histore
