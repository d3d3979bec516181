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

// Minimal code point classification. Covers Latin, Greek and Cyrillic well
// enough for tokenizer parity on Spanish text; it is not a Unicode database.

#ifndef HISTORE_SRC_UNICODE_H_
#define HISTORE_SRC_UNICODE_H_

#include <string>
#include <string_view>
#include <vector>

namespace histore::unicode {

struct CodePoint {
  char32_t value;
  size_t offset;  // byte offset of the first byte
  size_t length;  // encoded length in bytes
};

// Invalid bytes decode to U+FFFD with length 1.
std::vector<CodePoint> decode(std::string_view text);
void append_utf8(char32_t cp, std::string *out);
std::string to_utf8(char32_t cp);

bool is_whitespace(char32_t cp);
bool is_control(char32_t cp);
bool is_punctuation(char32_t cp);  // BERT's notion: ASCII symbols + Unicode P*
bool is_letter(char32_t cp);
bool is_number(char32_t cp);
bool is_cjk(char32_t cp);
bool is_combining_mark(char32_t cp);

char32_t to_lower(char32_t cp);
// Base letter after canonical decomposition; the code point itself when it
// has no decomposition.
char32_t strip_accent(char32_t cp);

}  // namespace histore::unicode

#endif  // HISTORE_SRC_UNICODE_H_
