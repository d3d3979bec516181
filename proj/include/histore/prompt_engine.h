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


// Cloze prompt templates: the built-in scaffolds, a small JSON template
// format, slot filling for pair and anaphoric instances, and truncation of
// the sentence portion to a token budget.

#ifndef HISTORE_PROMPT_ENGINE_H_
#define HISTORE_PROMPT_ENGINE_H_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "histore/corpus.h"
#include "histore/encoder.h"
#include "histore/util.h"

namespace histore {

enum class Slot { kSentence, kE1, kE2, kMask, kSep };
enum class GenderMode { kNeutral, kFeminine, kMasculine };
enum class Arity { kPair, kAnaphoric };

std::string_view slot_name(Slot slot);
std::string_view gender_mode_name(GenderMode mode);
std::string_view arity_name(Arity arity);

// Symbolic mask and separator strings in filled prompts; render() swaps in
// the backend's literal tokens.
inline constexpr std::string_view kSymbolicMask = "[MASK]";
inline constexpr std::string_view kSymbolicSep = "[SEP]";

struct Segment {
  std::optional<Slot> slot;  // unset for literals
  std::string literal;

  bool operator==(const Segment &) const = default;
};

struct PromptTemplate {
  std::string template_id;
  std::vector<Segment> segments;
  GenderMode gender_mode = GenderMode::kNeutral;
  Arity arity = Arity::kPair;

  bool operator==(const PromptTemplate &) const = default;
};

// Throws kConfig unless the template has one leading SENTENCE slot, one MASK
// slot, one trailing SEP slot, and the entity slots its arity requires.
void validate(const PromptTemplate &t);

// P0..P4 and P_anaphoric.
std::vector<PromptTemplate> builtin_templates();
const PromptTemplate &builtin_template(std::string_view template_id);

struct FilledPrompt {
  std::string instance_id;
  std::string template_id;
  std::string text;  // sentence, a space, then the scaffold
  bool truncated = false;
  // Set when no window of the sentence holding every entity fits the budget.
  bool dropped = false;
  // Pieces of text, kept so truncation can shorten the sentence alone.
  std::string sentence;
  std::string scaffold;
  // Entity mentions relative to `sentence`.
  std::vector<std::pair<size_t, size_t>> entity_spans;
};

FilledPrompt fill_template(const PromptTemplate &t, const RelationInstance &instance,
                           const AnnotatedSentence &sentence);

// The prompt text with the backend's mask and separator tokens.
std::string render(const FilledPrompt &p, const EncoderHandle &handle);

// Shortens the sentence head first, then its tail, keeping every entity
// mention inside the window. max_len counts the sequence-start token too.
// Throws kPromptShape when the scaffold alone does not fit.
FilledPrompt truncate_for_budget(const FilledPrompt &p, const Encoder &encoder, size_t max_len);

json to_json(const PromptTemplate &t);
PromptTemplate template_from_json(const json &j);
json to_json(const FilledPrompt &p);
FilledPrompt filled_prompt_from_json(const json &j);

// Resolves template ids against the built-ins and any extra templates
// (extra ones win). Throws kNotFound for unknown ids.
std::vector<PromptTemplate> resolve_templates(std::span<const std::string> ids,
                                              std::span<const PromptTemplate> extra);

}  // namespace histore

#endif  // HISTORE_PROMPT_ENGINE_H_
