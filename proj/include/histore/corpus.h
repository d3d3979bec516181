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

// Corpus composition: text normalization, sentence segmentation, entity
// attachment, corpus statistics, relation instance generation and chunking
// of expert books for MLM biasing.

#ifndef HISTORE_CORPUS_H_
#define HISTORE_CORPUS_H_

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histore/util.h"

namespace histore {

enum class SourceKind { kTargetText, kExpertBook };

std::string_view source_kind_name(SourceKind kind);
SourceKind parse_source_kind(std::string_view name);

// One applied rewrite; [start, end) addresses raw_text.
struct NormalizationEdit {
  size_t start = 0;
  size_t end = 0;
  std::string original;
  std::string replacement;

  bool operator==(const NormalizationEdit &) const = default;
};

struct Document {
  std::string doc_id;
  std::string title;
  SourceKind source_kind = SourceKind::kTargetText;
  std::string raw_text;
  std::string normalized_text;
  std::vector<NormalizationEdit> normalization_log;
};

struct NormalizationRule {
  std::string pattern;
  std::string replacement;
  // Only match when the pattern is not glued to other letters or digits.
  bool whole_word = true;
};

struct NormalizationRuleset {
  std::vector<NormalizationRule> rules;
};

// Literal rewrite rules applied in a single left-to-right scan; at each
// position the longest matching pattern wins. Throws kConfig when two rules
// conflict (same pattern with different replacements, or a replacement that
// another rule would rewrite again).
Document normalize_document(std::string doc_id, std::string title,
                            SourceKind kind, std::string raw,
                            const NormalizationRuleset &rules);

void validate_ruleset(const NormalizationRuleset &rules);

struct Terminator {
  std::string text;
  // Whether the terminator stays attached to the sentence it closes.
  bool keep = true;
};

struct SegmentationRules {
  std::vector<Terminator> terminators = {{".", true}, {";", false}};
  // Words after which '.' does not end a sentence ("Sr.", "fol.").
  std::vector<std::string> abbreviations;
};

struct EntityMention {
  std::string entity_id;
  size_t start = 0;
  size_t end = 0;
  std::string surface;

  bool operator==(const EntityMention &) const = default;
};

struct AnnotatedSentence {
  std::string sentence_id;
  std::string doc_id;
  std::string text;
  // [first, second) into the document's normalized_text.
  std::pair<size_t, size_t> char_range;
  std::vector<EntityMention> entities;

  bool operator==(const AnnotatedSentence &) const = default;
};

std::vector<AnnotatedSentence> segment_sentences(const Document &doc,
                                                 const SegmentationRules &rules);

// A doc-level entity span from the expert annotation files.
struct EntityAnnotation {
  std::string doc_id;
  size_t start = 0;
  size_t end = 0;
  std::string entity_id;
};

std::vector<AnnotatedSentence> attach_entities(
    std::vector<AnnotatedSentence> sentences,
    std::span<const EntityAnnotation> annotations);

struct EntityHistogram {
  std::map<size_t, size_t> counts;
  size_t total_sentences = 0;

  // Nearest-rank percentile of the per-sentence entity count, p in [0, 100].
  size_t percentile(double p) const;
};

EntityHistogram entity_histogram(std::span<const AnnotatedSentence> sentences);

struct WordStatsRow {
  std::string doc_id;
  std::string title;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for fewer than 2 sentences
  double median = 0.0;
  size_t total_words = 0;
  size_t total_sentences = 0;
};

struct WordStats {
  std::vector<WordStatsRow> rows;
};

size_t count_words(std::string_view text);

WordStats word_stats(std::span<const Document> documents,
                     std::span<const AnnotatedSentence> sentences);

constexpr size_t kUnbounded = std::numeric_limits<size_t>::max();

std::vector<AnnotatedSentence> filter_by_entity_count(
    std::span<const AnnotatedSentence> sentences, size_t min_k,
    size_t max_k = kUnbounded);

enum class InstanceKind { kPair, kAnaphoric };

std::string_view instance_kind_name(InstanceKind kind);
InstanceKind parse_instance_kind(std::string_view name);

struct RelationInstance {
  std::string instance_id;
  std::string sentence_id;
  InstanceKind kind = InstanceKind::kPair;
  EntityMention e1;
  std::optional<EntityMention> e2;
  std::optional<std::string> gold_label;
  // One mention's span contains the other's.
  bool nested = false;

  bool operator==(const RelationInstance &) const = default;
};

struct InstanceOptions {
  // Sentences with more entities produce no instances.
  size_t max_entities = 3;
};

std::vector<RelationInstance> generate_instances(
    const AnnotatedSentence &sentence, const InstanceOptions &options = {});

// Counts tokens of a text, special tokens included, under some tokenizer.
using TokenCounter = std::function<size_t(std::string_view)>;

// Whitespace word count plus two framing tokens; used when no model
// tokenizer is configured.
TokenCounter word_token_counter();

struct BiasingChunk {
  std::string chunk_id;
  std::string doc_id;
  // Contiguous chunk ranges tile the normalized text of their document.
  size_t start = 0;
  size_t end = 0;
  std::string text;
  size_t token_count = 0;
};

struct ChunkWarning {
  std::string doc_id;
  size_t start = 0;
  size_t end = 0;
  std::string message;
};

struct ChunkSet {
  std::vector<BiasingChunk> chunks;
  std::vector<ChunkWarning> warnings;
};

ChunkSet build_biasing_chunks(std::span<const Document> documents,
                              const SegmentationRules &rules,
                              const TokenCounter &count_tokens,
                              size_t max_tokens_per_chunk);

// Newline-delimited record schemas.
json to_json(const EntityMention &m);
json to_json(const AnnotatedSentence &s);
json to_json(const RelationInstance &r);
json to_json(const Document &d);
json to_json(const BiasingChunk &c);
EntityMention entity_from_json(const json &j);
AnnotatedSentence sentence_from_json(const json &j);
RelationInstance instance_from_json(const json &j);
Document document_from_json(const json &j);
BiasingChunk chunk_from_json(const json &j);

NormalizationRuleset normalization_rules_from_json(const json &j);
SegmentationRules segmentation_rules_from_json(const json &j);
json to_json(const EntityHistogram &h);
json to_json(const WordStats &w);

}  // namespace histore

#endif  // HISTORE_CORPUS_H_
