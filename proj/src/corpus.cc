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

#include "histore/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "histore/error.h"

namespace histore {
namespace {

std::string rule_label(const NormalizationRuleset &rules, size_t i) {
  const auto &r = rules.rules[i];
  return "#" + std::to_string(i) + " ('" + r.pattern + "' -> '" + r.replacement + "')";
}

bool matches_at(std::string_view text, size_t pos, const NormalizationRule &rule) {
  const auto &p = rule.pattern;
  if (pos + p.size() > text.size()) return false;
  if (text.compare(pos, p.size(), p) != 0) return false;
  if (!rule.whole_word) return true;
  if (pos > 0 && is_word_byte(text[pos - 1]) && is_word_byte(p.front())) return false;
  size_t end = pos + p.size();
  if (end < text.size() && is_word_byte(text[end]) && is_word_byte(p.back())) return false;
  return true;
}

struct ScanEdit {
  NormalizationEdit edit;
  size_t rule = 0;
  size_t out_start = 0;
};

// Single longest-match-first pass.
std::string apply_rules(std::string_view text, const NormalizationRuleset &rules,
                        std::vector<ScanEdit> *edits) {
  std::unordered_map<unsigned char, std::vector<size_t>> by_first;
  for (size_t i = 0; i < rules.rules.size(); ++i) {
    by_first[static_cast<unsigned char>(rules.rules[i].pattern.front())].push_back(i);
  }
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    auto it = by_first.find(static_cast<unsigned char>(text[i]));
    std::optional<size_t> best;
    if (it != by_first.end()) {
      for (size_t r : it->second) {
        if (!matches_at(text, i, rules.rules[r])) continue;
        if (!best || rules.rules[r].pattern.size() > rules.rules[*best].pattern.size()) best = r;
      }
    }
    if (best) {
      const auto &rule = rules.rules[*best];
      if (edits != nullptr) {
        edits->push_back({{i, i + rule.pattern.size(), rule.pattern, rule.replacement},
                          *best, out.size()});
      }
      out += rule.replacement;
      i += rule.pattern.size();
    } else {
      out += text[i];
      ++i;
    }
  }
  return out;
}

std::string padded(size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

bool has_word_byte(std::string_view s) {
  return std::any_of(s.begin(), s.end(), is_word_byte);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// [start, end) trimmed of surrounding whitespace.
std::pair<size_t, size_t> trimmed_range(std::string_view text, size_t start, size_t end) {
  while (start < end && is_space(text[start])) ++start;
  while (end > start && is_space(text[end - 1])) --end;
  return {start, end};
}

bool is_utf8_boundary(std::string_view text, size_t pos) {
  return pos == 0 || pos >= text.size() ||
         (static_cast<unsigned char>(text[pos]) & 0xC0) != 0x80;
}

}  // namespace

std::string_view source_kind_name(SourceKind kind) {
  return kind == SourceKind::kTargetText ? "target_text" : "expert_book";
}

SourceKind parse_source_kind(std::string_view name) {
  if (name == "target_text") return SourceKind::kTargetText;
  if (name == "expert_book") return SourceKind::kExpertBook;
  throw Error(ErrorCode::kConfig, "unknown source_kind '" + std::string(name) + "'",
              "source_kind");
}

void validate_ruleset(const NormalizationRuleset &rules) {
  const auto &rs = rules.rules;
  for (size_t i = 0; i < rs.size(); ++i) {
    if (rs[i].pattern.empty()) {
      throw Error(ErrorCode::kConfig, "normalization rule #" + std::to_string(i) +
                                          " has an empty pattern");
    }
  }
  for (size_t i = 0; i < rs.size(); ++i) {
    for (size_t j = i + 1; j < rs.size(); ++j) {
      if (rs[i].pattern == rs[j].pattern &&
          (rs[i].replacement != rs[j].replacement || rs[i].whole_word != rs[j].whole_word)) {
        throw Error(ErrorCode::kConfig, "conflicting normalization rules " +
                                            rule_label(rules, i) + " and " +
                                            rule_label(rules, j));
      }
    }
  }
  // A replacement that another rule would rewrite breaks idempotence.
  for (size_t i = 0; i < rs.size(); ++i) {
    const std::string &repl = rs[i].replacement;
    for (size_t j = 0; j < rs.size(); ++j) {
      if (rs[j].pattern == rs[j].replacement) continue;
      for (size_t pos = 0; pos < repl.size(); ++pos) {
        if (matches_at(repl, pos, rs[j])) {
          throw Error(ErrorCode::kConfig, "conflicting normalization rules " +
                                              rule_label(rules, i) + " and " +
                                              rule_label(rules, j) +
                                              ": replacement would be rewritten again");
        }
      }
    }
  }
}

Document normalize_document(std::string doc_id, std::string title, SourceKind kind,
                            std::string raw, const NormalizationRuleset &rules) {
  validate_ruleset(rules);
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.title = std::move(title);
  doc.source_kind = kind;
  std::vector<ScanEdit> edits;
  doc.normalized_text = rules.rules.empty() ? raw : apply_rules(raw, rules, &edits);
  doc.raw_text = std::move(raw);

  if (!edits.empty()) {
    // Rewrites that straddle a replacement and its context only show up on
    // the second pass.
    std::vector<ScanEdit> again;
    apply_rules(doc.normalized_text, rules, &again);
    std::erase_if(again, [](const ScanEdit &e) { return e.edit.original == e.edit.replacement; });
    if (!again.empty()) {
      const auto &second = again.front();
      std::string culprit;
      for (const auto &e : edits) {
        size_t out_end = e.out_start + e.edit.replacement.size();
        if (e.out_start < second.edit.end && second.edit.start < out_end) {
          culprit = rule_label(rules, e.rule);
          break;
        }
      }
      throw Error(ErrorCode::kConfig,
                  "conflicting normalization rules " +
                      (culprit.empty() ? std::string("(input text)") : culprit) + " and " +
                      rule_label(rules, second.rule) + ": output is not a fixed point");
    }
  }
  doc.normalization_log.reserve(edits.size());
  for (auto &e : edits) {
    if (e.edit.original != e.edit.replacement) doc.normalization_log.push_back(std::move(e.edit));
  }
  return doc;
}

std::vector<AnnotatedSentence> segment_sentences(const Document &doc,
                                                 const SegmentationRules &rules) {
  const std::string &text = doc.normalized_text;
  std::set<std::string> abbreviations;
  for (const auto &a : rules.abbreviations) {
    std::string_view v = a;
    if (!v.empty() && v.back() == '.') v.remove_suffix(1);
    abbreviations.insert(ascii_lower(v));
  }
  // Longest terminator first so multi-byte terminators win over prefixes.
  std::vector<const Terminator *> terminators;
  for (const auto &t : rules.terminators) {
    if (!t.text.empty()) terminators.push_back(&t);
  }
  std::stable_sort(terminators.begin(), terminators.end(),
                   [](const Terminator *a, const Terminator *b) {
                     return a->text.size() > b->text.size();
                   });

  std::vector<AnnotatedSentence> out;
  std::optional<size_t> carry_start;
  auto emit = [&](size_t start, size_t end) {
    auto [s, e] = trimmed_range(text, start, end);
    if (s == e) return;
    std::string_view slice(text.data() + s, e - s);
    if (!has_word_byte(slice)) {
      if (!out.empty()) {
        auto &last = out.back();
        last.char_range.second = e;
        last.text = text.substr(last.char_range.first, e - last.char_range.first);
      } else if (!carry_start) {
        carry_start = s;
      }
      return;
    }
    if (carry_start) {
      s = *carry_start;
      carry_start.reset();
    }
    AnnotatedSentence sentence;
    sentence.sentence_id = doc.doc_id + ":s" + padded(out.size(), 5);
    sentence.doc_id = doc.doc_id;
    sentence.char_range = {s, e};
    sentence.text = text.substr(s, e - s);
    out.push_back(std::move(sentence));
  };

  size_t seg_start = 0;
  size_t i = 0;
  while (i < text.size()) {
    const Terminator *hit = nullptr;
    for (const auto *t : terminators) {
      if (text.compare(i, t->text.size(), t->text) == 0) {
        hit = t;
        break;
      }
    }
    if (hit == nullptr) {
      ++i;
      continue;
    }
    bool split = true;
    if (hit->text == ".") {
      auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
      if (i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) && is_digit(text[i + 1])) {
        split = false;
      }
      size_t w = i;
      while (w > 0 && is_word_byte(text[w - 1])) --w;
      if (w < i && abbreviations.count(ascii_lower(std::string_view(text).substr(w, i - w)))) {
        split = false;
      }
    }
    size_t after = i + hit->text.size();
    if (split) {
      emit(seg_start, hit->keep ? after : i);
      seg_start = after;
    }
    i = after;
  }
  emit(seg_start, text.size());
  return out;
}

std::vector<AnnotatedSentence> attach_entities(std::vector<AnnotatedSentence> sentences,
                                               std::span<const EntityAnnotation> annotations) {
  std::unordered_map<std::string, std::vector<size_t>> by_doc;
  for (size_t i = 0; i < sentences.size(); ++i) by_doc[sentences[i].doc_id].push_back(i);
  for (auto &[doc, idx] : by_doc) {
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      return sentences[a].char_range.first < sentences[b].char_range.first;
    });
  }

  // Index of the sentence whose range contains `pos`, if any.
  auto containing = [&](const std::vector<size_t> &idx, size_t pos) -> std::optional<size_t> {
    auto it = std::upper_bound(idx.begin(), idx.end(), pos, [&](size_t p, size_t s) {
      return p < sentences[s].char_range.first;
    });
    if (it == idx.begin()) return std::nullopt;
    size_t s = *std::prev(it);
    if (pos < sentences[s].char_range.second) return s;
    return std::nullopt;
  };

  for (const auto &a : annotations) {
    if (a.start >= a.end) {
      throw Error(ErrorCode::kValidation,
                  "annotation for entity '" + a.entity_id + "' has an empty span [" +
                      std::to_string(a.start) + ", " + std::to_string(a.end) + ")",
                  "start");
    }
    auto doc = by_doc.find(a.doc_id);
    if (doc == by_doc.end()) {
      throw Error(ErrorCode::kValidation,
                  "annotation references unknown document '" + a.doc_id + "'", "doc_id");
    }
    auto first = containing(doc->second, a.start);
    auto last = containing(doc->second, a.end - 1);
    if (!first || !last || *first != *last) {
      auto name = [&](std::optional<size_t> s) {
        return s ? sentences[*s].sentence_id : std::string("(outside any sentence)");
      };
      throw Error(ErrorCode::kValidation,
                  "annotation [" + std::to_string(a.start) + ", " + std::to_string(a.end) +
                      ") for entity '" + a.entity_id + "' crosses a sentence boundary: " +
                      name(first) + " / " + name(last),
                  "span");
    }
    auto &sentence = sentences[*first];
    size_t local_start = a.start - sentence.char_range.first;
    size_t local_end = a.end - sentence.char_range.first;
    EntityMention m{a.entity_id, local_start, local_end,
                    sentence.text.substr(local_start, local_end - local_start)};
    if (std::find(sentence.entities.begin(), sentence.entities.end(), m) ==
        sentence.entities.end()) {
      sentence.entities.push_back(std::move(m));
    }
  }
  for (auto &s : sentences) {
    std::sort(s.entities.begin(), s.entities.end(),
              [](const EntityMention &a, const EntityMention &b) {
                if (a.start != b.start) return a.start < b.start;
                if (a.end != b.end) return a.end > b.end;
                return a.entity_id < b.entity_id;
              });
  }
  return sentences;
}

size_t EntityHistogram::percentile(double p) const {
  if (total_sentences == 0) return 0;
  p = std::clamp(p, 0.0, 100.0);
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(total_sentences)));
  rank = std::max<size_t>(rank, 1);
  size_t cumulative = 0;
  for (const auto &[k, n] : counts) {
    cumulative += n;
    if (cumulative >= rank) return k;
  }
  return counts.rbegin()->first;
}

EntityHistogram entity_histogram(std::span<const AnnotatedSentence> sentences) {
  EntityHistogram h;
  for (const auto &s : sentences) ++h.counts[s.entities.size()];
  h.total_sentences = sentences.size();
  return h;
}

size_t count_words(std::string_view text) { return split_whitespace(text).size(); }

WordStats word_stats(std::span<const Document> documents,
                     std::span<const AnnotatedSentence> sentences) {
  std::unordered_map<std::string, std::vector<double>> counts;
  for (const auto &s : sentences) {
    counts[s.doc_id].push_back(static_cast<double>(count_words(s.text)));
  }
  WordStats stats;
  for (const auto &doc : documents) {
    WordStatsRow row;
    row.doc_id = doc.doc_id;
    row.title = doc.title;
    auto it = counts.find(doc.doc_id);
    if (it != counts.end() && !it->second.empty()) {
      auto values = it->second;
      const double n = static_cast<double>(values.size());
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / n;
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - row.mean) * (v - row.mean);
        row.std = std::sqrt(ss / (n - 1.0));
      }
      std::sort(values.begin(), values.end());
      size_t mid = values.size() / 2;
      row.median = values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
      row.total_words = static_cast<size_t>(sum);
      row.total_sentences = values.size();
    }
    stats.rows.push_back(std::move(row));
  }
  return stats;
}

std::vector<AnnotatedSentence> filter_by_entity_count(
    std::span<const AnnotatedSentence> sentences, size_t min_k, size_t max_k) {
  if (min_k > max_k) {
    throw Error(ErrorCode::kInvalidArgument, "min_k must not exceed max_k", "min_k");
  }
  std::vector<AnnotatedSentence> out;
  for (const auto &s : sentences) {
    if (s.entities.size() >= min_k && s.entities.size() <= max_k) out.push_back(s);
  }
  return out;
}

std::string_view instance_kind_name(InstanceKind kind) {
  return kind == InstanceKind::kPair ? "pair" : "anaphoric";
}

InstanceKind parse_instance_kind(std::string_view name) {
  if (name == "pair") return InstanceKind::kPair;
  if (name == "anaphoric") return InstanceKind::kAnaphoric;
  throw Error(ErrorCode::kValidation, "unknown instance kind '" + std::string(name) + "'",
              "kind");
}

std::vector<RelationInstance> generate_instances(const AnnotatedSentence &sentence,
                                                 const InstanceOptions &options) {
  const auto &ents = sentence.entities;
  const size_t n = ents.size();
  std::vector<RelationInstance> out;
  if (n == 0 || n > options.max_entities) return out;
  if (n == 1) {
    RelationInstance r;
    r.instance_id = sentence.sentence_id + "/a0";
    r.sentence_id = sentence.sentence_id;
    r.kind = InstanceKind::kAnaphoric;
    r.e1 = ents[0];
    out.push_back(std::move(r));
    return out;
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      RelationInstance r;
      r.instance_id = sentence.sentence_id + "/p" + std::to_string(i) + "-" + std::to_string(j);
      r.sentence_id = sentence.sentence_id;
      r.kind = InstanceKind::kPair;
      r.e1 = ents[i];
      r.e2 = ents[j];
      r.nested = (ents[i].start <= ents[j].start && ents[j].end <= ents[i].end) ||
                 (ents[j].start <= ents[i].start && ents[i].end <= ents[j].end);
      out.push_back(std::move(r));
    }
  }
  return out;
}

TokenCounter word_token_counter() {
  return [](std::string_view text) { return count_words(text) + 2; };
}

ChunkSet build_biasing_chunks(std::span<const Document> documents,
                              const SegmentationRules &rules,
                              const TokenCounter &count_tokens, size_t max_tokens) {
  ChunkSet out;
  for (const auto &doc : documents) {
    const std::string &text = doc.normalized_text;
    if (trim(text).empty()) continue;
    auto sentences = segment_sentences(doc, rules);

    // Units tile the text: each ends where a sentence ends, the last one at
    // the end of the document.
    std::vector<size_t> unit_ends;
    for (const auto &s : sentences) unit_ends.push_back(s.char_range.second);
    if (unit_ends.empty() || unit_ends.back() < text.size()) unit_ends.push_back(text.size());

    auto count_range = [&](size_t a, size_t b) {
      auto [s, e] = trimmed_range(text, a, b);
      return count_tokens(std::string_view(text).substr(s, e - s));
    };
    auto push_chunk = [&](size_t a, size_t b) {
      auto [s, e] = trimmed_range(text, a, b);
      if (s == e) {
        // Whitespace-only remainder: fold it into the previous chunk.
        if (!out.chunks.empty() && out.chunks.back().doc_id == doc.doc_id) {
          out.chunks.back().end = b;
        }
        return;
      }
      BiasingChunk c;
      c.doc_id = doc.doc_id;
      size_t ordinal = 0;
      for (auto it = out.chunks.rbegin(); it != out.chunks.rend() && it->doc_id == doc.doc_id; ++it) {
        ++ordinal;
      }
      c.chunk_id = doc.doc_id + ":c" + padded(ordinal, 5);
      c.start = a;
      c.end = b;
      c.text = text.substr(s, e - s);
      c.token_count = count_tokens(c.text);
      out.chunks.push_back(std::move(c));
    };
    // Largest boundary in `cuts` (ascending, all > a) such that [a, cut)
    // fits; assumes token counts grow with the range.
    auto farthest_fit = [&](size_t a, const std::vector<size_t> &cuts) -> std::optional<size_t> {
      size_t lo = 0, hi = cuts.size();
      std::optional<size_t> best;
      while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (count_range(a, cuts[mid]) <= max_tokens) {
          best = mid;
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      return best ? std::optional<size_t>(cuts[*best]) : std::nullopt;
    };
    auto hard_split = [&](size_t a, size_t b) {
      out.warnings.push_back({doc.doc_id, a, b,
                              "sentence exceeds " + std::to_string(max_tokens) +
                                  " tokens; split inside the sentence"});
      while (a < b) {
        std::vector<size_t> word_cuts;
        for (size_t p = a + 1; p < b; ++p) {
          if (is_space(text[p]) && !is_space(text[p - 1])) word_cuts.push_back(p);
        }
        word_cuts.push_back(b);
        auto cut = farthest_fit(a, word_cuts);
        if (!cut) {
          std::vector<size_t> char_cuts;
          for (size_t p = a + 1; p <= b; ++p) {
            if (is_utf8_boundary(text, p)) char_cuts.push_back(p);
          }
          cut = farthest_fit(a, char_cuts);
          if (!cut) {
            throw Error(ErrorCode::kInvalidArgument,
                        "token budget " + std::to_string(max_tokens) +
                            " cannot hold a single character",
                        "max_tokens_per_chunk");
          }
        }
        push_chunk(a, *cut);
        a = *cut;
      }
    };

    size_t chunk_start = 0;
    size_t chunk_end = 0;
    for (size_t unit_end : unit_ends) {
      if (count_range(chunk_start, unit_end) <= max_tokens) {
        chunk_end = unit_end;
        continue;
      }
      if (chunk_end > chunk_start) {
        push_chunk(chunk_start, chunk_end);
        chunk_start = chunk_end;
      }
      if (count_range(chunk_start, unit_end) <= max_tokens) {
        chunk_end = unit_end;
      } else {
        hard_split(chunk_start, unit_end);
        chunk_start = chunk_end = unit_end;
      }
    }
    if (chunk_end > chunk_start) push_chunk(chunk_start, chunk_end);
  }
  return out;
}

json to_json(const EntityMention &m) {
  return {{"entity_id", m.entity_id}, {"start", m.start}, {"end", m.end}, {"surface", m.surface}};
}

json to_json(const AnnotatedSentence &s) {
  json ents = json::array();
  for (const auto &e : s.entities) ents.push_back(to_json(e));
  return {{"sentence_id", s.sentence_id},
          {"doc_id", s.doc_id},
          {"text", s.text},
          {"char_range", {s.char_range.first, s.char_range.second}},
          {"entities", std::move(ents)}};
}

json to_json(const RelationInstance &r) {
  json j = {{"instance_id", r.instance_id},
            {"sentence_id", r.sentence_id},
            {"kind", instance_kind_name(r.kind)},
            {"e1", to_json(r.e1)},
            {"e2", r.e2 ? to_json(*r.e2) : json(nullptr)},
            {"gold_label", r.gold_label ? json(*r.gold_label) : json(nullptr)},
            {"nested", r.nested}};
  return j;
}

json to_json(const Document &d) {
  json log = json::array();
  for (const auto &e : d.normalization_log) {
    log.push_back({{"start", e.start}, {"end", e.end}, {"original", e.original},
                   {"replacement", e.replacement}});
  }
  return {{"doc_id", d.doc_id},
          {"title", d.title},
          {"source_kind", source_kind_name(d.source_kind)},
          {"raw_text", d.raw_text},
          {"normalized_text", d.normalized_text},
          {"normalization_log", std::move(log)}};
}

json to_json(const BiasingChunk &c) {
  return {{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id}, {"start", c.start},
          {"end", c.end},           {"text", c.text},     {"token_count", c.token_count}};
}

EntityMention entity_from_json(const json &j) {
  return {j.at("entity_id").get<std::string>(), j.at("start").get<size_t>(),
          j.at("end").get<size_t>(), j.at("surface").get<std::string>()};
}

AnnotatedSentence sentence_from_json(const json &j) {
  AnnotatedSentence s;
  s.sentence_id = j.at("sentence_id").get<std::string>();
  s.doc_id = j.at("doc_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.char_range = {j.at("char_range").at(0).get<size_t>(), j.at("char_range").at(1).get<size_t>()};
  for (const auto &e : j.at("entities")) s.entities.push_back(entity_from_json(e));
  return s;
}

RelationInstance instance_from_json(const json &j) {
  RelationInstance r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.sentence_id = j.at("sentence_id").get<std::string>();
  r.kind = parse_instance_kind(j.at("kind").get<std::string>());
  r.e1 = entity_from_json(j.at("e1"));
  if (j.contains("e2") && !j.at("e2").is_null()) r.e2 = entity_from_json(j.at("e2"));
  if (j.contains("gold_label") && !j.at("gold_label").is_null()) {
    r.gold_label = j.at("gold_label").get<std::string>();
  }
  r.nested = j.value("nested", false);
  if ((r.kind == InstanceKind::kAnaphoric) == r.e2.has_value()) {
    throw Error(ErrorCode::kValidation,
                "instance " + r.instance_id + ": e2 must be absent exactly for anaphoric instances",
                "e2");
  }
  return r;
}

Document document_from_json(const json &j) {
  Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  d.title = j.value("title", "");
  d.source_kind = parse_source_kind(j.value("source_kind", "target_text"));
  d.raw_text = j.value("raw_text", "");
  d.normalized_text = j.value("normalized_text", d.raw_text);
  if (j.contains("normalization_log")) {
    for (const auto &e : j.at("normalization_log")) {
      d.normalization_log.push_back({e.at("start").get<size_t>(), e.at("end").get<size_t>(),
                                     e.at("original").get<std::string>(),
                                     e.at("replacement").get<std::string>()});
    }
  }
  return d;
}

BiasingChunk chunk_from_json(const json &j) {
  return {j.at("chunk_id").get<std::string>(), j.at("doc_id").get<std::string>(),
          j.at("start").get<size_t>(),          j.at("end").get<size_t>(),
          j.at("text").get<std::string>(),      j.value("token_count", size_t{0})};
}

NormalizationRuleset normalization_rules_from_json(const json &j) {
  NormalizationRuleset rules;
  const json &list = j.is_array() ? j : j.at("rules");
  for (const auto &r : list) {
    rules.rules.push_back({r.at("pattern").get<std::string>(),
                           r.at("replacement").get<std::string>(), r.value("whole_word", true)});
  }
  return rules;
}

SegmentationRules segmentation_rules_from_json(const json &j) {
  SegmentationRules rules;
  if (j.contains("terminators")) {
    rules.terminators.clear();
    for (const auto &t : j.at("terminators")) {
      if (t.is_string()) {
        rules.terminators.push_back({t.get<std::string>(), true});
      } else {
        rules.terminators.push_back({t.at("text").get<std::string>(), t.value("keep", true)});
      }
    }
  }
  if (j.contains("abbreviations")) {
    rules.abbreviations = j.at("abbreviations").get<std::vector<std::string>>();
  }
  return rules;
}

json to_json(const EntityHistogram &h) {
  json counts = json::object();
  for (const auto &[k, n] : h.counts) counts[std::to_string(k)] = n;
  return {{"counts", std::move(counts)},
          {"total_sentences", h.total_sentences},
          {"p75", h.percentile(75.0)}};
}

json to_json(const WordStats &w) {
  json rows = json::array();
  for (const auto &r : w.rows) {
    rows.push_back({{"doc_id", r.doc_id},
                    {"title", r.title},
                    {"mean", r.mean},
                    {"std", r.std},
                    {"median", r.median},
                    {"total_words", r.total_words},
                    {"total_sentences", r.total_sentences}});
  }
  return {{"rows", std::move(rows)}};
}

}  // namespace histore
