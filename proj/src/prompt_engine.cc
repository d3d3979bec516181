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


#include "histore/prompt_engine.h"

#include <algorithm>

#include "histore/error.h"

namespace histore {
namespace {

Segment lit(std::string text) { return {std::nullopt, std::move(text)}; }
Segment slot(Slot s) { return {s, {}}; }

const std::vector<PromptTemplate> &builtins() {
  static const std::vector<PromptTemplate> templates = [] {
    const auto S = slot(Slot::kSentence), E1 = slot(Slot::kE1), E2 = slot(Slot::kE2),
               M = slot(Slot::kMask), P = slot(Slot::kSep);
    const auto rel = lit("la relación entre"), y = lit("y");
    using G = GenderMode;
    return std::vector<PromptTemplate>{
        {"P0", {S, E1, M, E2, P}, G::kNeutral, Arity::kPair},
        {"P1", {S, rel, E1, y, E2, lit("es una relación de"), M, P}, G::kNeutral, Arity::kPair},
        {"P2", {S, rel, E1, y, E2, lit("es"), M, P}, G::kNeutral, Arity::kPair},
        {"P3", {S, rel, E1, y, E2, lit("es la"), M, P}, G::kFeminine, Arity::kPair},
        {"P4", {S, rel, E1, y, E2, lit("es el"), M, P}, G::kMasculine, Arity::kPair},
        {"P_anaphoric",
         {S, rel, E1, lit("y la frase anterior es una relación de"), M, P},
         G::kNeutral,
         Arity::kAnaphoric},
    };
  }();
  return templates;
}

template <typename E>
E parse_enum(const json &j, const char *field, std::initializer_list<std::pair<const char *, E>> names) {
  if (!j.is_string()) throw Error(ErrorCode::kConfig, std::string(field) + " must be a string", field);
  auto s = j.get<std::string>();
  for (const auto &[name, value] : names) {
    if (s == name) return value;
  }
  throw Error(ErrorCode::kConfig, "unknown " + std::string(field) + " '" + s + "'", field);
}

bool contains_symbolic(std::string_view s) {
  return s.find(kSymbolicMask) != std::string_view::npos ||
         s.find(kSymbolicSep) != std::string_view::npos;
}

void replace_all(std::string &s, std::string_view from, std::string_view to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string join_prompt(std::string_view sentence, std::string_view scaffold) {
  if (sentence.empty()) return std::string(scaffold);
  std::string out(sentence);
  out += ' ';
  out += scaffold;
  return out;
}

// Rebuilds p around the window [a, b) of its sentence.
FilledPrompt with_window(const FilledPrompt &p, size_t a, size_t b) {
  std::string_view s = p.sentence;
  while (a < b && is_space(s[a])) ++a;
  while (b > a && is_space(s[b - 1])) --b;
  FilledPrompt out = p;
  out.sentence = std::string(s.substr(a, b - a));
  out.text = join_prompt(out.sentence, out.scaffold);
  out.truncated = true;
  for (auto &[start, end] : out.entity_spans) {
    start -= a;
    end -= a;
  }
  return out;
}

}  // namespace

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::kSentence: return "SENTENCE";
    case Slot::kE1: return "E1";
    case Slot::kE2: return "E2";
    case Slot::kMask: return "MASK";
    case Slot::kSep: return "SEP";
  }
  return "";
}

std::string_view gender_mode_name(GenderMode m) {
  switch (m) {
    case GenderMode::kNeutral: return "neutral";
    case GenderMode::kFeminine: return "feminine";
    case GenderMode::kMasculine: return "masculine";
  }
  return "";
}

std::string_view arity_name(Arity a) { return a == Arity::kPair ? "pair" : "anaphoric"; }

void validate(const PromptTemplate &t) {
  auto fail = [&](const std::string &why) {
    throw Error(ErrorCode::kConfig, "template '" + t.template_id + "': " + why, "segments");
  };
  if (t.template_id.empty()) throw Error(ErrorCode::kConfig, "template id is empty", "template_id");
  auto count = [&](Slot s) {
    return std::count_if(t.segments.begin(), t.segments.end(),
                         [&](const Segment &g) { return g.slot == s; });
  };
  if (t.segments.empty() || t.segments.front().slot != Slot::kSentence || count(Slot::kSentence) != 1) {
    fail("needs exactly one SENTENCE slot, first");
  }
  if (count(Slot::kMask) != 1) fail("needs exactly one MASK slot");
  if (t.segments.back().slot != Slot::kSep || count(Slot::kSep) != 1) {
    fail("needs exactly one SEP slot, last");
  }
  if (count(Slot::kE1) != 1) fail("needs exactly one E1 slot");
  size_t e2 = count(Slot::kE2);
  if (t.arity == Arity::kPair && e2 != 1) fail("pair templates need one E2 slot");
  if (t.arity == Arity::kAnaphoric && e2 != 0) fail("anaphoric templates take no E2 slot");
  for (const auto &g : t.segments) {
    if (!g.slot && contains_symbolic(g.literal)) fail("literal contains a mask or separator");
  }
}

std::vector<PromptTemplate> builtin_templates() { return builtins(); }

const PromptTemplate &builtin_template(std::string_view id) {
  for (const auto &t : builtins()) {
    if (t.template_id == id) return t;
  }
  throw Error(ErrorCode::kNotFound, "no built-in template '" + std::string(id) + "'", "template_id");
}

FilledPrompt fill_template(const PromptTemplate &t, const RelationInstance &instance,
                           const AnnotatedSentence &sentence) {
  validate(t);
  bool pair = instance.kind == InstanceKind::kPair;
  if (pair != (t.arity == Arity::kPair)) {
    throw Error(ErrorCode::kInvalidArgument,
                "template '" + t.template_id + "' is " + std::string(arity_name(t.arity)) +
                    " but instance '" + instance.instance_id + "' is " +
                    std::string(instance_kind_name(instance.kind)),
                "template_id");
  }
  if (instance.sentence_id != sentence.sentence_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "instance '" + instance.instance_id + "' does not belong to sentence '" +
                    sentence.sentence_id + "'",
                "sentence_id");
  }
  if (pair && !instance.e2) {
    throw Error(ErrorCode::kInvalidArgument, "pair instance without e2", "e2");
  }
  auto check_surface = [&](const EntityMention &m, const char *field) {
    if (trim(m.surface).empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "instance '" + instance.instance_id + "' has an empty entity surface", field);
    }
    if (contains_symbolic(m.surface)) {
      throw Error(ErrorCode::kPromptShape,
                  "entity surface contains a mask or separator: " + m.surface, field);
    }
  };
  check_surface(instance.e1, "e1");
  if (pair) check_surface(*instance.e2, "e2");

  std::string_view raw = sentence.text;
  auto body = trim(raw);
  size_t offset = body.empty() ? 0 : static_cast<size_t>(body.data() - raw.data());

  FilledPrompt out;
  out.instance_id = instance.instance_id;
  out.template_id = t.template_id;
  out.sentence = std::string(body);
  for (const auto &g : t.segments) {
    std::string piece;
    if (!g.slot) {
      piece = std::string(trim(g.literal));
    } else {
      switch (*g.slot) {
        case Slot::kSentence: continue;
        case Slot::kE1: piece = std::string(trim(instance.e1.surface)); break;
        case Slot::kE2: piece = std::string(trim(instance.e2->surface)); break;
        case Slot::kMask: piece = kSymbolicMask; break;
        case Slot::kSep: piece = kSymbolicSep; break;
      }
    }
    if (piece.empty()) continue;
    if (!out.scaffold.empty()) out.scaffold += ' ';
    out.scaffold += piece;
  }
  out.text = join_prompt(out.sentence, out.scaffold);

  auto add_span = [&](const EntityMention &m) {
    size_t s = std::clamp(m.start, offset, offset + body.size()) - offset;
    size_t e = std::clamp(m.end, offset, offset + body.size()) - offset;
    out.entity_spans.emplace_back(s, e);
  };
  add_span(instance.e1);
  if (pair) add_span(*instance.e2);
  return out;
}

std::string render(const FilledPrompt &p, const EncoderHandle &handle) {
  std::string scaffold = p.scaffold;
  replace_all(scaffold, kSymbolicMask, handle.mask_token);
  replace_all(scaffold, kSymbolicSep, handle.separator_token);
  return join_prompt(p.sentence, scaffold);
}

FilledPrompt truncate_for_budget(const FilledPrompt &p, const Encoder &encoder, size_t max_len) {
  const auto &handle = encoder.handle();
  auto fits = [&](const FilledPrompt &q) {
    return encoder.count_tokens(render(q, handle)) <= max_len;
  };
  if (fits(p)) return p;
  FilledPrompt bare = p;
  bare.sentence.clear();
  if (!fits(bare)) {
    throw Error(ErrorCode::kPromptShape,
                "scaffold of template '" + p.template_id + "' alone exceeds " +
                    std::to_string(max_len) + " tokens",
                "template_id");
  }

  const std::string &s = p.sentence;
  size_t lo = s.size(), hi = 0;
  for (const auto &[a, b] : p.entity_spans) {
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  if (lo > hi) hi = lo;

  // Candidate window edges on word boundaries, outside the entity span.
  std::vector<size_t> starts, ends;
  for (size_t i = 0; i < lo; ++i) {
    if ((i == 0 || is_space(s[i - 1])) && !is_space(s[i])) starts.push_back(i);
  }
  starts.push_back(lo);
  for (size_t i = s.size(); i > hi; --i) {
    if ((i == s.size() || is_space(s[i])) && !is_space(s[i - 1])) ends.push_back(i);
  }
  ends.push_back(hi);

  // First index in [0, n) whose window fits, assuming shorter windows fit at
  // least as often; verified against the actual count.
  auto first_fit = [&](size_t n, auto window) -> std::optional<size_t> {
    size_t a = 0, b = n;
    while (a < b) {
      size_t mid = (a + b) / 2;
      if (fits(window(mid))) {
        b = mid;
      } else {
        a = mid + 1;
      }
    }
    for (size_t i = a; i < n; ++i) {
      if (fits(window(i))) return i;
    }
    return std::nullopt;
  };

  auto head = first_fit(starts.size(), [&](size_t i) { return with_window(p, starts[i], s.size()); });
  if (head) return with_window(p, starts[*head], s.size());
  size_t a = starts.back();
  auto tail = first_fit(ends.size(), [&](size_t i) { return with_window(p, a, ends[i]); });
  if (tail) return with_window(p, a, ends[*tail]);
  FilledPrompt out = with_window(p, a, ends.back());
  out.dropped = true;
  return out;
}

json to_json(const PromptTemplate &t) {
  ordered_json segs = ordered_json::array();
  for (const auto &g : t.segments) {
    if (g.slot) {
      segs.push_back({{"slot", slot_name(*g.slot)}});
    } else {
      segs.push_back({{"lit", g.literal}});
    }
  }
  ordered_json j;
  j["template_id"] = t.template_id;
  j["segments"] = segs;
  j["gender_mode"] = gender_mode_name(t.gender_mode);
  j["arity"] = arity_name(t.arity);
  return json(j);
}

PromptTemplate template_from_json(const json &j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "template must be an object");
  PromptTemplate t;
  if (!j.contains("template_id") || !j["template_id"].is_string()) {
    throw Error(ErrorCode::kConfig, "template_id missing", "template_id");
  }
  t.template_id = j["template_id"].get<std::string>();
  if (!j.contains("segments") || !j["segments"].is_array()) {
    throw Error(ErrorCode::kConfig, "segments missing", "segments");
  }
  for (const auto &g : j["segments"]) {
    if (g.contains("lit") && g["lit"].is_string()) {
      t.segments.push_back(lit(g["lit"].get<std::string>()));
    } else if (g.contains("slot")) {
      t.segments.push_back(slot(parse_enum<Slot>(g["slot"], "slot",
                                                 {{"SENTENCE", Slot::kSentence},
                                                  {"E1", Slot::kE1},
                                                  {"E2", Slot::kE2},
                                                  {"MASK", Slot::kMask},
                                                  {"SEP", Slot::kSep}})));
    } else {
      throw Error(ErrorCode::kConfig, "segment needs 'lit' or 'slot'", "segments");
    }
  }
  if (j.contains("gender_mode")) {
    t.gender_mode = parse_enum<GenderMode>(j["gender_mode"], "gender_mode",
                                           {{"neutral", GenderMode::kNeutral},
                                            {"feminine", GenderMode::kFeminine},
                                            {"masculine", GenderMode::kMasculine}});
  }
  if (j.contains("arity")) {
    t.arity = parse_enum<Arity>(j["arity"], "arity",
                                {{"pair", Arity::kPair}, {"anaphoric", Arity::kAnaphoric}});
  }
  validate(t);
  return t;
}

json to_json(const FilledPrompt &p) {
  ordered_json j;
  j["instance_id"] = p.instance_id;
  j["template_id"] = p.template_id;
  j["text"] = p.text;
  j["truncated"] = p.truncated;
  j["dropped"] = p.dropped;
  j["sentence"] = p.sentence;
  j["scaffold"] = p.scaffold;
  j["entity_spans"] = p.entity_spans;
  return json(j);
}

FilledPrompt filled_prompt_from_json(const json &j) {
  FilledPrompt p;
  p.instance_id = j.at("instance_id").get<std::string>();
  p.template_id = j.at("template_id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.truncated = j.value("truncated", false);
  p.dropped = j.value("dropped", false);
  p.sentence = j.at("sentence").get<std::string>();
  p.scaffold = j.at("scaffold").get<std::string>();
  p.entity_spans = j.value("entity_spans", std::vector<std::pair<size_t, size_t>>{});
  return p;
}

std::vector<PromptTemplate> resolve_templates(std::span<const std::string> ids,
                                              std::span<const PromptTemplate> extra) {
  std::vector<PromptTemplate> out;
  for (const auto &id : ids) {
    auto it = std::find_if(extra.begin(), extra.end(),
                           [&](const PromptTemplate &t) { return t.template_id == id; });
    out.push_back(it != extra.end() ? *it : builtin_template(id));
  }
  return out;
}

}  // namespace histore
