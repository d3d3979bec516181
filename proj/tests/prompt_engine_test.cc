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

#include <algorithm>
#include <random>
#include <set>

#include "histore/error.h"
#include "histore/mock_encoder.h"
#include "histore/prompt_engine.h"

using namespace histore;

namespace {

std::filesystem::path fixtures() {
  const char *env = std::getenv("HISTORE_FIXTURES");
  return std::filesystem::path(env ? env : HISTORE_FIXTURE_DIR) / "templates";
}

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

EntityMention mention(const std::string &text, const std::string &surface, size_t from = 0) {
  size_t at = text.find(surface, from);
  REQUIRE(at != std::string::npos);
  return {surface, at, at + surface.size(), surface};
}

AnnotatedSentence sentence_with(const std::string &text, std::vector<std::string> surfaces) {
  AnnotatedSentence s{"d:s0", "d", text, {0, text.size()}, {}};
  size_t from = 0;
  for (const auto &surface : surfaces) {
    s.entities.push_back(mention(text, surface, from));
    from = s.entities.back().end;
  }
  return s;
}

RelationInstance pair_instance(const AnnotatedSentence &s, size_t i, size_t j) {
  RelationInstance r;
  r.instance_id = s.sentence_id + "/p" + std::to_string(i) + "-" + std::to_string(j);
  r.sentence_id = s.sentence_id;
  r.e1 = s.entities[i];
  r.e2 = s.entities[j];
  return r;
}

RelationInstance anaphoric_instance(const AnnotatedSentence &s) {
  RelationInstance r;
  r.instance_id = s.sentence_id + "/a0";
  r.sentence_id = s.sentence_id;
  r.kind = InstanceKind::kAnaphoric;
  r.e1 = s.entities[0];
  return r;
}

size_t occurrences(std::string_view s, std::string_view what) {
  size_t n = 0;
  for (size_t p = s.find(what); p != std::string_view::npos; p = s.find(what, p + 1)) ++n;
  return n;
}

MockEncoder byte_encoder() {
  MockEncoderConfig c;
  c.words = {"a"};
  c.logits = {0};
  return MockEncoder(c);
}

// Random lowercase words, with entity names that never occur in the filler.
std::string random_words(std::mt19937 &rng, size_t n) {
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    size_t len = 1 + rng() % 6;
    for (size_t k = 0; k < len; ++k) out.push_back(static_cast<char>('a' + rng() % 26));
  }
  return out;
}

}  // namespace

TEST_CASE("built-in templates match the template definition file") {
  auto file = read_json(fixtures() / "builtin.json");
  auto builtins = builtin_templates();
  REQUIRE(builtins.size() == 6);
  REQUIRE(file.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(template_from_json(file[i]) == builtins[i]);
    CHECK(template_from_json(to_json(builtins[i])) == builtins[i]);
  }
  CHECK(builtin_template("P3").gender_mode == GenderMode::kFeminine);
  CHECK(builtin_template("P4").gender_mode == GenderMode::kMasculine);
  CHECK(builtin_template("P1").gender_mode == GenderMode::kNeutral);
  CHECK(builtin_template("P_anaphoric").arity == Arity::kAnaphoric);
  for (const auto &t : builtins) {
    CHECK(std::count_if(t.segments.begin(), t.segments.end(),
                        [](const Segment &g) { return g.slot == Slot::kMask; }) == 1);
    CHECK_NOTHROW(validate(t));
  }
  CHECK(code_of([] { builtin_template("P9"); }) == ErrorCode::kNotFound);
}

TEST_CASE("filling reproduces the documented prompts") {
  auto s = sentence_with("el dicho Padilla fue a Pedrosa", {"Padilla", "Pedrosa"});
  CHECK(fill_template(builtin_template("P1"), pair_instance(s, 0, 1), s).text ==
        "el dicho Padilla fue a Pedrosa la relación entre Padilla y Pedrosa es una relación de "
        "[MASK] [SEP]");

  auto a = sentence_with("Pasó ante mí; Sebastián de Landeta, Notario.", {"Sebastián de Landeta"});
  CHECK(fill_template(builtin_template("P_anaphoric"), anaphoric_instance(a), a).text ==
        "Pasó ante mí; Sebastián de Landeta, Notario. la relación entre Sebastián de Landeta y la "
        "frase anterior es una relación de [MASK] [SEP]");

  AnnotatedSentence empty{"d:s0", "d", "", {0, 0}, {{"A", 0, 0, "A"}, {"B", 0, 0, "B"}}};
  auto p = fill_template(builtin_template("P0"), pair_instance(empty, 0, 1), empty);
  CHECK(p.text == "A [MASK] B [SEP]");
  CHECK(!p.truncated);
}

TEST_CASE("golden prompts for every built-in template") {
  auto golden = read_json(fixtures() / "golden_prompts.json");
  auto s = sentence_with(golden["sentence"], {golden["e1"], golden["e2"]});
  for (const auto &t : builtin_templates()) {
    auto inst = t.arity == Arity::kPair ? pair_instance(s, 0, 1) : anaphoric_instance(s);
    CHECK(fill_template(t, inst, s).text == golden["prompts"][t.template_id].get<std::string>());
  }
  EncoderHandle roberta{"r", 8, 512, "<mask>", "</s>", 10};
  auto p1 = fill_template(builtin_template("P1"), pair_instance(s, 0, 1), s);
  CHECK(render(p1, roberta) == golden["roberta_P1"].get<std::string>());
}

TEST_CASE("filling errors") {
  auto s = sentence_with("Juan y Pedro", {"Juan", "Pedro"});
  CHECK(code_of([&] { fill_template(builtin_template("P_anaphoric"), pair_instance(s, 0, 1), s); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { fill_template(builtin_template("P1"), anaphoric_instance(s), s); }) ==
        ErrorCode::kInvalidArgument);
  auto blank = pair_instance(s, 0, 1);
  blank.e2->surface = "  ";
  CHECK(code_of([&] { fill_template(builtin_template("P1"), blank, s); }) ==
        ErrorCode::kInvalidArgument);
  auto other = pair_instance(s, 0, 1);
  other.sentence_id = "d:s9";
  CHECK(code_of([&] { fill_template(builtin_template("P1"), other, s); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("template definitions are validated") {
  auto base = to_json(builtin_template("P1"));
  auto with_segments = [&](json segs) {
    json j = base;
    j["segments"] = segs;
    return j;
  };
  json two_masks = with_segments(json::parse(
      R"([{"slot":"SENTENCE"},{"slot":"E1"},{"slot":"MASK"},{"slot":"E2"},{"slot":"MASK"},{"slot":"SEP"}])"));
  json sep_inside = with_segments(json::parse(
      R"([{"slot":"SENTENCE"},{"slot":"E1"},{"slot":"SEP"},{"slot":"E2"},{"slot":"MASK"}])"));
  json no_e2 = with_segments(
      json::parse(R"([{"slot":"SENTENCE"},{"slot":"E1"},{"slot":"MASK"},{"slot":"SEP"}])"));
  json literal_mask = with_segments(json::parse(
      R"([{"slot":"SENTENCE"},{"slot":"E1"},{"lit":"[MASK]"},{"slot":"E2"},{"slot":"MASK"},{"slot":"SEP"}])"));
  json bad_slot = with_segments(json::parse(R"([{"slot":"E3"}])"));
  for (const auto &j : {two_masks, sep_inside, no_e2, literal_mask, bad_slot}) {
    CHECK(code_of([&] { template_from_json(j); }) == ErrorCode::kConfig);
  }
  json anaphoric_e2 = base;
  anaphoric_e2["arity"] = "anaphoric";
  CHECK(code_of([&] { template_from_json(anaphoric_e2); }) == ErrorCode::kConfig);
  no_e2["arity"] = "anaphoric";
  no_e2["template_id"] = "custom";
  auto custom = template_from_json(no_e2);
  std::vector<std::string> ids = {"custom", "P2"};
  std::vector<PromptTemplate> extra = {custom};
  auto resolved = resolve_templates(ids, extra);
  CHECK(resolved[0] == custom);
  CHECK(resolved[1] == builtin_template("P2"));
}

TEST_CASE("property: scaffold follows the sentence verbatim with one mask") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text = random_words(rng, rng() % 30);
    // Entity names are capitalized so they never collide with filler.
    size_t n = 1 + rng() % 3;
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i) {
      names.push_back("Ent" + std::to_string(trial) + "x" + std::to_string(i));
      text += (text.empty() ? "" : " ") + names.back() + " " + random_words(rng, rng() % 5);
    }
    text += ".";
    auto s = sentence_with(text, names);
    for (const auto &t : builtin_templates()) {
      std::vector<RelationInstance> instances;
      if (t.arity == Arity::kAnaphoric) {
        instances.push_back(anaphoric_instance(s));
      } else {
        for (size_t i = 0; i < n; ++i)
          for (size_t j = i + 1; j < n; ++j) instances.push_back(pair_instance(s, i, j));
      }
      std::set<std::string> texts;
      for (const auto &inst : instances) {
        auto p = fill_template(t, inst, s);
        // Independent rendering of the scaffold from the segment list.
        std::string scaffold;
        for (const auto &g : t.segments) {
          std::string piece;
          if (!g.slot) piece = g.literal;
          else if (g.slot == Slot::kE1) piece = inst.e1.surface;
          else if (g.slot == Slot::kE2) piece = inst.e2->surface;
          else if (g.slot == Slot::kMask) piece = "[MASK]";
          else if (g.slot == Slot::kSep) piece = "[SEP]";
          else continue;
          scaffold += (scaffold.empty() ? "" : " ") + piece;
        }
        CHECK(p.text == text + " " + scaffold);
        CHECK(occurrences(p.text, "[MASK]") == 1);
        CHECK(fill_template(t, inst, s).text == p.text);
        texts.insert(p.text);
      }
      CHECK(texts.size() == instances.size());
    }
  }
}

TEST_CASE("truncation leaves short prompts alone") {
  auto enc = byte_encoder();
  auto s = sentence_with("Juan y Pedro", {"Juan", "Pedro"});
  auto p = fill_template(builtin_template("P1"), pair_instance(s, 0, 1), s);
  auto q = truncate_for_budget(p, enc, 512);
  CHECK(q.text == p.text);
  CHECK(!q.truncated);
  CHECK(!q.dropped);
}

TEST_CASE("long sentences are cut to the budget around both entities") {
  auto enc = byte_encoder();
  std::mt19937 rng(5);
  // About 2,000 byte tokens with the entities in the second half.
  std::string text = random_words(rng, 420) + " Juan " + random_words(rng, 40) + " Pedro " +
                     random_words(rng, 20) + ".";
  REQUIRE(enc.count_tokens(text) > 1900);
  auto s = sentence_with(text, {"Juan", "Pedro"});
  auto p = fill_template(builtin_template("P1"), pair_instance(s, 0, 1), s);
  auto q = truncate_for_budget(p, enc, 512);
  CHECK(q.truncated);
  CHECK(!q.dropped);
  CHECK(enc.count_tokens(render(q, enc.handle())) <= 512);
  CHECK(q.sentence.find("Juan") != std::string::npos);
  CHECK(q.sentence.find("Pedro") != std::string::npos);
  CHECK(q.text == q.sentence + " " + p.scaffold);
  // The head went first: the retained window is a suffix of the sentence.
  CHECK(text.ends_with(q.sentence));
  CHECK(q.sentence.substr(q.entity_spans[0].first, 4) == "Juan");
  auto tok = enc.tokenize(render(q, enc.handle()), q.instance_id, q.template_id, q.truncated);
  CHECK(tok.truncated);
}

TEST_CASE("entities too far apart for the budget drop the instance") {
  auto enc = byte_encoder();
  std::mt19937 rng(6);
  // Word-sized units of 3 byte tokens; entities near token 5 and token 1900.
  std::string text = "ab Juan";
  for (int i = 0; i < 630; ++i) text += " ab";
  text += " Pedro";
  for (int i = 0; i < 30; ++i) text += " ab";
  auto s = sentence_with(text, {"Juan", "Pedro"});
  REQUIRE(s.entities[1].start > 1880);
  auto p = fill_template(builtin_template("P2"), pair_instance(s, 0, 1), s);
  auto q = truncate_for_budget(p, enc, 512);
  CHECK(q.dropped);
  CHECK(q.truncated);
}

TEST_CASE("a scaffold longer than the budget is an error") {
  auto enc = byte_encoder();
  auto s = sentence_with("Juan y Pedro", {"Juan", "Pedro"});
  auto p = fill_template(builtin_template("P1"), pair_instance(s, 0, 1), s);
  CHECK(code_of([&] { truncate_for_budget(p, enc, 20); }) == ErrorCode::kPromptShape);
}

TEST_CASE("property: truncation fits or drops, and never loses an entity") {
  auto enc = byte_encoder();
  std::mt19937 rng(17);
  for (int trial = 0; trial < 150; ++trial) {
    std::string text = random_words(rng, rng() % 80) + " Juan " + random_words(rng, rng() % 80) +
                       " Pedro " + random_words(rng, rng() % 80);
    auto s = sentence_with(text, {"Juan", "Pedro"});
    auto p = fill_template(builtin_template("P0"), pair_instance(s, 0, 1), s);
    size_t budget = 40 + rng() % 400;
    auto q = truncate_for_budget(p, enc, budget);
    size_t used = enc.count_tokens(render(q, enc.handle()));
    if (!q.dropped) CHECK(used <= budget);
    CHECK(q.truncated == (enc.count_tokens(render(p, enc.handle())) > budget));
    CHECK(text.find(q.sentence) != std::string::npos);
    CHECK(q.sentence.substr(q.entity_spans[0].first, 4) == "Juan");
    CHECK(q.sentence.substr(q.entity_spans[1].first, 5) == "Pedro");
  }
}

TEST_CASE("filled prompts round-trip through JSON") {
  auto s = sentence_with("Juan y Pedro", {"Juan", "Pedro"});
  auto p = fill_template(builtin_template("P3"), pair_instance(s, 0, 1), s);
  auto q = filled_prompt_from_json(to_json(p));
  CHECK(q.text == p.text);
  CHECK(q.scaffold == p.scaffold);
  CHECK(q.entity_spans == p.entity_spans);
}
