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


// Acceptance suite: one line per criterion, PASS or FAIL, with the measured
// value, the elapsed time and its budget. Exits non-zero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>

#include "histore/corpus.h"
#include "histore/error.h"
#include "histore/evaluator.h"
#include "histore/mlm_biaser.h"
#include "histore/pipeline.h"
#include "histore/prompt_engine.h"
#include "histore/registry.h"
#include "histore/relation_clusterer.h"
#include "histore/synthetic.h"
#include "histore/transformer.h"
#include "oracles.h"

using namespace histore;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("histore_accept_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path fixtures() {
  if (const char *env = std::getenv("HISTORE_FIXTURES")) return env;
  return HISTORE_FIXTURE_DIR;
}

std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<AnnotatedSentence> fixture_sentences(const SyntheticCorpus &corpus) {
  return attach_entities(segment_sentences(corpus.target, {}), corpus.annotations);
}

Outcome combinatorics() {
  Outcome o;
  const size_t expected[] = {0, 1, 1, 3};
  auto check_corpus = [&](const std::vector<AnnotatedSentence> &sentences, const std::string &name) {
    size_t s3 = 0, pairs_from_s3 = 0, total = 0;
    for (const auto &s : sentences) {
      size_t n = s.entities.size();
      auto inst = generate_instances(s);
      total += inst.size();
      o.require(n <= 3 && inst.size() == expected[n],
                name + ": sentence " + s.sentence_id + " with " + std::to_string(n) + " entities gave " +
                    std::to_string(inst.size()) + " instances");
      if (n == 3) {
        ++s3;
        for (const auto &r : inst) pairs_from_s3 += r.kind == InstanceKind::kPair;
      }
    }
    o.require(pairs_from_s3 == 3 * s3, name + ": 3-entity sentences gave " + std::to_string(pairs_from_s3) +
                                           " pairs for S3=" + std::to_string(s3));
    return total;
  };
  auto corpus = make_synthetic_corpus();
  size_t total = check_corpus(fixture_sentences(corpus), "fixture");
  o.require(total == 200, "fixture gave " + std::to_string(total) + " instances");

  // Random corpora with hand-placed entities.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AnnotatedSentence> sentences;
    size_t n_sentences = 1 + rng() % 40;
    for (size_t i = 0; i < n_sentences; ++i) {
      AnnotatedSentence s;
      s.sentence_id = "r:s" + std::to_string(i);
      s.doc_id = "r";
      size_t n = rng() % 4;
      for (size_t e = 0; e < n; ++e) {
        std::string name = "Nombre" + std::to_string(e);
        s.entities.push_back({"E" + std::to_string(e), s.text.size(), s.text.size() + name.size(), name});
        s.text += name + " y ";
      }
      s.text += "fin.";
      sentences.push_back(s);
    }
    check_corpus(sentences, "random corpus " + std::to_string(trial));
  }
  if (o.pass) o.detail = "200 fixture instances; 20 random corpora";
  return o;
}

Outcome template_bytes() {
  Outcome o;
  auto golden = read_json(fixtures() / "templates" / "golden_prompts.json");
  const std::string gs = golden["sentence"], ge1 = golden["e1"], ge2 = golden["e2"];
  // The golden scaffold of each template, with the entity surfaces turned
  // back into placeholders.
  std::map<std::string, std::string> scaffold;
  for (const auto &[id, text] : golden["prompts"].items()) {
    std::string t = text.get<std::string>();
    o.require(t.rfind(gs + " ", 0) == 0, "golden " + id + " does not start with the sentence");
    t = t.substr(gs.size());
    for (const auto &[from, to] : {std::pair{ge1, std::string("\x01")}, std::pair{ge2, std::string("\x02")}}) {
      for (size_t at; (at = t.find(from)) != std::string::npos;) t.replace(at, from.size(), to);
    }
    scaffold[id] = t;
  }
  auto expected = [&](const std::string &id, const std::string &sentence, const std::string &e1,
                      const std::string &e2) {
    std::string t = scaffold.at(id), out = sentence;
    for (char c : t) {
      if (c == '\x01') out += e1;
      else if (c == '\x02') out += e2;
      else out += c;
    }
    return out;
  };
  o.require(scaffold.size() == 6, "golden file has " + std::to_string(scaffold.size()) + " templates");

  auto corpus = make_synthetic_corpus();
  auto sentences = fixture_sentences(corpus);
  size_t checked = 0;
  for (const auto &s : sentences) {
    for (const auto &r : generate_instances(s)) {
      for (const auto &t : builtin_templates()) {
        if ((t.arity == Arity::kPair) != (r.kind == InstanceKind::kPair)) continue;
        auto got = fill_template(t, r, s).text;
        auto want = expected(t.template_id, s.text, r.e1.surface, r.e2 ? r.e2->surface : "");
        o.require(got == want, r.instance_id + " " + t.template_id + ": \"" + got + "\"");
        ++checked;
      }
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " filled prompts byte-identical";
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::vector<BinaryCells> cases = {{0, 0, 0, 7}, {0, 0, 4, 0}, {0, 3, 0, 0}, {2, 0, 0, 0},
                                    {0, 2, 3, 1}, {0, 0, 5, 5}, {0, 5, 0, 5}};
  auto cell = [&] { return rng() % 4 == 0 ? 0L : static_cast<long>(rng() % 1000); };
  while (cases.size() < 1000) {
    BinaryCells c{cell(), cell(), cell(), cell()};
    if (c.total() > 0) cases.push_back(c);
  }
  double worst = 0;
  for (const auto &c : cases) {
    auto got = compute_metrics(c);
    auto want = oracle::binary_metrics(c.tp, c.fp, c.fn, c.tn);
    for (auto [a, b] : {std::pair{got.accuracy, want.accuracy}, std::pair{got.precision, want.precision},
                        std::pair{got.recall, want.recall}, std::pair{got.f1, want.f1}}) {
      worst = std::max(worst, std::abs(a - b));
    }
  }
  o.require(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
  o.detail = "1000 matrices, max deviation " + fmt("%.3g", worst);
  return o;
}

Outcome alignment() {
  Outcome o;
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    size_t k = trial % 2 ? 3 : 2;
    size_t n = k + rng() % (13 - k);
    std::vector<size_t> clusters(n), gold(n);
    Assignments a;
    GoldLabels g;
    for (size_t i = 0; i < n; ++i) {
      clusters[i] = rng() % k;
      gold[i] = i < k ? i : rng() % k;
      std::string id = "i" + std::to_string(100 + i);
      a[id] = clusters[i];
      g[id] = "L" + std::to_string(gold[i]);
    }
    auto mapping = align_clusters(a, g, k);
    size_t hits = 0;
    for (const auto &[id, c] : a) hits += mapping.at(c) == g.at(id);
    double best = oracle::best_permutation_accuracy(clusters, gold, k);
    o.require(hits == static_cast<size_t>(std::lround(best * n)),
              "trial " + std::to_string(trial) + ": " + std::to_string(hits) + "/" + std::to_string(n) +
                  " vs brute force " + fmt("%.4f", best));
  }
  if (o.pass) o.detail = "200 cases (K=2 and K=3), all optimal";
  return o;
}

std::vector<MaskEmbedding> as_embeddings(const std::vector<std::vector<double>> &points) {
  std::vector<MaskEmbedding> out;
  for (size_t i = 0; i < points.size(); ++i) {
    out.push_back({"p" + std::to_string(10 + i), "m", "P1", points[i]});
  }
  return out;
}

Outcome kmeans_oracle() {
  Outcome o;
  std::mt19937_64 rng(21);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    size_t k = 2 + trial % 2;
    size_t n = k + rng() % (9 - k);
    size_t dim = 3 + rng() % 3;
    auto set = oracle::separated_points(rng, n, k, dim, M_PI / 3, 0.05);
    ClusteringConfig c;
    c.k = k;
    c.seed = rng();
    auto fit = kmeans_fit(as_embeddings(set.points), c);
    worst = std::max(worst, std::abs(fit.inertia - oracle::spherical_kmeans_optimum(set.points, k)));
    auto again = kmeans_fit(as_embeddings(set.points), c);
    o.require(to_json(fit).dump() == to_json(again).dump(), "trial " + std::to_string(trial) + " not deterministic");
  }
  o.require(worst <= 1e-9, "max inertia gap " + fmt("%.3g", worst));
  if (o.pass) o.detail = "50 sets, max inertia gap " + fmt("%.3g", worst) + ", repeat fits identical";
  return o;
}

Outcome separation() {
  Outcome o;
  TempDir tmp("separation");
  FixtureOptions f;
  f.with_trainable_model = false;
  Pipeline p(load_pipeline_config(write_fixture(tmp.path, f)));
  p.run_all();
  auto keyed = read_json(p.run_dir() / "eval" / "mock-keyed__P1.json");
  auto random = read_json(p.run_dir() / "eval" / "mock-random__P1.json");
  double a = keyed["metrics"]["accuracy"], b = random["metrics"]["accuracy"];
  size_t n = keyed["records"].size();
  o.require(n == 200, "evaluated " + std::to_string(n) + " instances");
  o.require(a >= 0.95, "label-keyed accuracy " + fmt("%.4f", a));
  o.require(b >= 0.4 && b <= 0.62, "random control accuracy " + fmt("%.4f", b));
  if (o.pass) o.detail = "keyed " + fmt("%.4f", a) + ", random control " + fmt("%.4f", b) + " over 200";
  return o;
}

Outcome biasing_smoke() {
  Outcome o;
  TempDir tmp("biasing");
  ModelRegistry registry(tmp.path);
  SyntheticOptions so;
  so.expert_sentences = 50;
  auto corpus = make_synthetic_corpus(so);
  std::vector<BiasingChunk> chunks;
  std::vector<std::string> texts;
  for (const auto &book : corpus.expert_books) {
    for (const auto &s : segment_sentences(book, {})) {
      chunks.push_back({s.sentence_id, book.doc_id, s.char_range.first, s.char_range.second, s.text, 0});
      texts.push_back(s.text);
    }
  }
  o.require(chunks.size() == 50, std::to_string(chunks.size()) + " sentences");
  TransformerConfig dims;
  dims.hidden_size = 32;
  dims.num_layers = 2;
  dims.num_heads = 4;
  dims.intermediate_size = 64;
  dims.max_position_embeddings = 128;
  auto base = init_wordpiece_encoder("tiny", texts, 200, dims, 5);
  registry.register_model(*base, {"tiny", "", "", nullptr, std::nullopt, ""});
  BiasingConfig config;
  config.base_model_id = "tiny";
  config.learning_rate = 5e-5;
  config.epochs = 5;
  config.seed = 13;
  auto report = run_biasing(registry, config, chunks);
  o.require(report.losses.size() == 5, "loss trace has " + std::to_string(report.losses.size()) + " epochs");
  if (!o.pass) return o;
  o.require(report.losses.back() < report.losses.front(),
            "loss " + fmt("%.4f", report.losses.front()) + " -> " + fmt("%.4f", report.losses.back()));
  auto stored = registry.report("tiny-biased");
  o.require(stored.has_value(), "no persisted report");
  if (stored) {
    o.require((*stored)["config"]["learning_rate"] == 5e-5, "persisted learning rate");
    o.require((*stored)["config"]["epochs"] == 5, "persisted epochs");
    o.require((*stored)["losses"].size() == 5, "persisted loss trace");
  }
  auto lineage = registry.lineage("tiny-biased");
  o.require(lineage.size() == 2 && lineage[1].model_id == "tiny", "lineage does not resolve to the base");
  if (o.pass) {
    o.detail = "loss " + fmt("%.4f", report.losses.front()) + " -> " + fmt("%.4f", report.losses.back()) +
               ", lineage tiny-biased -> tiny";
  }
  return o;
}

Outcome masking_policy() {
  Outcome o;
  ByteTokenizer tok;
  std::mt19937 rng(3);
  std::vector<BiasingChunk> chunks;
  for (int i = 0; i < 100; ++i) {
    std::string t;
    for (int j = 0; j < 100; ++j) t.push_back(static_cast<char>('a' + rng() % 26));
    chunks.push_back({"d:c" + std::to_string(i), "d", 0, t.size(), t, 0});
  }
  // Specials spelled out inside the text must never be selected either.
  chunks.push_back({"d:specials", "d", 0, 0, "[MASK] [SEP] [CLS] [PAD] [UNK]", 0});
  BiasingConfig config;
  config.base_model_id = "m";
  auto stream = make_masked_examples(chunks, tok, 512, config, 1);
  size_t maskable = stream.maskable_tokens;
  double mean = maskable * 0.15, sigma = std::sqrt(maskable * 0.15 * 0.85);
  o.require(maskable >= 10000 && maskable < 10010, std::to_string(maskable) + " maskable tokens");
  double z = (double(stream.selected_tokens) - mean) / sigma;
  o.require(std::abs(z) <= 3, std::to_string(stream.selected_tokens) + " selected, z=" + fmt("%.2f", z));
  for (const auto &ex : stream.examples) {
    for (size_t i = 0; i < ex.labels.size(); ++i) {
      if (ex.labels[i] != kIgnoreLabel) o.require(!tok.is_special(ex.labels[i]), "a special token was selected");
    }
  }
  if (o.pass) {
    o.detail = std::to_string(stream.selected_tokens) + " of " + std::to_string(maskable) + " selected (z=" +
               fmt("%.2f", z) + "), no specials";
  }
  return o;
}

Outcome reproducibility() {
  Outcome o;
  TempDir a("repro_a"), b("repro_b");
  Pipeline pa(load_pipeline_config(write_fixture(a.path)));
  Pipeline pb(load_pipeline_config(write_fixture(b.path)));
  pa.run_all();
  pb.run_all();
  size_t compared = 0;
  for (const auto &stage : {"compose", "cluster", "eval"}) {
    const auto &outputs = pa.manifest().stages.at(stage).outputs;
    o.require(outputs.size() == pb.manifest().stages.at(stage).outputs.size(), std::string(stage) + " output sets differ");
    for (const auto &[key, digest] : outputs) {
      if (key.rfind("model:", 0) == 0) continue;
      o.require(read_file(pa.run_dir() / key) == read_file(pb.run_dir() / key), key + " differs");
      ++compared;
    }
  }
  if (o.pass) o.detail = std::to_string(compared) + " artifacts byte-identical across two runs";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char *name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"combinatorics", 1, combinatorics},
      {"template byte-exactness", 1, template_bytes},
      {"metrics oracle", 5, metrics_oracle},
      {"alignment optimality", 10, alignment},
      {"k-means oracle and determinism", 30, kmeans_oracle},
      {"end-to-end separation (mock backend)", 60, separation},
      {"biasing smoke test", 120, biasing_smoke},
      {"masking policy", 5, masking_policy},
      {"reproducibility", 120, reproducibility},
  };
  size_t failed = 0;
  for (const auto &c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception &e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.pass && seconds > c.budget_seconds) {
      outcome = {false, outcome.detail + "; over time budget"};
    }
    failed += !outcome.pass;
    std::printf("%s  %-38s %s [%.2fs / %.0fs]\n", outcome.pass ? "PASS" : "FAIL", c.name, outcome.detail.c_str(),
                seconds, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
