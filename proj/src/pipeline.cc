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


#include "histore/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <set>

#include "histore/corpus.h"
#include "histore/error.h"
#include "histore/evaluator.h"
#include "histore/mlm_biaser.h"
#include "histore/mock_encoder.h"
#include "histore/prompt_engine.h"
#include "histore/registry.h"
#include "histore/relation_clusterer.h"

namespace histore {
namespace fs = std::filesystem;
namespace {

struct StageInfo {
  std::string name;
  std::string artifact;  // what later stages call its outputs
};

const std::vector<StageInfo> &stages() {
  static const std::vector<StageInfo> s = {
      {"compose", "composed corpus"},  {"stats", "corpus statistics"},
      {"bias", "biased models"},       {"prompt", "filled prompts"},
      {"embed", "mask embeddings"},    {"cluster", "clustering result"},
      {"eval", "evaluation reports"},  {"report", "summary report"},
  };
  return s;
}

const StageInfo &stage_info(const std::string &name) {
  for (const auto &s : stages()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stage '" + name + "'", "stage");
}

constexpr const char *kModelKey = "model:";
constexpr const char *kSourceKey = "src:";
constexpr const char *kJournalKey = "journal";

bool starts_with(const std::string &s, const char *prefix) { return s.rfind(prefix, 0) == 0; }

std::string dir_digest(const fs::path &dir) {
  if (!fs::is_directory(dir)) return "missing";
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto &f : files) {
    listing += fs::relative(f, dir).generic_string() + '\0' + file_sha256(f) + '\n';
  }
  return sha256_hex(listing);
}

std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// An object, an inline JSON value, or a path to a JSON file.
json inline_or_file(const json &value, const PipelineConfig &config) {
  if (value.is_string()) return read_json(config.resolve(value.get<std::string>()));
  return value;
}

std::vector<json> biasing_entries(const json &section) {
  if (section.is_null()) return {};
  if (section.is_object()) return {section};
  if (section.is_array()) return section.get<std::vector<json>>();
  throw Error(ErrorCode::kConfig, "biasing must be an object or a list", "biasing");
}

std::vector<std::string> string_list(const json &j, const char *field) {
  if (!j.is_array()) throw Error(ErrorCode::kConfig, std::string(field) + " must be a list", field);
  std::vector<std::string> out;
  for (const auto &x : j) {
    if (!x.is_string()) throw Error(ErrorCode::kConfig, std::string(field) + " must hold strings", field);
    out.push_back(x.get<std::string>());
  }
  return out;
}

json seeds_json(const Seeds &s) {
  ordered_json j;
  j["masking"] = s.masking;
  j["clustering"] = s.clustering;
  j["mock"] = s.mock ? json(*s.mock) : json(nullptr);
  return json(j);
}

Seeds seeds_from_json(const json &j) {
  Seeds s;
  if (j.is_null()) return s;
  s.masking = j.value("masking", uint64_t{0});
  s.clustering = j.value("clustering", uint64_t{0});
  if (j.contains("mock") && !j["mock"].is_null()) s.mock = j["mock"].get<uint64_t>();
  return s;
}

std::string run_name(const std::string &model, const std::vector<std::string> &group) {
  return model + "__" + group.front();
}

}  // namespace

const std::vector<std::string> &stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto &s : stages()) out.push_back(s.name);
    return out;
  }();
  return names;
}

fs::path PipelineConfig::resolve(const std::string &path) const {
  fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

json PipelineConfig::to_json() const {
  ordered_json j;
  j["run_id"] = run_id;
  j["seeds"] = ordered_json(seeds_json(seeds));
  j["corpus"] = ordered_json(corpus);
  j["biasing"] = ordered_json(biasing);
  j["prompting"] = ordered_json(prompting);
  j["clustering"] = ordered_json(clustering);
  j["evaluation"] = ordered_json(evaluation);
  j["serve"] = ordered_json(serve);
  return json(j);
}

PipelineConfig pipeline_config_from_json(const json &j, const fs::path &base_dir,
                                         const PipelineOverrides &o) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be an object");
  static const std::set<std::string> known = {"run_id",     "output_dir", "registry",   "seeds",
                                              "corpus",     "biasing",    "prompting",  "clustering",
                                              "evaluation", "serve"};
  for (const auto &[key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kConfig, "unknown config section '" + key + "'", key);
  }
  PipelineConfig c;
  c.base_dir = base_dir;
  c.run_id = o.run_id.value_or(j.value("run_id", std::string("run")));
  try {
    validate_model_id(c.run_id);
  } catch (const Error &) {
    throw Error(ErrorCode::kConfig, "invalid run id '" + c.run_id + "'", "run_id");
  }
  c.output_dir = c.resolve(j.value("output_dir", std::string("runs")));
  c.registry = c.resolve(j.value("registry", std::string("models")));
  c.seeds = seeds_from_json(j.value("seeds", json()));
  if (o.seed) c.seeds = {*o.seed, *o.seed, *o.seed};
  auto section = [&](const char *name, json fallback) {
    json v = j.value(name, fallback);
    if (v.is_null()) v = fallback;
    return v;
  };
  c.corpus = section("corpus", json::object());
  c.biasing = section("biasing", json::array());
  c.prompting = section("prompting", json::object());
  c.clustering = section("clustering", json::object());
  c.evaluation = section("evaluation", json::object());
  c.serve = section("serve", json::object());
  for (const char *name : {"corpus", "prompting", "clustering", "evaluation", "serve"}) {
    if (!section(name, json::object()).is_object()) {
      throw Error(ErrorCode::kConfig, std::string(name) + " must be an object", name);
    }
  }
  if (o.models) {
    c.prompting["models"] = *o.models;
    c.clustering["models"] = *o.models;
  }
  if (o.templates) c.prompting["templates"] = *o.templates;
  if (o.k) c.clustering["k"] = *o.k;
  return c;
}

PipelineConfig load_pipeline_config(const fs::path &path, const PipelineOverrides &overrides) {
  auto base = fs::absolute(path).parent_path();
  return pipeline_config_from_json(read_json(path), base, overrides);
}

json to_json(const RunManifest &m) {
  ordered_json j;
  j["run_id"] = m.run_id;
  j["config_digest"] = m.config_digest;
  j["seeds"] = ordered_json(seeds_json(m.seeds));
  j["models"] = m.models;
  j["templates"] = m.templates;
  j["created_at"] = m.created_at;
  ordered_json st = ordered_json::object();
  for (const auto &name : stage_names()) {
    auto it = m.stages.find(name);
    if (it == m.stages.end()) continue;
    const auto &r = it->second;
    ordered_json rec;
    rec["fingerprint"] = r.fingerprint;
    rec["inputs"] = r.inputs;
    rec["outputs"] = r.outputs;
    rec["started_at"] = r.started_at;
    rec["completed_at"] = r.completed_at;
    st[name] = rec;
  }
  j["stages"] = st;
  return json(j);
}

RunManifest run_manifest_from_json(const json &j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config_digest = j.value("config_digest", "");
  m.seeds = seeds_from_json(j.value("seeds", json()));
  m.models = j.value("models", std::vector<std::string>{});
  m.templates = j.value("templates", std::vector<std::string>{});
  m.created_at = j.value("created_at", "");
  for (const auto &[name, r] : j.at("stages").items()) {
    StageRecord s;
    s.fingerprint = r.at("fingerprint").get<std::string>();
    s.inputs = r.at("inputs").get<std::map<std::string, std::string>>();
    s.outputs = r.at("outputs").get<std::map<std::string, std::string>>();
    s.started_at = r.value("started_at", "");
    s.completed_at = r.value("completed_at", "");
    m.stages[name] = std::move(s);
  }
  return m;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  if (fs::exists(manifest_path())) {
    manifest_ = run_manifest_from_json(read_json(manifest_path()));
    if (manifest_.run_id != config_.run_id) {
      throw Error(ErrorCode::kValidation,
                  "manifest at " + manifest_path().string() + " belongs to run " + manifest_.run_id,
                  "run_id");
    }
  } else {
    manifest_.run_id = config_.run_id;
    manifest_.created_at = utc_timestamp();
  }
}

fs::path Pipeline::run_dir() const { return config_.output_dir / config_.run_id; }

fs::path Pipeline::journal_path() const {
  if (config_.serve.contains("journal")) return config_.resolve(config_.serve["journal"].get<std::string>());
  return run_dir() / "review" / "journal.jsonl";
}

std::vector<std::string> Pipeline::models() const {
  if (!config_.prompting.contains("models")) {
    throw Error(ErrorCode::kConfig, "no models configured (prompting.models or --models)", "models");
  }
  auto out = string_list(config_.prompting["models"], "models");
  if (out.empty()) throw Error(ErrorCode::kConfig, "no models configured", "models");
  return out;
}

std::vector<std::string> Pipeline::cluster_models() const {
  if (config_.clustering.contains("models")) return string_list(config_.clustering["models"], "models");
  if (config_.clustering.value("use_review_selections", true)) {
    auto state = load_review_state(journal_path());
    std::set<std::string> chosen;
    for (const auto &[family, s] : state.active_selections) chosen.insert(s.model_id);
    if (!chosen.empty()) return {chosen.begin(), chosen.end()};
  }
  return models();
}

std::vector<std::string> Pipeline::templates() const {
  if (!config_.prompting.contains("templates")) return {"P1", "P_anaphoric"};
  return string_list(config_.prompting["templates"], "templates");
}

namespace {

std::vector<PromptTemplate> custom_templates(const PipelineConfig &c) {
  std::vector<PromptTemplate> out;
  if (!c.prompting.contains("custom_templates")) return out;
  json list = inline_or_file(c.prompting["custom_templates"], c);
  if (list.is_object()) list = json::array({list});
  for (const auto &t : list) out.push_back(template_from_json(t));
  return out;
}

// Pair templates each head one group; an anaphoric template joins every
// group so isolated entities are clustered alongside the pairs.
std::vector<std::vector<std::string>> template_groups(const std::vector<PromptTemplate> &templates) {
  std::vector<std::string> pairs;
  std::optional<std::string> anaphoric;
  for (const auto &t : templates) {
    if (t.arity == Arity::kPair) {
      pairs.push_back(t.template_id);
    } else if (!anaphoric) {
      anaphoric = t.template_id;
    }
  }
  std::vector<std::vector<std::string>> groups;
  for (const auto &p : pairs) {
    groups.push_back({p});
    if (anaphoric) groups.back().push_back(*anaphoric);
  }
  if (groups.empty() && anaphoric) groups.push_back({*anaphoric});
  return groups;
}

std::vector<std::string> dependencies(const std::string &stage, bool biasing) {
  if (stage == "stats" || stage == "bias" || stage == "prompt") return {"compose"};
  if (stage == "embed") return biasing ? std::vector<std::string>{"prompt", "bias"}
                                       : std::vector<std::string>{"prompt"};
  if (stage == "cluster") return {"embed"};
  if (stage == "eval") return {"cluster", "compose"};
  if (stage == "report") return {"eval", "stats"};
  return {};
}

ClusteringConfig clustering_config(const PipelineConfig &c) {
  json j = c.clustering;
  j.erase("models");
  j.erase("use_review_selections");
  j["seed"] = c.seeds.clustering;
  return clustering_config_from_json(j);
}

std::vector<BiasingConfig> biasing_configs(const PipelineConfig &c) {
  std::vector<BiasingConfig> out;
  for (const auto &e : biasing_entries(c.biasing)) {
    auto cfg = biasing_config_from_json(e);
    cfg.seed = c.seeds.masking;
    cfg.corpus_ref = "chunks.jsonl";
    out.push_back(cfg);
  }
  return out;
}

}  // namespace

std::string Pipeline::digest(const std::string &key) const {
  if (starts_with(key, kModelKey)) {
    return dir_digest(config_.registry / key.substr(std::string(kModelKey).size()));
  }
  if (starts_with(key, kSourceKey)) {
    fs::path p = key.substr(std::string(kSourceKey).size());
    return fs::exists(p) ? file_sha256(p) : "missing";
  }
  if (key == kJournalKey) return fs::exists(journal_path()) ? file_sha256(journal_path()) : "absent";
  auto p = run_dir() / key;
  return fs::exists(p) ? file_sha256(p) : "missing";
}

Pipeline::Plan Pipeline::plan(const std::string &stage) const {
  Plan p;
  bool biasing = !biasing_entries(config_.biasing).empty();
  for (const auto &dep : dependencies(stage, biasing)) {
    auto it = manifest_.stages.find(dep);
    if (it == manifest_.stages.end()) continue;
    for (const auto &[k, d] : it->second.outputs) p.inputs[k] = d;
  }
  auto source = [&](const std::string &path) {
    auto key = kSourceKey + config_.resolve(path).string();
    p.inputs[key] = digest(key);
  };
  auto model = [&](const std::string &id) {
    auto key = kModelKey + id;
    p.inputs[key] = digest(key);
  };

  if (stage == "compose") {
    const auto &c = config_.corpus;
    p.params = c;
    for (const char *list : {"target", "expert_books"}) {
      if (!c.contains(list)) continue;
      for (const auto &d : c[list]) source(d.at("path").get<std::string>());
    }
    for (const char *file : {"annotations", "gold", "normalization", "segmentation"}) {
      if (c.contains(file) && c[file].is_string()) source(c[file].get<std::string>());
    }
  } else if (stage == "stats") {
    p.params = {{"segmentation", config_.corpus.value("segmentation", json())}};
  } else if (stage == "bias") {
    json entries = json::array();
    std::set<std::string> produced;
    for (const auto &b : biasing_configs(config_)) {
      entries.push_back(to_json(b));
      if (!produced.count(b.base_model_id)) model(b.base_model_id);
      produced.insert(b.output_model_id.empty() ? b.base_model_id + "-biased" : b.output_model_id);
    }
    p.params = {{"runs", entries}};
  } else if (stage == "prompt") {
    json custom = json::array();
    for (const auto &t : custom_templates(config_)) custom.push_back(to_json(t));
    p.params = {{"templates", templates()}, {"custom", custom}};
  } else if (stage == "embed") {
    auto ids = models();
    for (const auto &m : ids) model(m);
    p.params = {{"models", ids},
                {"mock_seed", config_.seeds.mock ? json(*config_.seeds.mock) : json(nullptr)},
                {"max_length", config_.prompting.value("max_length", json())},
                {"top_k", config_.prompting.value("top_k", 10)},
                {"binary_vectors", config_.prompting.value("binary_vectors", false)}};
  } else if (stage == "cluster") {
    if (!config_.clustering.contains("models") && config_.clustering.value("use_review_selections", true)) {
      p.inputs[kJournalKey] = digest(kJournalKey);
    }
    json groups = template_groups(resolve_templates(templates(), custom_templates(config_)));
    p.params = {{"config", to_json(clustering_config(config_))},
                {"models", cluster_models()},
                {"groups", groups}};
  } else if (stage == "eval") {
    p.inputs[kJournalKey] = digest(kJournalKey);
    p.params = {{"evaluation", config_.evaluation}};
  } else if (stage == "report") {
    p.params = json::object();
  }
  return p;
}

std::string Pipeline::fingerprint(const std::string &stage, const Plan &p) const {
  return sha256_hex(json({{"stage", stage}, {"params", p.params}, {"inputs", p.inputs}}).dump());
}

bool Pipeline::up_to_date(const std::string &stage) const {
  auto it = manifest_.stages.find(stage);
  if (it == manifest_.stages.end()) return false;
  try {
    if (fingerprint(stage, plan(stage)) != it->second.fingerprint) return false;
  } catch (const Error &) {
    return false;
  }
  for (const auto &[key, d] : it->second.outputs) {
    if (digest(key) != d) return false;
  }
  return true;
}

void Pipeline::check_dependencies(const std::string &stage) const {
  bool biasing = !biasing_entries(config_.biasing).empty();
  for (const auto &dep : dependencies(stage, biasing)) {
    auto it = manifest_.stages.find(dep);
    if (it == manifest_.stages.end()) {
      throw Error(ErrorCode::kMissingInput,
                  "`" + stage + "` requires " + stage_info(dep).artifact + " (run `" + dep + "`)", dep);
    }
    for (const auto &[key, d] : it->second.outputs) {
      if (digest(key) != d) {
        throw Error(ErrorCode::kStaleInput,
                    key + " changed since `" + dep + "` wrote it (re-run `" + dep + "`)", key);
      }
    }
    if (!up_to_date(dep)) {
      throw Error(ErrorCode::kStaleInput,
                  "`" + dep + "` is out of date with its inputs or settings (re-run `" + dep + "`)", dep);
    }
  }
}

void Pipeline::save_manifest() const {
  fs::create_directories(run_dir());
  write_file_atomic(manifest_path(), to_json(manifest_).dump(2) + "\n");
}

std::string Pipeline::write(const std::string &relative, std::string_view data) {
  auto path = run_dir() / relative;
  fs::create_directories(path.parent_path());
  write_file_atomic(path, data);
  return sha256_hex(data);
}

bool Pipeline::execute_stage(const std::string &stage) {
  stage_info(stage);
  check_dependencies(stage);
  Plan p = plan(stage);
  std::string fp = fingerprint(stage, p);
  if (up_to_date(stage)) return false;

  // A stage owns its previous outputs. Models are removed before retraining;
  // files it no longer produces are removed once the new run succeeds.
  std::map<std::string, std::string> previous;
  if (auto it = manifest_.stages.find(stage); it != manifest_.stages.end()) {
    previous = std::move(it->second.outputs);
    manifest_.stages.erase(it);
    save_manifest();
    for (const auto &[key, d] : previous) {
      if (starts_with(key, kModelKey)) {
        fs::remove_all(config_.registry / key.substr(std::string(kModelKey).size()));
      }
    }
  }

  StageRecord record;
  record.started_at = utc_timestamp();
  std::map<std::string, std::string> outputs;
  if (stage == "compose") outputs = run_compose();
  else if (stage == "stats") outputs = run_stats();
  else if (stage == "bias") outputs = run_bias();
  else if (stage == "prompt") outputs = run_prompt();
  else if (stage == "embed") outputs = run_embed();
  else if (stage == "cluster") outputs = run_cluster();
  else if (stage == "eval") outputs = run_eval();
  else outputs = run_report();

  for (const auto &[key, d] : previous) {
    if (!starts_with(key, kModelKey) && !outputs.count(key)) fs::remove(run_dir() / key);
  }
  record.fingerprint = fp;
  record.inputs = std::move(p.inputs);
  record.outputs = std::move(outputs);
  record.completed_at = utc_timestamp();
  manifest_.stages[stage] = std::move(record);
  manifest_.config_digest = sha256_hex(config_.to_json().dump());
  manifest_.seeds = config_.seeds;
  if (stage == "embed") manifest_.models = models();
  if (stage == "prompt") manifest_.templates = templates();
  save_manifest();
  return true;
}

void Pipeline::run_all() {
  for (const auto &s : stage_names()) execute_stage(s);
}

std::map<std::string, std::string> Pipeline::run_compose() {
  const auto &c = config_.corpus;
  NormalizationRuleset rules;
  if (c.contains("normalization")) rules = normalization_rules_from_json(inline_or_file(c["normalization"], config_));
  SegmentationRules seg;
  if (c.contains("segmentation")) seg = segmentation_rules_from_json(inline_or_file(c["segmentation"], config_));

  std::vector<Document> documents;
  std::set<std::string> ids;
  auto load = [&](const char *list, SourceKind kind) {
    if (!c.contains(list)) return;
    for (const auto &d : c[list]) {
      auto id = d.at("doc_id").get<std::string>();
      if (!ids.insert(id).second) throw Error(ErrorCode::kConfig, "duplicate doc_id " + id, "doc_id");
      documents.push_back(normalize_document(id, d.value("title", id), kind,
                                             read_file(config_.resolve(d.at("path").get<std::string>())),
                                             rules));
    }
  };
  load("target", SourceKind::kTargetText);
  load("expert_books", SourceKind::kExpertBook);
  if (documents.empty()) throw Error(ErrorCode::kConfig, "corpus has no documents", "corpus");

  std::vector<EntityAnnotation> annotations;
  if (c.contains("annotations")) {
    for (const auto &a : read_jsonl(config_.resolve(c["annotations"].get<std::string>()))) {
      annotations.push_back({a.at("doc_id").get<std::string>(), a.at("start").get<size_t>(),
                             a.at("end").get<size_t>(), a.at("entity_id").get<std::string>()});
    }
  }
  std::vector<AnnotatedSentence> sentences;
  std::vector<Document> experts;
  for (const auto &d : documents) {
    if (d.source_kind == SourceKind::kExpertBook) {
      experts.push_back(d);
      continue;
    }
    auto s = segment_sentences(d, seg);
    sentences.insert(sentences.end(), s.begin(), s.end());
  }
  sentences = attach_entities(std::move(sentences), annotations);

  InstanceOptions opts;
  opts.max_entities = c.value("max_entities", size_t{3});
  std::vector<RelationInstance> instances;
  for (const auto &s : sentences) {
    for (auto &r : generate_instances(s, opts)) instances.push_back(std::move(r));
  }
  if (c.contains("gold")) {
    std::map<std::string, RelationInstance *> by_id;
    for (auto &r : instances) by_id[r.instance_id] = &r;
    for (const auto &g : read_jsonl(config_.resolve(c["gold"].get<std::string>()))) {
      auto id = g.at("instance_id").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw Error(ErrorCode::kValidation, "gold label for unknown instance " + id, "instance_id");
      }
      it->second->gold_label = g.at("label").get<std::string>();
    }
  }
  auto chunks = build_biasing_chunks(experts, seg, word_token_counter(), c.value("chunk_max_tokens", size_t{128}));

  auto lines = [](const auto &items) {
    std::vector<json> out;
    for (const auto &x : items) out.push_back(to_json(x));
    return to_jsonl(out);
  };
  std::map<std::string, std::string> out;
  out["documents.jsonl"] = write("documents.jsonl", lines(documents));
  out["sentences.jsonl"] = write("sentences.jsonl", lines(sentences));
  out["instances.jsonl"] = write("instances.jsonl", lines(instances));
  out["chunks.jsonl"] = write("chunks.jsonl", lines(chunks.chunks));
  json warnings = json::array();
  for (const auto &w : chunks.warnings) {
    warnings.push_back({{"doc_id", w.doc_id}, {"start", w.start}, {"end", w.end}, {"message", w.message}});
  }
  ordered_json summary;
  summary["documents"] = documents.size();
  summary["sentences"] = sentences.size();
  summary["instances"] = instances.size();
  summary["chunks"] = chunks.chunks.size();
  summary["chunk_warnings"] = warnings;
  out["compose_summary.json"] = write("compose_summary.json", summary.dump(2) + "\n");
  return out;
}

std::map<std::string, std::string> Pipeline::run_stats() {
  std::vector<Document> documents;
  for (const auto &j : read_jsonl(run_dir() / "documents.jsonl")) documents.push_back(document_from_json(j));
  std::vector<AnnotatedSentence> target;
  for (const auto &j : read_jsonl(run_dir() / "sentences.jsonl")) target.push_back(sentence_from_json(j));
  SegmentationRules seg;
  if (config_.corpus.contains("segmentation")) {
    seg = segmentation_rules_from_json(inline_or_file(config_.corpus["segmentation"], config_));
  }
  auto all = target;
  for (const auto &d : documents) {
    if (d.source_kind != SourceKind::kExpertBook) continue;
    auto s = segment_sentences(d, seg);
    all.insert(all.end(), s.begin(), s.end());
  }
  std::map<std::string, size_t> kinds;
  for (const auto &j : read_jsonl(run_dir() / "instances.jsonl")) ++kinds[j.at("kind").get<std::string>()];
  ordered_json stats;
  stats["entity_histogram"] = ordered_json(to_json(entity_histogram(target)));
  stats["word_stats"] = ordered_json(to_json(word_stats(documents, all)));
  stats["instances_by_kind"] = kinds;
  return {{"stats.json", write("stats.json", stats.dump(2) + "\n")}};
}

std::map<std::string, std::string> Pipeline::run_bias() {
  std::map<std::string, std::string> out;
  auto configs = biasing_configs(config_);
  if (configs.empty()) return out;
  std::vector<BiasingChunk> chunks;
  for (const auto &j : read_jsonl(run_dir() / "chunks.jsonl")) chunks.push_back(chunk_from_json(j));
  ModelRegistry registry(config_.registry);
  for (auto &cfg : configs) {
    if (cfg.output_model_id.empty()) cfg.output_model_id = cfg.base_model_id + "-biased";
    if (registry.contains(cfg.output_model_id)) {
      throw Error(ErrorCode::kAlreadyExists,
                  "model " + cfg.output_model_id +
                      " is already registered; remove it or choose another output_model",
                  "output_model");
    }
    auto report = run_biasing(registry, cfg, chunks);
    auto rel = "bias/" + report.output_model_id + ".json";
    out[rel] = write(rel, to_json(report).dump(2) + "\n");
    out[kModelKey + report.output_model_id] = digest(kModelKey + report.output_model_id);
  }
  return out;
}

std::map<std::string, std::string> Pipeline::run_prompt() {
  auto tmpls = resolve_templates(templates(), custom_templates(config_));
  std::map<std::string, AnnotatedSentence> sentences;
  for (const auto &j : read_jsonl(run_dir() / "sentences.jsonl")) {
    auto s = sentence_from_json(j);
    sentences[s.sentence_id] = std::move(s);
  }
  std::vector<json> lines;
  for (const auto &j : read_jsonl(run_dir() / "instances.jsonl")) {
    auto r = instance_from_json(j);
    const auto &s = sentences.at(r.sentence_id);
    for (const auto &t : tmpls) {
      if ((t.arity == Arity::kPair) != (r.kind == InstanceKind::kPair)) continue;
      lines.push_back(to_json(fill_template(t, r, s)));
    }
  }
  return {{"prompts.jsonl", write("prompts.jsonl", to_jsonl(lines))}};
}

std::map<std::string, std::string> Pipeline::run_embed() {
  ModelRegistry registry(config_.registry);
  std::set<std::string> from_bias;
  for (auto &cfg : biasing_configs(config_)) {
    from_bias.insert(cfg.output_model_id.empty() ? cfg.base_model_id + "-biased" : cfg.output_model_id);
  }
  std::vector<FilledPrompt> prompts;
  for (const auto &j : read_jsonl(run_dir() / "prompts.jsonl")) prompts.push_back(filled_prompt_from_json(j));
  size_t top_k = config_.prompting.value("top_k", size_t{10});
  bool binary = config_.prompting.value("binary_vectors", false);

  std::map<std::string, std::string> out;
  for (const auto &id : models()) {
    if (!registry.contains(id)) {
      if (from_bias.count(id)) {
        throw Error(ErrorCode::kMissingInput, "`embed` requires model " + id + " (run `bias`)", "models");
      }
      throw Error(ErrorCode::kNotFound, "no model '" + id + "' in the registry", "models");
    }
    auto enc = registry.load(id);
    if (config_.seeds.mock) {
      if (auto *mock = dynamic_cast<MockEncoder *>(enc.get())) mock->set_seed(*config_.seeds.mock);
    }
    const auto &h = enc->handle();
    size_t max_len = std::min(config_.prompting.value("max_length", h.max_sequence_length), h.max_sequence_length);
    std::vector<json> embeddings, predictions;
    json dropped = json::array();
    size_t truncated = 0;
    for (const auto &p : prompts) {
      auto q = truncate_for_budget(p, *enc, max_len);
      if (q.dropped) {
        dropped.push_back({{"instance_id", q.instance_id}, {"template_id", q.template_id}});
        continue;
      }
      truncated += q.truncated;
      auto tp = enc->tokenize(render(q, h), q.instance_id, q.template_id, q.truncated);
      embeddings.push_back(to_json(enc->mask_hidden_state(tp), binary));
      json preds = json::array();
      for (const auto &t : enc->predict_masked_topk(tp, std::min(top_k, h.vocabulary_size))) {
        preds.push_back(to_json(t));
      }
      ordered_json rec;
      rec["instance_id"] = q.instance_id;
      rec["model_id"] = id;
      rec["template_id"] = q.template_id;
      rec["truncated"] = q.truncated;
      rec["predictions"] = ordered_json(preds);
      predictions.push_back(json(rec));
    }
    ordered_json summary;
    summary["model_id"] = id;
    summary["backend"] = enc->backend();
    summary["prompts"] = prompts.size();
    summary["embedded"] = embeddings.size();
    summary["truncated"] = truncated;
    summary["dropped"] = ordered_json(dropped);
    summary["max_length"] = max_len;
    // Every prompt, P0 included, is framed with the sequence-start token.
    summary["sequence_start_token"] = enc->tokenizer().id_to_token(enc->tokenizer().specials().cls_id);
    summary["mock_seed"] = config_.seeds.mock ? json(*config_.seeds.mock) : json(nullptr);
    auto e = "embeddings/" + id + ".jsonl", pr = "predictions/" + id + ".jsonl",
         s = "embeddings/" + id + ".summary.json";
    out[e] = write(e, to_jsonl(embeddings));
    out[pr] = write(pr, to_jsonl(predictions));
    out[s] = write(s, summary.dump(2) + "\n");
  }
  return out;
}

std::map<std::string, std::string> Pipeline::run_cluster() {
  auto config = clustering_config(config_);
  auto groups = template_groups(resolve_templates(templates(), custom_templates(config_)));
  if (groups.empty()) throw Error(ErrorCode::kConfig, "no templates to cluster", "templates");
  const auto &embedded = manifest_.stages.at("embed").outputs;
  std::map<std::string, std::string> out;
  for (const auto &model : cluster_models()) {
    auto file = "embeddings/" + model + ".jsonl";
    if (!embedded.count(file)) {
      throw Error(ErrorCode::kMissingInput,
                  "`cluster` requires mask embeddings for model " + model + " (run `embed`)", "models");
    }
    std::vector<MaskEmbedding> all;
    for (const auto &j : read_jsonl(run_dir() / file)) all.push_back(mask_embedding_from_json(j));
    for (const auto &group : groups) {
      std::vector<MaskEmbedding> chosen;
      for (const auto &e : all) {
        if (std::find(group.begin(), group.end(), e.template_id) != group.end()) chosen.push_back(e);
      }
      auto result = kmeans_fit(chosen, config);
      ordered_json rec;
      rec["run_id"] = run_name(model, group);
      rec["model_id"] = model;
      rec["templates"] = group;
      rec["result"] = ordered_json(to_json(result));
      auto rel = "clusters/" + run_name(model, group) + ".json";
      out[rel] = write(rel, rec.dump(2) + "\n");
    }
  }
  return out;
}

std::map<std::string, std::string> Pipeline::run_eval() {
  if (!config_.evaluation.contains("positive_label")) {
    throw Error(ErrorCode::kConfig, "evaluation.positive_label is required", "positive_label");
  }
  auto positive = config_.evaluation["positive_label"].get<std::string>();
  GoldLabels gold;
  for (const auto &j : read_jsonl(run_dir() / "instances.jsonl")) {
    auto r = instance_from_json(j);
    if (r.gold_label) gold[r.instance_id] = *r.gold_label;
  }
  for (const auto &[id, g] : load_review_state(journal_path()).active_labels) gold[id] = g.label;

  std::map<std::string, std::string> out;
  std::vector<EvalReport> reports;
  ordered_json runs = ordered_json::array();
  for (const auto &[key, d] : manifest_.stages.at("cluster").outputs) {
    auto rec = read_json(run_dir() / key);
    auto result = clustering_result_from_json(rec.at("result"));
    Assignments labelled;
    size_t unlabelled = 0;
    for (const auto &[id, c] : result.assignments) {
      if (gold.count(id)) {
        labelled[id] = c;
      } else {
        ++unlabelled;
      }
    }
    auto report = evaluate(rec.at("run_id"), rec.at("model_id"), rec.at("templates"), labelled, gold,
                           result.config.k, positive);
    auto rel = "eval/" + report.run_id + ".json";
    out[rel] = write(rel, to_json(report).dump(2) + "\n");
    ordered_json r;
    r["run_id"] = report.run_id;
    r["model_id"] = report.model_id;
    r["templates"] = report.templates;
    r["evaluated"] = labelled.size();
    r["unlabelled"] = unlabelled;
    runs.push_back(r);
    reports.push_back(std::move(report));
  }

  // Baseline/biased pairs: registry lineage plus any configured pairs.
  std::set<std::pair<std::string, std::string>> pairs;
  ModelRegistry registry(config_.registry);
  for (const auto &r : reports) {
    if (registry.contains(r.model_id)) {
      auto parent = registry.lookup(r.model_id).parent_model;
      if (!parent.empty()) pairs.insert({parent, r.model_id});
    }
  }
  if (config_.evaluation.contains("comparisons")) {
    for (const auto &p : config_.evaluation["comparisons"]) pairs.insert({p.at(0), p.at(1)});
  }
  ordered_json comparisons = ordered_json::array();
  for (const auto &[a, b] : pairs) {
    for (const auto &ra : reports) {
      if (ra.model_id != a) continue;
      for (const auto &rb : reports) {
        if (rb.model_id != b || rb.templates != ra.templates) continue;
        ordered_json c = ordered_json(to_json(compare_runs(ra, rb)));
        c["baseline_model"] = a;
        c["biased_model"] = b;
        c["templates"] = ra.templates;
        comparisons.push_back(c);
      }
    }
  }
  ordered_json summary;
  summary["positive_label"] = positive;
  summary["runs"] = runs;
  summary["comparisons"] = comparisons;
  out["eval/summary.json"] = write("eval/summary.json", summary.dump(2) + "\n");
  return out;
}

std::map<std::string, std::string> Pipeline::run_report() {
  return {{"report.txt", write("report.txt", make_report())}};
}

std::string Pipeline::make_report() const {
  auto it = manifest_.stages.find("eval");
  if (it == manifest_.stages.end()) {
    throw Error(ErrorCode::kMissingInput, "the report requires evaluation reports (run `eval`)", "eval");
  }
  std::vector<EvalReport> reports;
  json summary;
  for (const auto &[key, d] : it->second.outputs) {
    if (key == "eval/summary.json") {
      summary = read_json(run_dir() / key);
    } else {
      reports.push_back(eval_report_from_json(read_json(run_dir() / key)));
    }
  }
  std::string out = "Run " + manifest_.run_id + "\n\nRelation extraction (positive label: " +
                    summary.value("positive_label", std::string()) + ")\n";
  out += format_metrics_table(reports);

  out += "\nBaseline vs biased\n";
  const auto &comparisons = summary.value("comparisons", json::array());
  if (comparisons.empty()) out += "  none\n";
  for (const auto &c : comparisons) {
    std::string tmpl;
    for (const auto &t : c["templates"]) tmpl += (tmpl.empty() ? "" : "+") + t.get<std::string>();
    out += "  " + c["baseline_model"].get<std::string>() + " -> " + c["biased_model"].get<std::string>() +
           " [" + tmpl + "]: accuracy " + fmt("%+.4f", c["accuracy_delta"]) + ", precision " +
           fmt("%+.4f", c["precision_delta"]) + ", recall " + fmt("%+.4f", c["recall_delta"]) + ", F1 " +
           fmt("%+.4f", c["f1_delta"]) + "\n";
    out += "    both correct " + std::to_string(c["both_correct"].get<size_t>()) + ", only baseline " +
           std::to_string(c["only_a"].get<size_t>()) + ", only biased " +
           std::to_string(c["only_b"].get<size_t>()) + ", neither " +
           std::to_string(c["neither"].get<size_t>()) + "\n";
  }

  if (fs::exists(run_dir() / "stats.json")) {
    auto stats = read_json(run_dir() / "stats.json");
    const auto &h = stats["entity_histogram"];
    out += "\nEntities per sentence (" + std::to_string(h.value("total_sentences", 0)) + " sentences)\n";
    std::vector<std::pair<size_t, size_t>> rows;
    for (const auto &[k, n] : h["counts"].items()) rows.push_back({std::stoul(k), n.get<size_t>()});
    std::sort(rows.begin(), rows.end());
    for (const auto &[k, n] : rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "  %3zu  %5zu\n", k, n);
      out += buf;
    }
    out += "\nWords per sentence\n";
    const auto &ws = stats["word_stats"]["rows"];
    auto columns = [](const std::string &s) {
      return static_cast<size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
    };
    size_t width = 8;
    for (const auto &r : ws) width = std::max(width, columns(r["title"].get<std::string>()));
    auto pad = [&](std::string s, size_t w) {
      if (columns(s) < w) s.append(w - columns(s), ' ');
      return s;
    };
    out += "  " + pad("Document", width) + "  Mean    Std     Median  Words   Sentences\n";
    for (const auto &r : ws) {
      out += "  " + pad(r["title"].get<std::string>(), width) + "  " + pad(fmt("%.2f", r["mean"]), 6) + "  " +
             pad(fmt("%.2f", r["std"]), 6) + "  " + pad(fmt("%.1f", r["median"]), 6) + "  " +
             pad(std::to_string(r["total_words"].get<size_t>()), 6) + "  " +
             std::to_string(r["total_sentences"].get<size_t>()) + "\n";
    }
  }
  return out;
}

std::unique_ptr<ReviewService> Pipeline::make_review_service() const {
  for (const char *stage : {"compose", "embed"}) {
    if (!manifest_.stages.count(stage)) {
      throw Error(ErrorCode::kMissingInput,
                  "`serve` requires " + stage_info(stage).artifact + " (run `" + stage + "`)", stage);
    }
  }
  auto catalog = load_review_catalog(run_dir());
  ReviewOptions opts;
  const json &s = config_.serve;
  if (s.contains("label_set")) {
    opts.label_set = string_list(s["label_set"], "label_set");
  } else if (config_.evaluation.contains("label_set")) {
    opts.label_set = string_list(config_.evaluation["label_set"], "label_set");
  } else {
    std::set<std::string> labels;
    for (const auto &r : catalog.instances) {
      if (r.gold_label) labels.insert(*r.gold_label);
    }
    opts.label_set.assign(labels.begin(), labels.end());
  }
  opts.top_k = s.value("top_k", size_t{10});
  opts.page_size = s.value("page_size", size_t{20});
  auto registry = std::make_shared<ModelRegistry>(config_.registry);
  opts.model_exists = [registry](const std::string &id) { return registry->contains(id); };
  return std::make_unique<ReviewService>(std::move(catalog), std::move(opts), journal_path());
}

}  // namespace histore
