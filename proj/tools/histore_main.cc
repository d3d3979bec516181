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


// histore: stage-by-stage driver for the relation extraction pipeline.

#include <cstdio>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "histore/corpus.h"
#include "histore/error.h"
#include "histore/pipeline.h"
#include "histore/registry.h"
#include "histore/transformer.h"
// After Eigen: resolv.h, pulled in here, defines a _res macro.
#include "httplib.h"

namespace {

using namespace histore;

struct Globals {
  std::string config = "config.json";
  std::string run_id;
  int64_t seed = -1;
  std::vector<std::string> models;
  std::vector<std::string> templates;
  size_t k = 0;
};

PipelineOverrides overrides(const Globals &g) {
  PipelineOverrides o;
  if (!g.run_id.empty()) o.run_id = g.run_id;
  if (g.seed >= 0) o.seed = static_cast<uint64_t>(g.seed);
  if (!g.models.empty()) o.models = g.models;
  if (!g.templates.empty()) o.templates = g.templates;
  if (g.k > 0) o.k = g.k;
  return o;
}

Pipeline open(const Globals &g) { return Pipeline(load_pipeline_config(g.config, overrides(g))); }

void run_stage(const Globals &g, const std::string &stage) {
  auto p = open(g);
  bool ran = p.execute_stage(stage);
  std::printf("%s: %s (%s)\n", stage.c_str(), ran ? "done" : "up to date", p.run_dir().c_str());
  if (stage == "report") std::fputs(read_file(p.run_dir() / "report.txt").c_str(), stdout);
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingInput:
    case ErrorCode::kStaleInput:
      return 3;
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Open relation extraction over annotated historical Spanish text"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config file")->capture_default_str();
  app.add_option("--run-id", g.run_id, "Run id (default: from config)");
  app.add_option("--seed", g.seed, "Sets the masking, clustering and mock seeds");
  app.add_option("--models", g.models, "Models to embed and cluster");
  app.add_option("--templates", g.templates, "Template ids to fill");
  app.add_option("--k", g.k, "Number of clusters");

  for (const auto &stage : stage_names()) {
    app.add_subcommand(stage, "Run the " + stage + " stage")->callback([&g, stage] { run_stage(g, stage); });
  }
  app.add_subcommand("run-all", "Run every stage in order")->callback([&g] {
    auto p = open(g);
    for (const auto &stage : stage_names()) {
      bool ran = p.execute_stage(stage);
      std::printf("%s: %s\n", stage.c_str(), ran ? "done" : "up to date");
    }
    std::fputs(read_file(p.run_dir() / "report.txt").c_str(), stdout);
  });

  auto *serve = app.add_subcommand("serve", "Serve the review API for a run");
  std::string host;
  int port = 0;
  serve->add_option("--host", host, "Bind address (default: serve.host or 127.0.0.1)");
  serve->add_option("--port", port, "Port (default: serve.port or 8080)");
  serve->callback([&] {
    auto p = open(g);
    auto service = p.make_review_service();
    const auto &s = p.config().serve;
    if (host.empty()) host = s.value("host", std::string("127.0.0.1"));
    if (port == 0) port = s.value("port", 8080);
    httplib::Server server;
    service->mount(server);
    std::printf("serving run %s on http://%s:%d (journal %s)\n", p.manifest().run_id.c_str(), host.c_str(),
                port, p.journal_path().c_str());
    std::fflush(stdout);
    if (!server.listen(host, port)) {
      throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
    }
  });

  auto *fixture = app.add_subcommand("fixture", "Write a synthetic corpus, model registry and config");
  std::string fixture_dir;
  FixtureOptions fo;
  bool no_trainable = false;
  fixture->add_option("dir", fixture_dir, "Output directory")->required();
  fixture->add_option("--fixture-seed", fo.seed, "Corpus and model seed")->capture_default_str();
  fixture->add_flag("--no-trainable", no_trainable, "Skip the tiny trainable encoder");
  fixture->callback([&] {
    fo.with_trainable_model = !no_trainable;
    std::printf("%s\n", write_fixture(fixture_dir, fo).c_str());
  });

  auto *import = app.add_subcommand("import-model", "Copy a checkpoint directory into the registry");
  std::string source, import_id;
  import->add_option("source", source, "Checkpoint directory")->required();
  import->add_option("model_id", import_id, "Registry id")->required();
  import->callback([&] {
    auto p = open(g);
    ModelRegistry registry(p.config().registry);
    auto m = registry.import_model(source, import_id);
    std::printf("imported %s (%s)\n", m.model_id.c_str(), m.backend.c_str());
  });

  auto *init = app.add_subcommand("init-model", "Register a small randomly initialized encoder");
  std::string init_id;
  size_t vocab_words = 2000;
  uint64_t init_seed = 0;
  TransformerConfig dims;
  init->add_option("model_id", init_id, "Registry id")->required();
  init->add_option("--vocab-words", vocab_words, "Whole words in the vocabulary")->capture_default_str();
  init->add_option("--hidden", dims.hidden_size, "Hidden size")->capture_default_str();
  init->add_option("--layers", dims.num_layers, "Layers")->capture_default_str();
  init->add_option("--heads", dims.num_heads, "Attention heads")->capture_default_str();
  init->add_option("--intermediate", dims.intermediate_size, "Feed-forward size")->capture_default_str();
  init->add_option("--init-seed", init_seed, "Weight seed")->capture_default_str();
  init->callback([&] {
    auto p = open(g);
    auto docs = p.run_dir() / "documents.jsonl";
    if (!std::filesystem::exists(docs)) {
      throw Error(ErrorCode::kMissingInput, "`init-model` builds its vocabulary from the composed corpus (run `compose`)");
    }
    std::vector<std::string> texts;
    for (const auto &j : read_jsonl(docs)) texts.push_back(document_from_json(j).normalized_text);
    ModelRegistry registry(p.config().registry);
    auto enc = init_wordpiece_encoder(init_id, texts, vocab_words, dims, init_seed);
    registry.register_model(*enc, {init_id, "", "", nullptr, std::nullopt, ""});
    std::printf("registered %s (vocabulary %zu)\n", init_id.c_str(), enc->handle().vocabulary_size);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  } catch (const Error &e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(error_code_name(e.code())).c_str(), e.what());
    return exit_code(e.code());
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
