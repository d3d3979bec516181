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

#include <cstdio>
#include <set>

#include "histore/error.h"
#include "histore/pipeline.h"
#include "histore/registry.h"

using namespace histore;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("histore_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

std::string message_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.what();
  }
  FAIL("expected an Error");
  return {};
}

PipelineConfig mock_only(const fs::path &dir, PipelineOverrides o = {}) {
  FixtureOptions f;
  f.with_trainable_model = false;
  return load_pipeline_config(write_fixture(dir, f), o);
}

std::string four(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Table rows of the report: run id followed by four metric columns.
std::map<std::string, std::vector<std::string>> table_rows(const std::string &report) {
  std::map<std::string, std::vector<std::string>> rows;
  bool in_table = false;
  for (const auto &line : split(report, '\n')) {
    if (line.rfind("Model", 0) == 0) {
      in_table = true;
      continue;
    }
    if (!in_table) continue;
    auto cols = split_whitespace(line);
    if (cols.size() != 5) break;
    rows[std::string(cols[0])] = {cols.begin() + 1, cols.end()};
  }
  return rows;
}

}  // namespace

TEST_CASE("a stage run before its dependency names the stage to run") {
  TempDir tmp("pipe_missing");
  Pipeline p(mock_only(tmp.path));
  CHECK(message_of([&] { p.execute_stage("eval"); }) == "`eval` requires clustering result (run `cluster`)");
  CHECK(code_of([&] { p.execute_stage("eval"); }) == ErrorCode::kMissingInput);
  CHECK(code_of([&] { p.execute_stage("prompt"); }) == ErrorCode::kMissingInput);
  CHECK(code_of([&] { p.execute_stage("frobnicate"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { p.make_report(); }) == ErrorCode::kMissingInput);
  CHECK(code_of([&] { p.make_review_service(); }) == ErrorCode::kMissingInput);
  CHECK(!fs::exists(p.manifest_path()));
}

TEST_CASE("a full run records every stage with digests matching the artifacts") {
  TempDir tmp("pipe_full");
  Pipeline p(load_pipeline_config(write_fixture(tmp.path)));
  p.run_all();
  auto manifest = run_manifest_from_json(read_json(p.manifest_path()));
  REQUIRE(manifest.stages.size() == stage_names().size());
  for (const auto &stage : stage_names()) {
    CAPTURE(stage);
    REQUIRE(manifest.stages.count(stage));
    const auto &r = manifest.stages.at(stage);
    CHECK(r.fingerprint.size() == 64);
    CHECK(!r.completed_at.empty());
    CHECK(p.up_to_date(stage));
    for (const auto &[key, digest] : r.outputs) {
      if (key.rfind("model:", 0) == 0) continue;
      CAPTURE(key);
      CHECK(file_sha256(p.run_dir() / key) == digest);
    }
  }
  CHECK(manifest.stages.at("bias").outputs.count("model:tiny-bert-biased"));
  CHECK(manifest.models == std::vector<std::string>{"mock-keyed", "mock-random", "tiny-bert", "tiny-bert-biased"});
  CHECK(manifest.templates == std::vector<std::string>{"P1", "P_anaphoric"});
  CHECK(read_jsonl(p.run_dir() / "instances.jsonl").size() == 200);
  // Every instance gets one prompt: pairs through P1, singletons through
  // P_anaphoric.
  CHECK(read_jsonl(p.run_dir() / "prompts.jsonl").size() == 200);
  auto summary = read_json(p.run_dir() / "embeddings" / "mock-keyed.summary.json");
  CHECK(summary["embedded"] == 200);
  CHECK(summary["dropped"].empty());
  CHECK(summary["sequence_start_token"] == "[CLS]");

  // The biased model is compared against the base it was trained from.
  auto eval = read_json(p.run_dir() / "eval" / "summary.json");
  REQUIRE(eval["comparisons"].size() == 1);
  CHECK(eval["comparisons"][0]["baseline_model"] == "tiny-bert");
  CHECK(eval["comparisons"][0]["biased_model"] == "tiny-bert-biased");
  ModelRegistry registry(p.config().registry);
  CHECK(registry.lineage("tiny-bert-biased").size() == 2);
}

TEST_CASE("re-running an unchanged stage is a no-op") {
  TempDir tmp("pipe_idem");
  Pipeline p(mock_only(tmp.path));
  p.run_all();
  auto before = read_file(p.manifest_path());
  for (const auto &stage : stage_names()) CHECK_FALSE(p.execute_stage(stage));
  CHECK(read_file(p.manifest_path()) == before);

  // A fresh pipeline over the same directory agrees.
  Pipeline again(mock_only(tmp.path));
  for (const auto &stage : stage_names()) CHECK_FALSE(again.execute_stage(stage));
  CHECK(read_file(p.manifest_path()) == before);
}

TEST_CASE("an edited artifact makes downstream stages refuse to run") {
  TempDir tmp("pipe_stale");
  Pipeline p(mock_only(tmp.path));
  p.run_all();
  {
    std::string s = read_file(p.run_dir() / "instances.jsonl");
    write_file_atomic(p.run_dir() / "instances.jsonl", s + "\n");
  }
  CHECK(code_of([&] { p.execute_stage("prompt"); }) == ErrorCode::kStaleInput);
  CHECK(message_of([&] { p.execute_stage("prompt"); }).find("instances.jsonl") != std::string::npos);
  CHECK_FALSE(p.up_to_date("compose"));
  CHECK(p.execute_stage("compose"));
  CHECK_FALSE(p.execute_stage("prompt"));  // identical content again

  // A changed setting makes the stage itself out of date, and its
  // dependants stale until it re-runs.
  Pipeline k3(mock_only(tmp.path, {.k = 3}));
  CHECK_FALSE(k3.up_to_date("cluster"));
  CHECK(k3.execute_stage("cluster"));
  Pipeline k2(mock_only(tmp.path));
  CHECK(code_of([&] { k2.execute_stage("eval"); }) == ErrorCode::kStaleInput);
}

TEST_CASE("a changed source file marks compose out of date") {
  TempDir tmp("pipe_source");
  Pipeline p(mock_only(tmp.path));
  p.execute_stage("compose");
  p.execute_stage("prompt");
  auto gold = tmp.path / "corpus" / "gold.jsonl";
  auto lines = read_jsonl(gold);
  lines.pop_back();
  write_file_atomic(gold, to_jsonl(lines));
  CHECK_FALSE(p.up_to_date("compose"));
  CHECK(code_of([&] { p.execute_stage("prompt"); }) == ErrorCode::kStaleInput);
  CHECK(p.execute_stage("compose"));
}

TEST_CASE("the report has one row per run and matches the eval artifacts") {
  SUBCASE("one run") {
    TempDir tmp("pipe_report1");
    Pipeline p(mock_only(tmp.path, {.models = std::vector<std::string>{"mock-keyed"}}));
    p.run_all();
    auto report = read_file(p.run_dir() / "report.txt");
    CHECK(report == p.make_report());
    auto rows = table_rows(report);
    REQUIRE(rows.size() == 1);
    CHECK(rows.count("mock-keyed__P1"));
    CHECK(report.find("Baseline vs biased\n  none\n") != std::string::npos);
  }
  SUBCASE("two runs") {
    TempDir tmp("pipe_report2");
    Pipeline p(mock_only(tmp.path));
    p.run_all();
    auto report = read_file(p.run_dir() / "report.txt");
    auto rows = table_rows(report);
    REQUIRE(rows.size() == 2);
    for (const auto &run : {"mock-keyed__P1", "mock-random__P1"}) {
      CAPTURE(run);
      REQUIRE(rows.count(run));
      auto m = read_json(p.run_dir() / "eval" / (std::string(run) + ".json"))["metrics"];
      CHECK(rows[run] == std::vector<std::string>{four(m["accuracy"]), four(m["precision"]),
                                                  four(m["recall"]), four(m["f1"])});
    }
    CHECK(rows["mock-keyed__P1"][0] == "1.0000");
    CHECK(report.find("Entities per sentence (185 sentences)") != std::string::npos);
  }
}

TEST_CASE("config errors") {
  TempDir tmp("pipe_config");
  auto path = write_fixture(tmp.path, {.with_trainable_model = false});
  auto j = read_json(path);
  j["extras"] = json::object();
  CHECK(code_of([&] { pipeline_config_from_json(j, tmp.path); }) == ErrorCode::kConfig);
  j.erase("extras");
  j["run_id"] = "../escape";
  CHECK(code_of([&] { pipeline_config_from_json(j, tmp.path); }) == ErrorCode::kConfig);
  j["run_id"] = "ok";
  j["evaluation"].erase("positive_label");
  Pipeline p(pipeline_config_from_json(j, tmp.path));
  for (const char *s : {"compose", "prompt", "embed", "cluster"}) p.execute_stage(s);
  CHECK(code_of([&] { p.execute_stage("eval"); }) == ErrorCode::kConfig);

  auto c = pipeline_config_from_json(j, tmp.path, {.seed = 11, .templates = std::vector<std::string>{"P2"}, .k = 4});
  CHECK(c.seeds.masking == 11);
  CHECK(c.seeds.clustering == 11);
  CHECK(c.seeds.mock == 11u);
  CHECK(c.prompting["templates"] == json::array({"P2"}));
  CHECK(c.clustering["k"] == 4);
}

TEST_CASE("biasing refuses to overwrite a model it did not produce") {
  TempDir tmp("pipe_bias");
  auto config = load_pipeline_config(write_fixture(tmp.path));
  ModelRegistry registry(config.registry);
  registry.import_model(registry.model_dir("mock-keyed"), "tiny-bert-biased");
  Pipeline p(config);
  p.execute_stage("compose");
  CHECK(code_of([&] { p.execute_stage("bias"); }) == ErrorCode::kAlreadyExists);
  p.execute_stage("prompt");
  CHECK(message_of([&] { p.execute_stage("embed"); }) == "`embed` requires biased models (run `bias`)");
}

TEST_CASE("active review selections choose the clustered models") {
  TempDir tmp("pipe_select");
  Pipeline p(mock_only(tmp.path));
  p.run_all();
  {
    auto service = p.make_review_service();
    ModelSelection s;
    s.model_id = "mock-keyed";
    s.annotator_id = "ana";
    service->record_model_selection(s);
  }
  CHECK_FALSE(p.up_to_date("cluster"));
  CHECK(p.execute_stage("cluster"));
  auto outputs = p.manifest().stages.at("cluster").outputs;
  CHECK(outputs.size() == 1);
  CHECK(outputs.count("clusters/mock-keyed__P1.json"));
  CHECK(p.execute_stage("eval"));
  CHECK(!fs::exists(p.run_dir() / "eval" / "mock-random__P1.json"));
}
