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


// Stage orchestration. Each stage reads the recorded outputs of the stages it
// depends on, writes its own artifacts atomically under the run directory and
// records content digests in the run manifest. A stage whose inputs and
// settings are unchanged is not re-run.

#ifndef HISTORE_PIPELINE_H_
#define HISTORE_PIPELINE_H_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "histore/review_service.h"
#include "histore/util.h"

namespace histore {

// Command-line values that take precedence over the config file.
struct PipelineOverrides {
  std::optional<std::string> run_id;
  std::optional<uint64_t> seed;  // sets every seed
  std::optional<std::vector<std::string>> models;
  std::optional<std::vector<std::string>> templates;
  std::optional<size_t> k;
};

struct Seeds {
  uint64_t masking = 0;
  uint64_t clustering = 0;
  // Unset keeps each mock model's stored seed.
  std::optional<uint64_t> mock;
};

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve against it
  std::string run_id = "run";
  std::filesystem::path output_dir;
  std::filesystem::path registry;
  Seeds seeds;
  json corpus = json::object();
  json biasing = json::array();
  json prompting = json::object();
  json clustering = json::object();
  json evaluation = json::object();
  json serve = json::object();

  // The effective settings, overrides applied, as recorded in the manifest.
  json to_json() const;
  std::filesystem::path resolve(const std::string &path) const;
};

PipelineConfig pipeline_config_from_json(const json &j, const std::filesystem::path &base_dir,
                                         const PipelineOverrides &overrides = {});
PipelineConfig load_pipeline_config(const std::filesystem::path &path,
                                    const PipelineOverrides &overrides = {});

struct StageRecord {
  std::string fingerprint;
  std::map<std::string, std::string> inputs;   // artifact key -> sha256
  std::map<std::string, std::string> outputs;  // artifact key -> sha256
  std::string started_at;
  std::string completed_at;
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  Seeds seeds;
  std::vector<std::string> models;
  std::vector<std::string> templates;
  std::map<std::string, StageRecord> stages;
  std::string created_at;
};

json to_json(const RunManifest &m);
RunManifest run_manifest_from_json(const json &j);

// compose, stats, bias, prompt, embed, cluster, eval, report.
const std::vector<std::string> &stage_names();

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const RunManifest &manifest() const { return manifest_; }
  const PipelineConfig &config() const { return config_; }
  std::filesystem::path run_dir() const;
  std::filesystem::path manifest_path() const { return run_dir() / "manifest.json"; }
  std::filesystem::path journal_path() const;

  // Returns false when the stage was already up to date. Throws kMissingInput
  // naming the stage to run first, or kStaleInput when an input artifact no
  // longer matches its recorded digest.
  bool execute_stage(const std::string &stage);
  // Runs every stage in order.
  void run_all();

  // Whether the stage's recorded fingerprint and outputs are current.
  bool up_to_date(const std::string &stage) const;

  // Comparison table, per-run comparisons and corpus statistics, built from
  // the eval and stats artifacts.
  std::string make_report() const;

  std::unique_ptr<ReviewService> make_review_service() const;

 private:
  struct Plan {
    json params;
    std::map<std::string, std::string> inputs;
  };
  Plan plan(const std::string &stage) const;
  std::string fingerprint(const std::string &stage, const Plan &p) const;
  void check_dependencies(const std::string &stage) const;
  std::string digest(const std::string &key) const;
  void save_manifest() const;

  std::vector<std::string> models() const;
  std::vector<std::string> cluster_models() const;
  std::vector<std::string> templates() const;

  std::map<std::string, std::string> run_compose();
  std::map<std::string, std::string> run_stats();
  std::map<std::string, std::string> run_bias();
  std::map<std::string, std::string> run_prompt();
  std::map<std::string, std::string> run_embed();
  std::map<std::string, std::string> run_cluster();
  std::map<std::string, std::string> run_eval();
  std::map<std::string, std::string> run_report();

  std::string write(const std::string &relative, std::string_view data);

  PipelineConfig config_;
  RunManifest manifest_;
};

struct FixtureOptions {
  uint64_t seed = 7;
  size_t expert_sentences = 50;
  // Adds the trainable tiny encoder and a biasing run to the config.
  bool with_trainable_model = true;
};

// Writes a synthetic corpus, a model registry with label-keyed and random
// mock encoders (plus a tiny trainable encoder), and a config tying them
// together. Returns the config path.
std::filesystem::path write_fixture(const std::filesystem::path &dir, const FixtureOptions &options = {});

}  // namespace histore

#endif  // HISTORE_PIPELINE_H_
