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


// Directory-backed model registry. Each model lives in <root>/<model_id>
// with its checkpoint files and a metadata.json record; biased models also
// carry the report of the run that produced them.

#ifndef HISTORE_REGISTRY_H_
#define HISTORE_REGISTRY_H_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "histore/encoder.h"

namespace histore {

struct ModelMetadata {
  std::string model_id;
  std::string parent_model;  // empty for base checkpoints
  std::string backend;
  json biasing_config;  // null for base checkpoints
  std::optional<double> final_loss;
  std::string created_at;  // filled on registration when empty
};

json to_json(const ModelMetadata &m);
ModelMetadata model_metadata_from_json(const json &j);

class ModelRegistry {
 public:
  static constexpr const char *kMetadataFile = "metadata.json";
  static constexpr const char *kReportFile = "biasing_report.json";

  explicit ModelRegistry(std::filesystem::path root);

  // Saves the encoder under metadata.model_id. The directory appears
  // atomically; a crash leaves no partially registered model.
  ModelMetadata register_model(const Encoder &encoder, ModelMetadata metadata,
                               const json &report = nullptr);
  // Copies a checkpoint directory in as a base model.
  ModelMetadata import_model(const std::filesystem::path &source, const std::string &model_id);

  bool contains(const std::string &model_id) const;
  ModelMetadata lookup(const std::string &model_id) const;
  std::optional<json> report(const std::string &model_id) const;
  // The model followed by its ancestors, ending at a base checkpoint.
  std::vector<ModelMetadata> lineage(const std::string &model_id) const;
  std::vector<std::string> list() const;
  std::unique_ptr<Encoder> load(const std::string &model_id) const;

  std::filesystem::path model_dir(const std::string &model_id) const;
  const std::filesystem::path &root() const { return root_; }

 private:
  ModelMetadata commit(const std::filesystem::path &staging, ModelMetadata metadata,
                       const json &report);

  std::filesystem::path root_;
};

// Model ids are used as directory names: [A-Za-z0-9._-]+, not starting with
// a dot.
void validate_model_id(const std::string &model_id);

}  // namespace histore

#endif  // HISTORE_REGISTRY_H_
