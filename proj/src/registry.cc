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


#include "histore/registry.h"

#include <random>

#include "histore/error.h"

namespace histore {
namespace {

std::filesystem::path staging_dir(const std::filesystem::path &root, const std::string &id) {
  std::random_device rd;
  return root / (".staging-" + id + "-" + std::to_string(rd()));
}

}  // namespace

json to_json(const ModelMetadata &m) {
  json j = {{"model_id", m.model_id},
            {"parent_model", m.parent_model.empty() ? json(nullptr) : json(m.parent_model)},
            {"backend", m.backend},
            {"biasing_config", m.biasing_config},
            {"final_loss", m.final_loss ? json(*m.final_loss) : json(nullptr)},
            {"created_at", m.created_at}};
  return j;
}

ModelMetadata model_metadata_from_json(const json &j) {
  ModelMetadata m;
  m.model_id = j.at("model_id").get<std::string>();
  if (j.contains("parent_model") && j["parent_model"].is_string()) {
    m.parent_model = j["parent_model"].get<std::string>();
  }
  m.backend = j.value("backend", std::string());
  m.biasing_config = j.value("biasing_config", json(nullptr));
  if (j.contains("final_loss") && j["final_loss"].is_number()) {
    m.final_loss = j["final_loss"].get<double>();
  }
  m.created_at = j.value("created_at", std::string());
  return m;
}

void validate_model_id(const std::string &id) {
  bool ok = !id.empty() && id[0] != '.';
  for (char c : id) {
    ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-');
  }
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid model id \"" + id + "\"", "model_id");
}

ModelRegistry::ModelRegistry(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path ModelRegistry::model_dir(const std::string &model_id) const {
  validate_model_id(model_id);
  return root_ / model_id;
}

bool ModelRegistry::contains(const std::string &model_id) const {
  return std::filesystem::exists(model_dir(model_id) / kMetadataFile);
}

ModelMetadata ModelRegistry::commit(const std::filesystem::path &staging, ModelMetadata metadata,
                                    const json &report) {
  if (metadata.created_at.empty()) metadata.created_at = utc_timestamp();
  write_file_atomic(staging / kMetadataFile, to_json(metadata).dump(2));
  if (!report.is_null()) write_file_atomic(staging / kReportFile, report.dump(2));
  std::error_code ec;
  std::filesystem::rename(staging, model_dir(metadata.model_id), ec);
  if (ec) {
    std::filesystem::remove_all(staging);
    if (contains(metadata.model_id)) {
      throw Error(ErrorCode::kAlreadyExists, "model " + metadata.model_id + " already registered",
                  "model_id");
    }
    throw Error(ErrorCode::kIo, "cannot register " + metadata.model_id + ": " + ec.message());
  }
  return metadata;
}

ModelMetadata ModelRegistry::register_model(const Encoder &encoder, ModelMetadata metadata,
                                            const json &report) {
  validate_model_id(metadata.model_id);
  if (encoder.handle().model_id != metadata.model_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "encoder is named " + encoder.handle().model_id + ", metadata " +
                    metadata.model_id,
                "model_id");
  }
  if (contains(metadata.model_id)) {
    throw Error(ErrorCode::kAlreadyExists, "model " + metadata.model_id + " already registered",
                "model_id");
  }
  if (!metadata.parent_model.empty() && !contains(metadata.parent_model)) {
    throw Error(ErrorCode::kValidation,
                "parent model " + metadata.parent_model + " is not registered", "parent_model");
  }
  if (metadata.backend.empty()) metadata.backend = encoder.backend();
  auto staging = staging_dir(root_, metadata.model_id);
  try {
    encoder.save(staging);
  } catch (...) {
    std::filesystem::remove_all(staging);
    throw;
  }
  return commit(staging, std::move(metadata), report);
}

ModelMetadata ModelRegistry::import_model(const std::filesystem::path &source,
                                          const std::string &model_id) {
  validate_model_id(model_id);
  if (contains(model_id)) {
    throw Error(ErrorCode::kAlreadyExists, "model " + model_id + " already registered",
                "model_id");
  }
  auto staging = staging_dir(root_, model_id);
  std::string backend;
  try {
    std::filesystem::copy(source, staging, std::filesystem::copy_options::recursive);
    std::filesystem::remove(staging / kMetadataFile);
    std::filesystem::remove(staging / kReportFile);
    backend = load_encoder(staging, model_id)->backend();
  } catch (...) {
    std::filesystem::remove_all(staging);
    throw;
  }
  ModelMetadata m;
  m.model_id = model_id;
  m.backend = backend;
  return commit(staging, std::move(m), nullptr);
}

ModelMetadata ModelRegistry::lookup(const std::string &model_id) const {
  if (!contains(model_id)) {
    throw Error(ErrorCode::kNotFound, "model " + model_id + " is not registered", "model_id");
  }
  return model_metadata_from_json(read_json(model_dir(model_id) / kMetadataFile));
}

std::optional<json> ModelRegistry::report(const std::string &model_id) const {
  auto path = model_dir(model_id) / kReportFile;
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_json(path);
}

std::vector<ModelMetadata> ModelRegistry::lineage(const std::string &model_id) const {
  std::vector<ModelMetadata> chain;
  std::string id = model_id;
  while (true) {
    for (const auto &m : chain) {
      if (m.model_id == id) throw Error(ErrorCode::kValidation, "lineage cycle at " + id);
    }
    if (!chain.empty() && !contains(id)) {
      throw Error(ErrorCode::kValidation,
                  "dangling parent " + id + " in lineage of " + model_id, "parent_model");
    }
    chain.push_back(lookup(id));
    if (chain.back().parent_model.empty()) return chain;
    id = chain.back().parent_model;
  }
}

std::vector<std::string> ModelRegistry::list() const {
  std::vector<std::string> ids;
  for (const auto &entry : std::filesystem::directory_iterator(root_)) {
    auto name = entry.path().filename().string();
    if (entry.is_directory() && name[0] != '.' &&
        std::filesystem::exists(entry.path() / kMetadataFile)) {
      ids.push_back(name);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::unique_ptr<Encoder> ModelRegistry::load(const std::string &model_id) const {
  lookup(model_id);
  return load_encoder(model_dir(model_id), model_id);
}

}  // namespace histore
