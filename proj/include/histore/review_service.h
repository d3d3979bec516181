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


// Expert review: an append-only journal of judgments, model selections and
// gold labels, the active state folded from it, and the HTTP API over both.

#ifndef HISTORE_REVIEW_SERVICE_H_
#define HISTORE_REVIEW_SERVICE_H_

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "histore/corpus.h"
#include "histore/error.h"
#include "histore/encoder.h"
#include "histore/util.h"

namespace httplib {
class Server;
}

namespace histore {

enum class Rating { kAccurate, kGeneric, kIrrelevant };
enum class Family { kBertLike, kRobertaLike };

std::string_view rating_name(Rating r);
std::string_view family_name(Family f);

struct ExpertJudgment {
  std::string judgment_id;
  std::string instance_id;
  std::string model_id;
  std::string template_id;
  std::vector<std::string> selected_tokens;
  Rating rating = Rating::kIrrelevant;
  std::string annotator_id;
  std::string timestamp;

  bool operator==(const ExpertJudgment &) const = default;
};

struct ModelSelection {
  std::string selection_id;
  Family family = Family::kBertLike;
  std::string model_id;
  std::string annotator_id;
  std::string rationale;
  std::string timestamp;

  bool operator==(const ModelSelection &) const = default;
};

struct GoldLabelAssignment {
  std::string instance_id;
  std::string label;
  std::string annotator_id;
  std::string timestamp;

  bool operator==(const GoldLabelAssignment &) const = default;
};

json to_json(const ExpertJudgment &j);
json to_json(const ModelSelection &s);
json to_json(const GoldLabelAssignment &g);
// Parsers throw kValidation naming the missing or malformed field.
ExpertJudgment judgment_from_json(const json &j);
ModelSelection selection_from_json(const json &j);
GoldLabelAssignment label_from_json(const json &j);

struct JournalEntry {
  size_t seq = 0;
  std::string type;  // "judgment", "selection" or "label"
  json record;
};

json to_json(const JournalEntry &e);
JournalEntry journal_entry_from_json(const json &j);

// Everything derivable from the journal; a pure fold over its entries.
struct ReviewState {
  size_t entries = 0;
  std::vector<ExpertJudgment> judgments;
  std::vector<ModelSelection> selections;
  std::map<Family, ModelSelection> active_selections;
  std::vector<GoldLabelAssignment> labels;
  std::map<std::string, GoldLabelAssignment> active_labels;
  std::map<std::string, std::string> last_timestamp;  // per annotator

  bool operator==(const ReviewState &) const = default;
};

ReviewState apply(ReviewState state, const JournalEntry &entry);
json to_json(const ReviewState &s);
ReviewState review_state_from_json(const json &j);

// One JSON line per entry. Every `snapshot_every` entries the folded state
// is also written next to the journal, so loading replays only the tail.
class Journal {
 public:
  explicit Journal(std::filesystem::path path, size_t snapshot_every = 100);

  const ReviewState &state() const { return state_; }
  const std::vector<JournalEntry> &entries() const { return entries_; }
  const JournalEntry &append(std::string type, json record);

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path snapshot_path() const;

 private:
  void write_snapshot() const;

  std::filesystem::path path_;
  size_t snapshot_every_;
  std::vector<JournalEntry> entries_;
  ReviewState state_;
};

// Folded state of a journal file; empty when the file does not exist.
ReviewState load_review_state(const std::filesystem::path &journal);

// Read-only data the service presents: instances and their sentences plus
// the top-k predictions computed by the embed stage.
struct ReviewCatalog {
  using PredictionKey = std::tuple<std::string, std::string, std::string>;  // instance, model, template

  std::vector<RelationInstance> instances;  // sorted by instance_id
  std::map<std::string, AnnotatedSentence> sentences;
  std::map<PredictionKey, TopKPrediction> predictions;
  std::set<std::string> models;
  std::set<std::string> templates;
};

// Reads instances.jsonl, sentences.jsonl and predictions/*.jsonl of a run.
ReviewCatalog load_review_catalog(const std::filesystem::path &run_dir);

struct ReviewOptions {
  std::vector<std::string> label_set;
  size_t top_k = 10;
  size_t page_size = 20;
  size_t max_page_size = 100;
  size_t snapshot_every = 100;
  // Whether a model id exists in the registry.
  std::function<bool(const std::string &)> model_exists;
  std::function<std::string()> clock = utc_timestamp;
};

struct InstanceQuery {
  std::optional<InstanceKind> kind;
  std::optional<size_t> entity_count;
  std::optional<bool> labeled;
  size_t page = 0;
  std::optional<size_t> page_size;
  std::vector<std::string> models;     // empty: all
  std::vector<std::string> templates;  // empty: all
};

class ReviewService {
 public:
  ReviewService(ReviewCatalog catalog, ReviewOptions options, std::filesystem::path journal);

  json list_instances(const InstanceQuery &query) const;
  json get_instance(const std::string &instance_id, const std::vector<std::string> &models = {},
                    const std::vector<std::string> &templates = {}) const;

  ExpertJudgment record_judgment(ExpertJudgment judgment);
  std::optional<ExpertJudgment> find_judgment(const std::string &judgment_id) const;
  ModelSelection record_model_selection(ModelSelection selection);
  GoldLabelAssignment set_gold_label(const std::string &instance_id, const std::string &label,
                                     const std::string &annotator_id);

  // "jsonl": the journal entries; "instances": instances with active gold
  // labels filled in.
  std::string export_annotations(const std::string &format) const;
  // Replays an exported journal into this service; the journal must be
  // empty. Throws kAlreadyExists otherwise.
  void import_annotations(const std::string &jsonl);

  ReviewState state() const;

  // Registers the HTTP routes on server.
  void mount(httplib::Server &server);

 private:
  std::string stamp(const std::string &annotator, const std::string &requested) const;
  json instance_view(const RelationInstance &r, const std::vector<std::string> &models,
                     const std::vector<std::string> &templates) const;
  void check_models_templates(const std::vector<std::string> &models,
                              const std::vector<std::string> &templates) const;
  const RelationInstance *find_instance(const std::string &id) const;
  void validate_entry(const JournalEntry &e) const;

  ReviewCatalog catalog_;
  ReviewOptions options_;
  Journal journal_;
  mutable std::shared_mutex mu_;
};

// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace histore

#endif  // HISTORE_REVIEW_SERVICE_H_
