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


#include "histore/review_service.h"

#include <algorithm>
#include <fstream>

#include <httplib.h>

namespace histore {
namespace {

template <typename E>
E parse_enum(const json &j, const char *field, std::initializer_list<std::pair<const char *, E>> names) {
  if (!j.is_string()) throw Error(ErrorCode::kValidation, std::string(field) + " must be a string", field);
  auto s = j.get<std::string>();
  for (const auto &[name, value] : names) {
    if (s == name) return value;
  }
  throw Error(ErrorCode::kValidation, "invalid " + std::string(field) + " '" + s + "'", field);
}

Rating parse_rating(const json &j) {
  return parse_enum<Rating>(j, "rating",
                            {{"accurate", Rating::kAccurate},
                             {"generic", Rating::kGeneric},
                             {"irrelevant", Rating::kIrrelevant}});
}

Family parse_family(const json &j) {
  return parse_enum<Family>(j, "family",
                            {{"bert_like", Family::kBertLike}, {"roberta_like", Family::kRobertaLike}});
}

std::string required_string(const json &j, const char *field) {
  if (!j.is_object() || !j.contains(field) || !j[field].is_string() ||
      j[field].get<std::string>().empty()) {
    throw Error(ErrorCode::kValidation, std::string(field) + " is required", field);
  }
  return j[field].get<std::string>();
}

std::string optional_string(const json &j, const char *field) {
  if (!j.contains(field) || j[field].is_null()) return {};
  if (!j[field].is_string()) {
    throw Error(ErrorCode::kValidation, std::string(field) + " must be a string", field);
  }
  return j[field].get<std::string>();
}

std::string numbered(char prefix, size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, n);
  return buf;
}

std::vector<std::string> csv(const std::string &s) {
  std::vector<std::string> out;
  for (auto &part : split(s, ',')) {
    auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

bool contains(const std::vector<std::string> &v, const std::string &x) {
  return v.empty() || std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string_view rating_name(Rating r) {
  switch (r) {
    case Rating::kAccurate: return "accurate";
    case Rating::kGeneric: return "generic";
    case Rating::kIrrelevant: return "irrelevant";
  }
  return "";
}

std::string_view family_name(Family f) { return f == Family::kBertLike ? "bert_like" : "roberta_like"; }

json to_json(const ExpertJudgment &j) {
  ordered_json o;
  o["judgment_id"] = j.judgment_id;
  o["instance_id"] = j.instance_id;
  o["model_id"] = j.model_id;
  o["template_id"] = j.template_id;
  o["selected_tokens"] = j.selected_tokens;
  o["rating"] = rating_name(j.rating);
  o["annotator_id"] = j.annotator_id;
  o["timestamp"] = j.timestamp;
  return json(o);
}

json to_json(const ModelSelection &s) {
  ordered_json o;
  o["selection_id"] = s.selection_id;
  o["family"] = family_name(s.family);
  o["model_id"] = s.model_id;
  o["annotator_id"] = s.annotator_id;
  o["rationale"] = s.rationale;
  o["timestamp"] = s.timestamp;
  return json(o);
}

json to_json(const GoldLabelAssignment &g) {
  ordered_json o;
  o["instance_id"] = g.instance_id;
  o["label"] = g.label;
  o["annotator_id"] = g.annotator_id;
  o["timestamp"] = g.timestamp;
  return json(o);
}

ExpertJudgment judgment_from_json(const json &j) {
  ExpertJudgment out;
  out.judgment_id = optional_string(j, "judgment_id");
  out.instance_id = required_string(j, "instance_id");
  out.model_id = required_string(j, "model_id");
  out.template_id = required_string(j, "template_id");
  if (j.contains("selected_tokens")) {
    const auto &t = j["selected_tokens"];
    if (!t.is_array()) {
      throw Error(ErrorCode::kValidation, "selected_tokens must be a list", "selected_tokens");
    }
    for (const auto &x : t) {
      if (!x.is_string()) {
        throw Error(ErrorCode::kValidation, "selected_tokens must hold strings", "selected_tokens");
      }
      out.selected_tokens.push_back(x.get<std::string>());
    }
  }
  if (!j.contains("rating")) throw Error(ErrorCode::kValidation, "rating is required", "rating");
  out.rating = parse_rating(j["rating"]);
  out.annotator_id = optional_string(j, "annotator_id");
  out.timestamp = optional_string(j, "timestamp");
  return out;
}

ModelSelection selection_from_json(const json &j) {
  ModelSelection out;
  out.selection_id = optional_string(j, "selection_id");
  if (!j.is_object() || !j.contains("family")) {
    throw Error(ErrorCode::kValidation, "family is required", "family");
  }
  out.family = parse_family(j["family"]);
  out.model_id = required_string(j, "model_id");
  out.annotator_id = optional_string(j, "annotator_id");
  out.rationale = optional_string(j, "rationale");
  out.timestamp = optional_string(j, "timestamp");
  return out;
}

GoldLabelAssignment label_from_json(const json &j) {
  GoldLabelAssignment out;
  out.instance_id = required_string(j, "instance_id");
  out.label = required_string(j, "label");
  out.annotator_id = optional_string(j, "annotator_id");
  out.timestamp = optional_string(j, "timestamp");
  return out;
}

json to_json(const JournalEntry &e) {
  ordered_json o;
  o["seq"] = e.seq;
  o["type"] = e.type;
  o["record"] = ordered_json(e.record);
  return json(o);
}

JournalEntry journal_entry_from_json(const json &j) {
  JournalEntry e;
  if (!j.is_object() || !j.contains("seq") || !j["seq"].is_number_unsigned()) {
    throw Error(ErrorCode::kValidation, "journal entry needs a seq", "seq");
  }
  e.seq = j["seq"].get<size_t>();
  e.type = required_string(j, "type");
  if (!j.contains("record")) throw Error(ErrorCode::kValidation, "journal entry needs a record", "record");
  e.record = j["record"];
  return e;
}

ReviewState apply(ReviewState s, const JournalEntry &e) {
  std::string annotator, timestamp;
  if (e.type == "judgment") {
    auto j = judgment_from_json(e.record);
    annotator = j.annotator_id;
    timestamp = j.timestamp;
    s.judgments.push_back(std::move(j));
  } else if (e.type == "selection") {
    auto sel = selection_from_json(e.record);
    annotator = sel.annotator_id;
    timestamp = sel.timestamp;
    s.active_selections[sel.family] = sel;
    s.selections.push_back(std::move(sel));
  } else if (e.type == "label") {
    auto g = label_from_json(e.record);
    annotator = g.annotator_id;
    timestamp = g.timestamp;
    s.active_labels[g.instance_id] = g;
    s.labels.push_back(std::move(g));
  } else {
    throw Error(ErrorCode::kValidation, "unknown journal entry type '" + e.type + "'", "type");
  }
  auto &last = s.last_timestamp[annotator];
  last = std::max(last, timestamp);
  s.entries += 1;
  return s;
}

json to_json(const ReviewState &s) {
  ordered_json o;
  o["entries"] = s.entries;
  ordered_json j = ordered_json::array(), sel = ordered_json::array(), lab = ordered_json::array();
  for (const auto &x : s.judgments) j.push_back(ordered_json(to_json(x)));
  for (const auto &x : s.selections) sel.push_back(ordered_json(to_json(x)));
  for (const auto &x : s.labels) lab.push_back(ordered_json(to_json(x)));
  o["judgments"] = j;
  o["selections"] = sel;
  ordered_json active = ordered_json::object();
  for (const auto &[f, x] : s.active_selections) active[std::string(family_name(f))] = ordered_json(to_json(x));
  o["active_selections"] = active;
  o["labels"] = lab;
  ordered_json active_labels = ordered_json::object();
  for (const auto &[id, x] : s.active_labels) active_labels[id] = ordered_json(to_json(x));
  o["active_labels"] = active_labels;
  o["last_timestamp"] = s.last_timestamp;
  return json(o);
}

ReviewState review_state_from_json(const json &j) {
  ReviewState s;
  s.entries = j.at("entries").get<size_t>();
  for (const auto &x : j.at("judgments")) s.judgments.push_back(judgment_from_json(x));
  for (const auto &x : j.at("selections")) s.selections.push_back(selection_from_json(x));
  for (const auto &[f, x] : j.at("active_selections").items()) {
    s.active_selections[parse_family(json(f))] = selection_from_json(x);
  }
  for (const auto &x : j.at("labels")) s.labels.push_back(label_from_json(x));
  for (const auto &[id, x] : j.at("active_labels").items()) s.active_labels[id] = label_from_json(x);
  s.last_timestamp = j.at("last_timestamp").get<std::map<std::string, std::string>>();
  return s;
}

Journal::Journal(std::filesystem::path path, size_t snapshot_every)
    : path_(std::move(path)), snapshot_every_(snapshot_every) {
  if (!std::filesystem::exists(path_)) return;
  for (const auto &line : read_jsonl(path_)) entries_.push_back(journal_entry_from_json(line));
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].seq != i + 1) {
      throw Error(ErrorCode::kValidation,
                  "journal " + path_.string() + " is out of sequence at entry " + std::to_string(i + 1),
                  "seq");
    }
  }
  size_t start = 0;
  if (std::filesystem::exists(snapshot_path())) {
    auto snap = read_json(snapshot_path());
    size_t covered = snap.at("entries").get<size_t>();
    // A snapshot newer than the journal is ignored and the journal replayed.
    if (covered <= entries_.size()) {
      state_ = review_state_from_json(snap.at("state"));
      start = covered;
    }
  }
  for (size_t i = start; i < entries_.size(); ++i) state_ = apply(std::move(state_), entries_[i]);
}

std::filesystem::path Journal::snapshot_path() const {
  auto p = path_;
  p += ".snapshot.json";
  return p;
}

const JournalEntry &Journal::append(std::string type, json record) {
  JournalEntry e{entries_.size() + 1, std::move(type), std::move(record)};
  ReviewState next = apply(state_, e);  // validates before anything is written
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << to_json(e).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "cannot append to journal " + path_.string());
  }
  state_ = std::move(next);
  entries_.push_back(std::move(e));
  if (snapshot_every_ > 0 && entries_.size() % snapshot_every_ == 0) write_snapshot();
  return entries_.back();
}

void Journal::write_snapshot() const {
  ordered_json snap;
  snap["entries"] = state_.entries;
  snap["state"] = ordered_json(to_json(state_));
  write_file_atomic(snapshot_path(), snap.dump() + "\n");
}

ReviewState load_review_state(const std::filesystem::path &journal) {
  if (!std::filesystem::exists(journal)) return {};
  return Journal(journal, 0).state();
}

ReviewCatalog load_review_catalog(const std::filesystem::path &run_dir) {
  ReviewCatalog c;
  for (const auto &j : read_jsonl(run_dir / "instances.jsonl")) c.instances.push_back(instance_from_json(j));
  std::sort(c.instances.begin(), c.instances.end(),
            [](const auto &a, const auto &b) { return a.instance_id < b.instance_id; });
  for (const auto &j : read_jsonl(run_dir / "sentences.jsonl")) {
    auto s = sentence_from_json(j);
    c.sentences[s.sentence_id] = std::move(s);
  }
  auto dir = run_dir / "predictions";
  if (std::filesystem::exists(dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto &e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
      for (const auto &j : read_jsonl(f)) {
        TopKPrediction top;
        for (const auto &p : j.at("predictions")) {
          top.push_back({p.at("token").get<std::string>(), p.value("id", 0),
                         p.at("probability").get<double>()});
        }
        auto model = j.at("model_id").get<std::string>();
        auto tmpl = j.at("template_id").get<std::string>();
        c.models.insert(model);
        c.templates.insert(tmpl);
        c.predictions[{j.at("instance_id").get<std::string>(), model, tmpl}] = std::move(top);
      }
    }
  }
  return c;
}

ReviewService::ReviewService(ReviewCatalog catalog, ReviewOptions options,
                             std::filesystem::path journal)
    : catalog_(std::move(catalog)),
      options_(std::move(options)),
      journal_(std::move(journal), options_.snapshot_every) {
  std::sort(catalog_.instances.begin(), catalog_.instances.end(),
            [](const auto &a, const auto &b) { return a.instance_id < b.instance_id; });
}

const RelationInstance *ReviewService::find_instance(const std::string &id) const {
  auto it = std::lower_bound(catalog_.instances.begin(), catalog_.instances.end(), id,
                             [](const RelationInstance &r, const std::string &x) { return r.instance_id < x; });
  return it != catalog_.instances.end() && it->instance_id == id ? &*it : nullptr;
}

void ReviewService::check_models_templates(const std::vector<std::string> &models,
                                           const std::vector<std::string> &templates) const {
  for (const auto &m : models) {
    if (!catalog_.models.count(m)) {
      throw Error(ErrorCode::kNotFound, "no predictions for model '" + m + "'", "models");
    }
  }
  for (const auto &t : templates) {
    if (!catalog_.templates.count(t)) {
      throw Error(ErrorCode::kNotFound, "no predictions for template '" + t + "'", "templates");
    }
  }
}

json ReviewService::instance_view(const RelationInstance &r, const std::vector<std::string> &models,
                                  const std::vector<std::string> &templates) const {
  ordered_json o = ordered_json(to_json(r));
  auto s = catalog_.sentences.find(r.sentence_id);
  if (s != catalog_.sentences.end()) {
    o["sentence"] = s->second.text;
    ordered_json ents = ordered_json::array();
    for (const auto &e : s->second.entities) ents.push_back(ordered_json(to_json(e)));
    o["entities"] = ents;
    o["entity_count"] = s->second.entities.size();
  }
  auto active = journal_.state().active_labels.find(r.instance_id);
  if (active != journal_.state().active_labels.end()) o["gold_label"] = active->second.label;
  ordered_json preds = ordered_json::array();
  auto lo = catalog_.predictions.lower_bound({r.instance_id, "", ""});
  for (auto it = lo; it != catalog_.predictions.end() && std::get<0>(it->first) == r.instance_id; ++it) {
    const auto &[id, model, tmpl] = it->first;
    if (!contains(models, model) || !contains(templates, tmpl)) continue;
    ordered_json tokens = ordered_json::array();
    for (size_t i = 0; i < it->second.size() && i < options_.top_k; ++i) {
      tokens.push_back({{"token", it->second[i].token}, {"probability", it->second[i].probability}});
    }
    preds.push_back({{"model_id", model}, {"template_id", tmpl}, {"tokens", tokens}});
  }
  o["predictions"] = preds;
  return json(o);
}

json ReviewService::list_instances(const InstanceQuery &q) const {
  std::shared_lock lock(mu_);
  check_models_templates(q.models, q.templates);
  size_t page_size = std::min(q.page_size.value_or(options_.page_size), options_.max_page_size);
  if (page_size == 0) throw Error(ErrorCode::kInvalidArgument, "page_size must be positive", "page_size");
  const auto &labels = journal_.state().active_labels;
  std::vector<const RelationInstance *> hits;
  for (const auto &r : catalog_.instances) {
    if (q.kind && r.kind != *q.kind) continue;
    if (q.entity_count) {
      auto s = catalog_.sentences.find(r.sentence_id);
      if (s == catalog_.sentences.end() || s->second.entities.size() != *q.entity_count) continue;
    }
    if (q.labeled && labels.count(r.instance_id) != static_cast<size_t>(*q.labeled)) continue;
    hits.push_back(&r);
  }
  ordered_json items = ordered_json::array();
  for (size_t i = q.page * page_size; i < hits.size() && i < (q.page + 1) * page_size; ++i) {
    items.push_back(ordered_json(instance_view(*hits[i], q.models, q.templates)));
  }
  ordered_json o;
  o["total"] = hits.size();
  o["page"] = q.page;
  o["page_size"] = page_size;
  o["items"] = items;
  return json(o);
}

json ReviewService::get_instance(const std::string &id, const std::vector<std::string> &models,
                                 const std::vector<std::string> &templates) const {
  std::shared_lock lock(mu_);
  check_models_templates(models, templates);
  const auto *r = find_instance(id);
  if (!r) throw Error(ErrorCode::kNotFound, "no instance '" + id + "'", "instance_id");
  return instance_view(*r, models, templates);
}

std::string ReviewService::stamp(const std::string &annotator, const std::string &requested) const {
  const auto &last = journal_.state().last_timestamp;
  auto it = last.find(annotator);
  std::string prev = it == last.end() ? "" : it->second;
  if (!requested.empty()) {
    if (requested < prev) {
      throw Error(ErrorCode::kValidation,
                  "timestamp " + requested + " precedes " + prev + " for annotator " + annotator,
                  "timestamp");
    }
    return requested;
  }
  return std::max(options_.clock(), prev);
}

void ReviewService::validate_entry(const JournalEntry &e) const {
  if (e.type == "judgment") {
    auto j = judgment_from_json(e.record);
    if (!find_instance(j.instance_id)) {
      throw Error(ErrorCode::kNotFound, "no instance '" + j.instance_id + "'", "instance_id");
    }
    auto it = catalog_.predictions.find({j.instance_id, j.model_id, j.template_id});
    if (it == catalog_.predictions.end()) {
      throw Error(ErrorCode::kValidation,
                  "no predictions were shown for " + j.instance_id + " with " + j.model_id + "/" +
                      j.template_id,
                  "model_id");
    }
    size_t shown = std::min(it->second.size(), options_.top_k);
    for (const auto &t : j.selected_tokens) {
      bool found = std::any_of(it->second.begin(), it->second.begin() + shown,
                               [&](const TokenProbability &p) { return p.token == t; });
      if (!found) {
        throw Error(ErrorCode::kValidation, "token '" + t + "' was not among the shown predictions",
                    "selected_tokens");
      }
    }
  } else if (e.type == "selection") {
    auto s = selection_from_json(e.record);
    if (options_.model_exists && !options_.model_exists(s.model_id)) {
      throw Error(ErrorCode::kNotFound, "no model '" + s.model_id + "' in the registry", "model_id");
    }
  } else if (e.type == "label") {
    auto g = label_from_json(e.record);
    if (!find_instance(g.instance_id)) {
      throw Error(ErrorCode::kNotFound, "no instance '" + g.instance_id + "'", "instance_id");
    }
    if (std::find(options_.label_set.begin(), options_.label_set.end(), g.label) ==
        options_.label_set.end()) {
      throw Error(ErrorCode::kValidation, "label '" + g.label + "' is not in the label set", "label");
    }
  } else {
    throw Error(ErrorCode::kValidation, "unknown journal entry type '" + e.type + "'", "type");
  }
}

ExpertJudgment ReviewService::record_judgment(ExpertJudgment j) {
  std::unique_lock lock(mu_);
  j.judgment_id = numbered('j', journal_.state().judgments.size() + 1);
  JournalEntry probe{0, "judgment", to_json(j)};
  validate_entry(probe);
  j.timestamp = stamp(j.annotator_id, j.timestamp);
  journal_.append("judgment", to_json(j));
  return j;
}

std::optional<ExpertJudgment> ReviewService::find_judgment(const std::string &id) const {
  std::shared_lock lock(mu_);
  for (const auto &j : journal_.state().judgments) {
    if (j.judgment_id == id) return j;
  }
  return std::nullopt;
}

ModelSelection ReviewService::record_model_selection(ModelSelection s) {
  std::unique_lock lock(mu_);
  validate_entry({0, "selection", to_json(s)});
  const auto &active = journal_.state().active_selections;
  auto it = active.find(s.family);
  if (it != active.end() && it->second.model_id == s.model_id) return it->second;
  s.selection_id = numbered('s', journal_.state().selections.size() + 1);
  s.timestamp = stamp(s.annotator_id, s.timestamp);
  journal_.append("selection", to_json(s));
  return s;
}

GoldLabelAssignment ReviewService::set_gold_label(const std::string &instance_id, const std::string &label,
                                                  const std::string &annotator_id) {
  std::unique_lock lock(mu_);
  GoldLabelAssignment g{instance_id, label, annotator_id, ""};
  validate_entry({0, "label", to_json(g)});
  g.timestamp = stamp(annotator_id, "");
  journal_.append("label", to_json(g));
  return g;
}

std::string ReviewService::export_annotations(const std::string &format) const {
  std::shared_lock lock(mu_);
  std::vector<json> lines;
  if (format == "jsonl") {
    for (const auto &e : journal_.entries()) lines.push_back(to_json(e));
  } else if (format == "instances") {
    for (auto r : catalog_.instances) {
      auto it = journal_.state().active_labels.find(r.instance_id);
      if (it != journal_.state().active_labels.end()) r.gold_label = it->second.label;
      lines.push_back(to_json(r));
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown export format '" + format + "'", "format");
  }
  return to_jsonl(lines);
}

void ReviewService::import_annotations(const std::string &jsonl) {
  std::unique_lock lock(mu_);
  if (!journal_.entries().empty()) {
    throw Error(ErrorCode::kAlreadyExists, "import needs an empty journal", "journal");
  }
  std::vector<JournalEntry> entries;
  ReviewState probe;
  for (const auto &line : parse_jsonl(jsonl)) {
    auto e = journal_entry_from_json(line);
    if (e.seq != entries.size() + 1) {
      throw Error(ErrorCode::kValidation, "import is out of sequence at entry " + std::to_string(e.seq),
                  "seq");
    }
    validate_entry(e);
    probe = apply(std::move(probe), e);
    entries.push_back(std::move(e));
  }
  for (auto &e : entries) journal_.append(std::move(e.type), std::move(e.record));
}

ReviewState ReviewService::state() const {
  std::shared_lock lock(mu_);
  return journal_.state();
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kAlreadyExists: return 409;
    case ErrorCode::kValidation: return 422;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConfig:
    case ErrorCode::kPromptShape: return 400;
    default: return 500;
  }
}

void ReviewService::mount(httplib::Server &server) {
  using Req = httplib::Request;
  using Res = httplib::Response;
  auto send = [](Res &res, int status, const json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs a handler, turning errors into {code, message, field} bodies.
  auto guarded = [send](std::function<void(const Req &, Res &)> f) {
    return [f, send](const Req &req, Res &res) {
      try {
        f(req, res);
      } catch (const Error &e) {
        send(res, http_status(e.code()),
             {{"code", error_code_name(e.code())}, {"message", e.what()}, {"field", e.field()}});
      } catch (const json::exception &e) {
        send(res, 400, {{"code", "invalid_argument"}, {"message", e.what()}, {"field", ""}});
      }
    };
  };
  auto body_of = [](const Req &req) {
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object", "body");
    }
    return j;
  };
  auto annotator = [](const Req &req, const json &body) {
    std::string a = optional_string(body, "annotator_id");
    if (a.empty()) a = req.get_header_value("X-Annotator-Id");
    if (a.empty()) throw Error(ErrorCode::kValidation, "annotator_id is required", "annotator_id");
    return a;
  };
  auto size_param = [](const Req &req, const char *name) -> std::optional<size_t> {
    if (!req.has_param(name)) return std::nullopt;
    auto v = req.get_param_value(name);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be a non-negative integer", name);
    }
    return std::stoul(v);
  };

  server.Get("/instances", guarded([this, send, size_param](const Req &req, Res &res) {
    InstanceQuery q;
    if (req.has_param("kind")) q.kind = parse_instance_kind(req.get_param_value("kind"));
    q.entity_count = size_param(req, "entity_count");
    if (req.has_param("labeled")) {
      auto v = req.get_param_value("labeled");
      if (v != "true" && v != "false") {
        throw Error(ErrorCode::kInvalidArgument, "labeled must be true or false", "labeled");
      }
      q.labeled = v == "true";
    }
    q.page = size_param(req, "page").value_or(0);
    q.page_size = size_param(req, "page_size");
    q.models = csv(req.get_param_value("models"));
    q.templates = csv(req.get_param_value("templates"));
    send(res, 200, list_instances(q));
  }));
  server.Get(R"(/instances/(.+))", guarded([this, send](const Req &req, Res &res) {
    send(res, 200,
         get_instance(req.matches[1], csv(req.get_param_value("models")),
                      csv(req.get_param_value("templates"))));
  }));
  server.Post("/judgments", guarded([this, send, body_of, annotator](const Req &req, Res &res) {
    auto body = body_of(req);
    auto j = judgment_from_json(body);
    j.annotator_id = annotator(req, body);
    send(res, 201, to_json(record_judgment(std::move(j))));
  }));
  server.Get(R"(/judgments/(.+))", guarded([this, send](const Req &req, Res &res) {
    auto j = find_judgment(req.matches[1]);
    if (!j) throw Error(ErrorCode::kNotFound, "no judgment '" + std::string(req.matches[1]) + "'", "judgment_id");
    send(res, 200, to_json(*j));
  }));
  server.Post("/selections", guarded([this, send, body_of, annotator](const Req &req, Res &res) {
    auto body = body_of(req);
    auto s = selection_from_json(body);
    s.annotator_id = annotator(req, body);
    send(res, 201, to_json(record_model_selection(std::move(s))));
  }));
  server.Get("/selections/active", guarded([this, send](const Req &, Res &res) {
    json out = json::object();
    for (const auto &[f, s] : state().active_selections) out[std::string(family_name(f))] = to_json(s);
    send(res, 200, out);
  }));
  server.Get("/selections", guarded([this, send](const Req &, Res &res) {
    json out = json::array();
    for (const auto &s : state().selections) out.push_back(to_json(s));
    send(res, 200, out);
  }));
  server.Post("/labels", guarded([this, send, body_of, annotator](const Req &req, Res &res) {
    auto body = body_of(req);
    auto g = label_from_json(body);
    send(res, 201, to_json(set_gold_label(g.instance_id, g.label, annotator(req, body))));
  }));
  server.Get("/export", guarded([this](const Req &req, Res &res) {
    auto format = req.has_param("format") ? req.get_param_value("format") : "jsonl";
    res.status = 200;
    res.set_content(export_annotations(format), "application/x-ndjson");
  }));
  server.Post("/import", guarded([this, send](const Req &req, Res &res) {
    import_annotations(req.body);
    send(res, 200, {{"entries", state().entries}});
  }));
}

}  // namespace histore
