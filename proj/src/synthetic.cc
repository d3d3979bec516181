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


#include "histore/synthetic.h"

#include <algorithm>
#include <random>

namespace histore {
namespace {

const char *const kPeople[] = {
    "Pedro de Cazalla",   "Juan Sánchez",      "María de Rojas",    "Francisco de Vivero",
    "Leonor de Vivero",   "Ana Enríquez",      "Cristóbal de Padilla", "Isabel de Estrada",
    "Beatriz de Vivero",  "Alonso Pérez",      "Catalina de Reinoso", "Antonio Herrezuelo",
    "Juana de Silva",     "Domingo de Rojas",  "Constanza de Vivero", "Gonzalo Báez",
    "Luis de Rojas",      "Marina de Guevara", "Hernando Díaz",     "Teresa de Oypa"};

const char *const kPlaces[] = {"Pedrosa",  "Valladolid", "Toro",     "Zamora",   "Palencia",
                               "Logroño",  "Salamanca",  "Medina",   "Burgos",   "Segovia",
                               "Ávila",    "Sevilla",    "Villagarcía", "Aldeanueva"};

// Templates by label; {0} {1} {2} are entity slots, P = person, L = place.
struct Template {
  const char *text;
  const char *kinds;
};

const Template kKinship2[] = {
    {"{0} era hijo legítimo de {1} según dixo el testigo.", "PP"},
    {"{0} casó con {1} en la iglesia mayor.", "PP"},
    {"{0}, hermana de {1}, declaró que sabía la verdad.", "PP"},
    {"Y luego {0} dixo que {1} era su madre.", "PP"},
    {"{0} es primo de {1} por parte de su padre.", "PP"},
};
const Template kResidence2[] = {
    {"{0} fue vecino de la villa de {1} muchos años.", "PL"},
    {"{0} vivía en la ciudad de {1} con su casa poblada.", "PL"},
    {"Preguntado, {0} dixo que era natural de {1}.", "PL"},
    {"{0} tenía su hacienda en {1} y allí moraba.", "PL"},
    {"Estando en {1}, {0} otorgó su testamento.", "PL"},
};
const Template kKinship1[] = {
    {"Se presentó la viuda de {0} a declarar.", "P"},
    {"Compareció el hijo mayor de {0} en la audiencia.", "P"},
};
const Template kResidence1[] = {
    {"Pasó ante mí {0}, vecino de esta villa.", "P"},
    {"Fue hecho en {0} el dicho día.", "L"},
};
const Template kKinship3[] = {
    {"{0} y {1}, hijos de {2}, juraron en forma.", "PPP"},
};
const Template kResidence3[] = {
    {"{0} y {1} fueron vecinos de {2} en aquel tiempo.", "PPL"},
};
const char *const kEmpty[] = {"Y que después de esto no sabe otra cosa.",
                              "Fuele leído su dicho y se ratificó en él."};

const char *const kExpert[] = {
    "El padre y la madre han de ser honrados por sus hijos",
    "La vecindad se gana morando en la villa con casa poblada",
    "El escribano da fe de lo que pasa ante él",
    "Los hermanos heredan por partes iguales los bienes del padre",
    "Quien es natural de una ciudad goza de sus fueros",
    "El matrimonio se celebra en la iglesia ante el cura y testigos",
    "La viuda guarda la hacienda de sus hijos menores",
    "El vecino paga los pechos y derechos de la villa",
};

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions &options) {
  std::mt19937_64 rng(options.seed);
  auto pick = [&](size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); };

  struct Planned {
    const Template *tmpl;  // null for an entity-free sentence
    const char *label;
  };
  std::vector<Planned> plan;
  auto add = [&](size_t count, const Template *a, size_t na, const Template *b, size_t nb) {
    for (size_t i = 0; i < count; ++i) {
      if (i % 2 == 0) {
        plan.push_back({&a[pick(na)], "parentesco"});
      } else {
        plan.push_back({&b[pick(nb)], "vecindad"});
      }
    }
  };
  add(options.single_entity_sentences, kKinship1, std::size(kKinship1), kResidence1,
      std::size(kResidence1));
  add(options.two_entity_sentences, kKinship2, std::size(kKinship2), kResidence2,
      std::size(kResidence2));
  add(options.three_entity_sentences, kKinship3, std::size(kKinship3), kResidence3,
      std::size(kResidence3));
  for (size_t i = 0; i < options.empty_sentences; ++i) plan.push_back({nullptr, nullptr});
  std::shuffle(plan.begin(), plan.end(), rng);

  SyntheticCorpus out;
  out.label_set = {"parentesco", "vecindad"};
  std::string text;
  std::vector<const char *> sentence_labels;
  size_t entity_counter = 0;
  for (const auto &p : plan) {
    if (!text.empty()) text += ' ';
    if (!p.tmpl) {
      text += kEmpty[pick(std::size(kEmpty))];
      sentence_labels.push_back(nullptr);
      continue;
    }
    // Distinct surfaces within a sentence.
    std::vector<std::string> fillers;
    for (const char *k = p.tmpl->kinds; *k; ++k) {
      std::string f;
      do {
        f = *k == 'P' ? kPeople[pick(std::size(kPeople))] : kPlaces[pick(std::size(kPlaces))];
      } while (std::find(fillers.begin(), fillers.end(), f) != fillers.end());
      fillers.push_back(f);
    }
    std::string_view t = p.tmpl->text;
    for (size_t i = 0; i < t.size(); ++i) {
      if (t[i] == '{' && i + 2 < t.size() && t[i + 2] == '}') {
        size_t slot = static_cast<size_t>(t[i + 1] - '0');
        size_t start = text.size();
        text += fillers[slot];
        char id[16];
        std::snprintf(id, sizeof(id), "E%04zu", entity_counter++);
        out.annotations.push_back({"target", start, text.size(), id});
        i += 2;
      } else {
        text += t[i];
      }
    }
    sentence_labels.push_back(p.label);
  }
  std::sort(out.annotations.begin(), out.annotations.end(),
            [](const auto &a, const auto &b) { return a.start < b.start; });
  out.target = normalize_document("target", "Proceso sintético", SourceKind::kTargetText, text, {});

  // Instance ids depend on segmentation, so derive them the way the
  // pipeline does.
  auto sentences = attach_entities(segment_sentences(out.target, {}), out.annotations);
  for (size_t i = 0; i < sentences.size() && i < sentence_labels.size(); ++i) {
    if (!sentence_labels[i]) continue;
    for (const auto &inst : generate_instances(sentences[i])) {
      out.labels[inst.instance_id] = sentence_labels[i];
    }
  }

  for (size_t book = 0; book < 2; ++book) {
    std::string body;
    for (size_t i = book; i < options.expert_sentences; i += 2) {
      if (!body.empty()) body += ' ';
      std::string s = kExpert[pick(std::size(kExpert))];
      s += i % 3 == 0 ? std::string(", según ") + kPeople[pick(std::size(kPeople))]
                      : std::string(" en ") + kPlaces[pick(std::size(kPlaces))];
      body += s + ".";
    }
    out.expert_books.push_back(normalize_document("book" + std::to_string(book + 1),
                                                  "Libro de doctrina " + std::to_string(book + 1),
                                                  SourceKind::kExpertBook, body, {}));
  }
  return out;
}

}  // namespace histore
