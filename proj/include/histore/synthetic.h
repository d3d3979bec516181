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


// Synthetic notarial-style Spanish corpus with a known relation label per
// sentence, for fixtures and end-to-end tests.

#ifndef HISTORE_SYNTHETIC_H_
#define HISTORE_SYNTHETIC_H_

#include <map>
#include <string>
#include <vector>

#include "histore/corpus.h"

namespace histore {

struct SyntheticOptions {
  uint64_t seed = 7;
  // Sentences by entity count; the defaults give 20 + 150 + 3 * 10 = 200
  // relation instances.
  size_t single_entity_sentences = 20;
  size_t two_entity_sentences = 150;
  size_t three_entity_sentences = 10;
  size_t empty_sentences = 5;
  size_t expert_sentences = 50;
};

struct SyntheticCorpus {
  Document target;
  std::vector<Document> expert_books;
  std::vector<EntityAnnotation> annotations;  // over target.normalized_text
  std::vector<std::string> label_set;
  std::map<std::string, std::string> labels;  // instance_id -> latent label
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions &options = {});

}  // namespace histore

#endif  // HISTORE_SYNTHETIC_H_
