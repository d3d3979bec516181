#!/usr/bin/env python3
# Copyright 2026 The histore Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the frozen reference fixtures under tests/fixtures/reference.

Tiny tokenizers are trained on a handful of Spanish sentences and tiny random
BERT/RoBERTa masked-LM checkpoints are written next to the outputs the
reference implementation produces for them. The C++ tests only read the
output of this script; rerunning it is needed only when the fixture set
changes.

Usage: make_reference_fixtures.py OUT_DIR
"""

import json
import os
import sys

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from tokenizers import normalizers
from transformers import (AddedToken, BertConfig, BertForMaskedLM,
                          BertTokenizer, RobertaConfig, RobertaForMaskedLM,
                          RobertaTokenizer)

CORPUS = [
    "En la villa de Bilbao, a doce días del mes de marzo de mil seiscientos.",
    "Ante mí el escribano y testigos pareció presente Juan de Arriaga, vecino.",
    "Otorgó poder cumplido a su hermano Pedro para que cobre las rentas.",
    "Doña María de Butrón, viuda, vendió una casa en la calle de Somera.",
    "El dicho Martín Sáez de Landeta fue alcalde de la hermandad.",
    "Pasó ante mí; Sebastián de Landeta, Notario.",
    "¿Quién es el señor de la casa? Es el hijo de Íñigo Ortiz.",
    "Las cañas y los años pasaron por Güeñes y Ochandiano.",
    "Recibió 120 ducados y 3 reales de plata el año 1585.",
    "la relación entre Juan y Pedro es una relación de parentesco",
    "la relación entre la villa y el señor es una relación de vasallaje",
]

TOKENIZER_CASES = [
    "la relación entre Juan y Pedro es una relación de",
    "Doña María  de Butrón,\nviuda; vendió 120 ducados.",
    "¿Quién es el señor? ÍÑIGO Ortiz y Güeñes",
    "el escribano's libro 'd 1585º tabs\tand  spaces   ",
    "x\n\n y",
    "Núñez-Ávila (Bizkaia) «vecino» — año MDCXX",
    "palabra inexistente zzqx",
    "",
]

PROMPTS = [
    "la relación entre Juan y Pedro es una relación de {mask} {sep}",
    "Doña María vendió la casa. la relación entre María y la casa es una relación de {mask} {sep}",
]


def dump(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=1, sort_keys=True)
        f.write("\n")


def train_wordpiece(out, lowercase):
    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.BertNormalizer(lowercase=lowercase,
                                                strip_accents=lowercase)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    trainer = trainers.WordPieceTrainer(
        vocab_size=260,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"])
    tok.train_from_iterator(CORPUS, trainer)
    vocab = sorted(tok.get_vocab().items(), key=lambda kv: kv[1])
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "vocab.txt"), "w", encoding="utf-8") as f:
        for t, _ in vocab:
            f.write(t + "\n")
    dump(os.path.join(out, "tokenizer_config.json"),
         {"tokenizer_class": "BertTokenizer", "do_lower_case": lowercase})
    return BertTokenizer(os.path.join(out, "vocab.txt"),
                         do_lower_case=lowercase)


def train_bpe(out):
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    trainer = trainers.BpeTrainer(
        vocab_size=320,
        special_tokens=["<s>", "<pad>", "</s>", "<unk>", "<mask>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet())
    tok.train_from_iterator(CORPUS, trainer)
    os.makedirs(out, exist_ok=True)
    tok.model.save(out)
    dump(os.path.join(out, "tokenizer_config.json"),
         {"tokenizer_class": "RobertaTokenizer", "add_prefix_space": False})
    return RobertaTokenizer(
        os.path.join(out, "vocab.json"), os.path.join(out, "merges.txt"),
        mask_token=AddedToken("<mask>", lstrip=True, rstrip=False))


def tokenizer_cases(tok, mask, sep):
    cases = []
    texts = TOKENIZER_CASES + [p.format(mask=mask, sep=sep) for p in PROMPTS]
    for text in texts:
        ids = tok(text, add_special_tokens=False)["input_ids"]
        framed = tok(text, add_special_tokens=True)["input_ids"]
        cases.append({"text": text, "ids": ids, "framed": framed,
                      "tokens": tok.convert_ids_to_tokens(ids)})
    return cases


def no_decay(name):
    return name.endswith("bias") or "LayerNorm" in name


def model_reference(model, tok, mask, sep, out):
    torch.manual_seed(7)
    model.eval()
    records = []
    for template in PROMPTS:
        text = template.format(mask=mask, sep=sep)
        # Framing matches the encoder contract: CLS prepended, text already
        # ends with the separator.
        ids = [tok.cls_token_id] + tok(text, add_special_tokens=False)["input_ids"]
        x = torch.tensor([ids])
        with torch.no_grad():
            o = model(input_ids=x, output_hidden_states=True)
        m = ids.index(tok.mask_token_id)
        records.append({
            "text": text,
            "input_ids": ids,
            "mask_index": m,
            "last_hidden": o.hidden_states[-1][0].tolist(),
            "mask_logits": o.logits[0, m].tolist(),
        })

    # One masked-LM training step with AdamW on a fixed batch.
    seq = records[1]["input_ids"]
    labels = [-100] * len(seq)
    inputs = list(seq)
    for pos in (3, 5, 8):
        labels[pos] = seq[pos]
        inputs[pos] = tok.mask_token_id
    model.train()
    for mod in model.modules():
        if isinstance(mod, torch.nn.Dropout):
            mod.p = 0.0
    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    groups = [
        {"params": [p for n, p in params if not no_decay(n)], "weight_decay": 0.01},
        {"params": [p for n, p in params if no_decay(n)], "weight_decay": 0.0},
    ]
    opt = torch.optim.AdamW(groups, lr=1e-3, betas=(0.9, 0.999), eps=1e-6)
    losses = []
    for _ in range(3):
        opt.zero_grad()
        loss = model(input_ids=torch.tensor([inputs]),
                     labels=torch.tensor([labels])).loss
        loss.backward()
        losses.append(loss.item())
        if len(losses) == 1:
            emb = model.get_input_embeddings().weight.grad
            first_grad_norm = float(torch.sqrt(sum(
                (p.grad.double() ** 2).sum() for _, p in params if p.grad is not None)))
            emb_grad_row = emb[inputs[3]].tolist()
        opt.step()
    dump(os.path.join(out, "reference.json"), {
        "forward": records,
        "train": {
            "input_ids": inputs,
            "labels": labels,
            "lr": 1e-3,
            "weight_decay": 0.01,
            "losses": losses,
            "first_grad_norm": first_grad_norm,
            "embedding_grad_row_token": inputs[3],
            "embedding_grad_row": emb_grad_row,
        },
    })


def main():
    root = sys.argv[1]
    torch.manual_seed(1234)

    cased = train_wordpiece(os.path.join(root, "wordpiece_cased"), False)
    uncased = train_wordpiece(os.path.join(root, "wordpiece_uncased"), True)
    bpe = train_bpe(os.path.join(root, "byte_bpe"))
    dump(os.path.join(root, "tokenizer_cases.json"), {
        "wordpiece_cased": tokenizer_cases(cased, "[MASK]", "[SEP]"),
        "wordpiece_uncased": tokenizer_cases(uncased, "[MASK]", "[SEP]"),
        "byte_bpe": tokenizer_cases(bpe, "<mask>", "</s>"),
    })

    common = dict(hidden_size=32, num_hidden_layers=2, num_attention_heads=4,
                  intermediate_size=37, hidden_act="gelu",
                  hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0,
                  layer_norm_eps=1e-12, initializer_range=0.2)

    bert_dir = os.path.join(root, "tiny_bert")
    bert = BertForMaskedLM(BertConfig(vocab_size=len(cased.get_vocab()),
                                      max_position_embeddings=64,
                                      type_vocab_size=2, pad_token_id=0,
                                      **common))
    # Random init leaves some tensors at exactly zero or one; perturb them so
    # parity exercises every parameter.
    with torch.no_grad():
        for p in bert.parameters():
            p.add_(0.05 * torch.randn_like(p))
    bert.save_pretrained(bert_dir, safe_serialization=True)
    cased.save_pretrained(bert_dir)
    dump(os.path.join(bert_dir, "tokenizer_config.json"),
         {"tokenizer_class": "BertTokenizer", "do_lower_case": False})
    model_reference(bert, cased, "[MASK]", "[SEP]", bert_dir)

    roberta_dir = os.path.join(root, "tiny_roberta")
    roberta = RobertaForMaskedLM(RobertaConfig(
        vocab_size=len(bpe.get_vocab()), max_position_embeddings=66,
        type_vocab_size=1, pad_token_id=1, bos_token_id=0, eos_token_id=2,
        **common))
    with torch.no_grad():
        for p in roberta.parameters():
            p.add_(0.05 * torch.randn_like(p))
    roberta.save_pretrained(roberta_dir, safe_serialization=True)
    for name in ("vocab.json", "merges.txt"):
        with open(os.path.join(root, "byte_bpe", name), "rb") as src, \
                open(os.path.join(roberta_dir, name), "wb") as dst:
            dst.write(src.read())
    dump(os.path.join(roberta_dir, "tokenizer_config.json"),
         {"tokenizer_class": "RobertaTokenizer", "add_prefix_space": False})
    model_reference(roberta, bpe, "<mask>", "</s>", roberta_dir)


if __name__ == "__main__":
    main()
