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


#include "histore/transformer.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "histore/error.h"

namespace histore {
namespace {

template <typename S>
using Column = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
Matrix<S> linear(const Matrix<S> &x, const Matrix<S> &w, const Matrix<S> &b) {
  Matrix<S> y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates weight and bias gradients; returns the input gradient.
template <typename S>
Matrix<S> linear_backward(const Matrix<S> &dy, const Matrix<S> &x, const Matrix<S> &w,
                          Matrix<S> *dw, Matrix<S> *db) {
  dw->noalias() += dy.transpose() * x;
  db->row(0) += dy.colwise().sum();
  return dy * w;
}

template <typename S>
struct NormCache {
  Matrix<S> xhat;
  Column<S> rstd;
};

template <typename S>
Matrix<S> layer_norm(const Matrix<S> &x, const Matrix<S> &g, const Matrix<S> &b, double eps,
                     NormCache<S> *cache) {
  const auto n = x.cols();
  cache->xhat.resize(x.rows(), n);
  cache->rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S mean = x.row(r).sum() / S(n);
    auto centered = (x.row(r).array() - mean).matrix();
    S var = centered.squaredNorm() / S(n);
    S rstd = S(1) / std::sqrt(var + S(eps));
    cache->rstd(r) = rstd;
    cache->xhat.row(r) = centered * rstd;
  }
  Matrix<S> y = (cache->xhat.array().rowwise() * g.row(0).array()).matrix();
  y.rowwise() += b.row(0);
  return y;
}

template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S> &dy, const NormCache<S> &cache, const Matrix<S> &g,
                              Matrix<S> *dg, Matrix<S> *db) {
  dg->row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
  db->row(0) += dy.colwise().sum();
  Matrix<S> dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  const S n = S(dy.cols());
  Matrix<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    S mean_d = dxhat.row(r).sum() / n;
    S mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.rstd(r) *
                (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

template <typename S>
Matrix<S> gelu(const Matrix<S> &x) {
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  return x.unaryExpr([&](S v) { return S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2)); });
}

template <typename S>
Matrix<S> gelu_grad(const Matrix<S> &x) {
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  const S inv_sqrt2pi = S(1) / std::sqrt(S(2 * M_PI));
  return x.unaryExpr([&](S v) {
    return S(0.5) * (S(1) + std::erf(v * inv_sqrt2)) + v * std::exp(S(-0.5) * v * v) * inv_sqrt2pi;
  });
}

template <typename S>
void softmax_rows(Matrix<S> *m) {
  for (Eigen::Index r = 0; r < m->rows(); ++r) {
    S max = m->row(r).maxCoeff();
    m->row(r) = (m->row(r).array() - max).exp().matrix();
    m->row(r) /= m->row(r).sum();
  }
}

template <typename S>
struct LayerCache {
  Matrix<S> x, q, k, v, ctx, x1, u;
  std::vector<Matrix<S>> probs;
  NormCache<S> ln1, ln2;
};

template <typename S>
struct ForwardCache {
  NormCache<S> emb;
  std::vector<LayerCache<S>> layers;
};

template <typename S>
Matrix<S> layer_forward(const TransformerConfig &c, const TransformerLayer<S> &l,
                        const Matrix<S> &x, LayerCache<S> *cache) {
  LayerCache<S> local;
  LayerCache<S> &lc = cache ? *cache : local;
  const auto t = x.rows();
  const auto h = static_cast<Eigen::Index>(c.hidden_size);
  const auto d = h / static_cast<Eigen::Index>(c.num_heads);
  const S scale = S(1) / std::sqrt(S(d));
  lc.x = x;
  lc.q = linear(x, l.query_w, l.query_b);
  lc.k = linear(x, l.key_w, l.key_b);
  lc.v = linear(x, l.value_w, l.value_b);
  lc.ctx.resize(t, h);
  lc.probs.resize(c.num_heads);
  for (size_t head = 0; head < c.num_heads; ++head) {
    const auto off = static_cast<Eigen::Index>(head) * d;
    Matrix<S> s = (lc.q.middleCols(off, d) * lc.k.middleCols(off, d).transpose()) * scale;
    softmax_rows(&s);
    lc.ctx.middleCols(off, d) = s * lc.v.middleCols(off, d);
    lc.probs[head] = std::move(s);
  }
  Matrix<S> a = linear(lc.ctx, l.attn_out_w, l.attn_out_b);
  a += x;
  lc.x1 = layer_norm(a, l.attn_ln_g, l.attn_ln_b, c.layer_norm_eps, &lc.ln1);
  lc.u = linear(lc.x1, l.inter_w, l.inter_b);
  Matrix<S> o = linear(gelu(lc.u), l.out_w, l.out_b);
  o += lc.x1;
  return layer_norm(o, l.out_ln_g, l.out_ln_b, c.layer_norm_eps, &lc.ln2);
}

template <typename S>
Matrix<S> layer_backward(const TransformerConfig &c, const TransformerLayer<S> &l,
                         const LayerCache<S> &lc, const Matrix<S> &dout, TransformerLayer<S> *g) {
  const auto t = lc.x.rows();
  const auto h = static_cast<Eigen::Index>(c.hidden_size);
  const auto d = h / static_cast<Eigen::Index>(c.num_heads);
  const S scale = S(1) / std::sqrt(S(d));

  Matrix<S> dz2 = layer_norm_backward(dout, lc.ln2, l.out_ln_g, &g->out_ln_g, &g->out_ln_b);
  Matrix<S> dgelu = linear_backward(dz2, gelu(lc.u), l.out_w, &g->out_w, &g->out_b);
  Matrix<S> du = dgelu.cwiseProduct(gelu_grad(lc.u));
  Matrix<S> dx1 = dz2 + linear_backward(du, lc.x1, l.inter_w, &g->inter_w, &g->inter_b);
  Matrix<S> dz1 = layer_norm_backward(dx1, lc.ln1, l.attn_ln_g, &g->attn_ln_g, &g->attn_ln_b);
  Matrix<S> dctx = linear_backward(dz1, lc.ctx, l.attn_out_w, &g->attn_out_w, &g->attn_out_b);

  Matrix<S> dq(t, h), dk(t, h), dv(t, h);
  for (size_t head = 0; head < c.num_heads; ++head) {
    const auto off = static_cast<Eigen::Index>(head) * d;
    const Matrix<S> &p = lc.probs[head];
    Matrix<S> dc = dctx.middleCols(off, d);
    Matrix<S> dp = dc * lc.v.middleCols(off, d).transpose();
    dv.middleCols(off, d) = p.transpose() * dc;
    Column<S> inner = dp.cwiseProduct(p).rowwise().sum();
    Matrix<S> ds = p.cwiseProduct(Matrix<S>(dp.colwise() - inner)) * scale;
    dq.middleCols(off, d) = ds * lc.k.middleCols(off, d);
    dk.middleCols(off, d) = ds.transpose() * lc.q.middleCols(off, d);
  }
  Matrix<S> dx = dz1;
  dx += linear_backward(dq, lc.x, l.query_w, &g->query_w, &g->query_b);
  dx += linear_backward(dk, lc.x, l.key_w, &g->key_w, &g->key_b);
  dx += linear_backward(dv, lc.x, l.value_w, &g->value_w, &g->value_b);
  return dx;
}

template <typename S>
Matrix<S> forward(const TransformerConfig &c, const TransformerParams<S> &p,
                  std::span<const TokenId> ids, ForwardCache<S> *cache) {
  const auto t = static_cast<Eigen::Index>(ids.size());
  const auto off = static_cast<Eigen::Index>(c.position_offset());
  Matrix<S> e(t, static_cast<Eigen::Index>(c.hidden_size));
  for (Eigen::Index i = 0; i < t; ++i) {
    e.row(i) = p.word.row(ids[static_cast<size_t>(i)]) + p.position.row(i + off) +
               p.token_type.row(0);
  }
  NormCache<S> emb;
  Matrix<S> x = layer_norm(e, p.emb_ln_g, p.emb_ln_b, c.layer_norm_eps, cache ? &cache->emb : &emb);
  if (cache) cache->layers.resize(p.layers.size());
  for (size_t i = 0; i < p.layers.size(); ++i) {
    x = layer_forward(c, p.layers[i], x, cache ? &cache->layers[i] : nullptr);
  }
  return x;
}

template <typename S>
void set_unit_gains(TransformerParams<S> *p) {
  p->emb_ln_g.setOnes();
  p->head_ln_g.setOnes();
  for (auto &l : p->layers) {
    l.attn_ln_g.setOnes();
    l.out_ln_g.setOnes();
  }
}

template <typename S>
struct HeadCache {
  Matrix<S> hs, u;
  NormCache<S> ln;
  Matrix<S> n;
};

template <typename S>
Matrix<S> head_forward(const TransformerConfig &c, const TransformerParams<S> &p,
                       const Matrix<S> &hidden, std::span<const size_t> rows, HeadCache<S> *hc) {
  hc->hs.resize(static_cast<Eigen::Index>(rows.size()), hidden.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    hc->hs.row(static_cast<Eigen::Index>(r)) = hidden.row(static_cast<Eigen::Index>(rows[r]));
  }
  hc->u = linear(hc->hs, p.head_w, p.head_b);
  hc->n = layer_norm(gelu(hc->u), p.head_ln_g, p.head_ln_b, c.layer_norm_eps, &hc->ln);
  Matrix<S> logits = hc->n * p.word.transpose();
  logits.rowwise() += p.decoder_b.row(0);
  return logits;
}

Matrix<float> read_tensor(const std::string &data, size_t base, const json &info,
                          const std::string &name, Eigen::Index rows, Eigen::Index cols) {
  std::vector<size_t> shape = info.at("shape").get<std::vector<size_t>>();
  bool ok = (shape.size() == 2 && shape[0] == static_cast<size_t>(rows) &&
             shape[1] == static_cast<size_t>(cols)) ||
            (rows == 1 && shape.size() == 1 && shape[0] == static_cast<size_t>(cols));
  if (!ok) {
    throw Error(ErrorCode::kBackend, "tensor " + name + " has shape " + json(shape).dump() +
                                         ", expected [" + std::to_string(rows) + ", " +
                                         std::to_string(cols) + "]");
  }
  std::string dtype = info.at("dtype").get<std::string>();
  auto offsets = info.at("data_offsets").get<std::vector<size_t>>();
  const size_t count = static_cast<size_t>(rows * cols);
  size_t width = dtype == "F32" ? 4 : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
  if (width == 0) throw Error(ErrorCode::kBackend, "tensor " + name + " has unsupported dtype " + dtype);
  if (offsets.size() != 2 || offsets[1] - offsets[0] != count * width ||
      base + offsets[1] > data.size()) {
    throw Error(ErrorCode::kBackend, "tensor " + name + " has inconsistent data offsets");
  }
  const char *src = data.data() + base + offsets[0];
  Matrix<float> m(rows, cols);
  float *dst = m.data();
  for (size_t i = 0; i < count; ++i) {
    if (width == 4) {
      std::memcpy(&dst[i], src + 4 * i, 4);
      continue;
    }
    uint16_t h;
    std::memcpy(&h, src + 2 * i, 2);
    uint32_t bits;
    if (dtype == "BF16") {
      bits = static_cast<uint32_t>(h) << 16;
    } else {
      uint32_t sign = static_cast<uint32_t>(h & 0x8000) << 16;
      uint32_t exp = (h >> 10) & 0x1F;
      uint32_t mant = h & 0x3FF;
      if (exp == 0) {
        // Zero or subnormal: value = mant * 2^-24.
        float v = std::ldexp(static_cast<float>(mant), -24);
        bits = std::bit_cast<uint32_t>(v) | sign;
      } else if (exp == 31) {
        bits = sign | 0x7F800000u | (mant << 13);
      } else {
        bits = sign | ((exp + 112) << 23) | (mant << 13);
      }
    }
    dst[i] = std::bit_cast<float>(bits);
  }
  return m;
}

std::vector<std::string> alternative_names(const std::string &name) {
  std::vector<std::string> out = {name};
  for (std::string prefix : {"bert.", "roberta."}) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name.substr(prefix.size()));
  }
  size_t n = out.size();
  for (size_t i = 0; i < n; ++i) {
    const std::string s = out[i];
    auto ends = [&](std::string_view suf) {
      return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends("LayerNorm.weight")) out.push_back(s.substr(0, s.size() - 6) + "gamma");
    if (ends("LayerNorm.bias")) out.push_back(s.substr(0, s.size() - 4) + "beta");
  }
  if (name == "cls.predictions.bias") out.push_back("cls.predictions.decoder.bias");
  if (name == "lm_head.bias") out.push_back("lm_head.decoder.bias");
  return out;
}

}  // namespace

bool is_no_decay_tensor(std::string_view name) {
  return name.ends_with("bias") || name.find("LayerNorm") != std::string_view::npos ||
         name.find("layer_norm") != std::string_view::npos;
}

TransformerConfig transformer_config_from_json(const json &j) {
  TransformerConfig c;
  std::string type = j.value("model_type", std::string("bert"));
  if (type == "bert") {
    c.family = ModelFamily::kBert;
  } else if (type == "roberta" || type == "xlm-roberta" || type == "camembert") {
    c.family = ModelFamily::kRoberta;
  } else {
    throw Error(ErrorCode::kUnsupported, "unsupported model_type " + type, "model_type");
  }
  std::string act = j.value("hidden_act", std::string("gelu"));
  if (act != "gelu") {
    throw Error(ErrorCode::kUnsupported, "unsupported hidden_act " + act, "hidden_act");
  }
  std::string pos = j.value("position_embedding_type", std::string("absolute"));
  if (pos != "absolute") {
    throw Error(ErrorCode::kUnsupported, "unsupported position_embedding_type " + pos,
                "position_embedding_type");
  }
  c.vocab_size = j.at("vocab_size").get<size_t>();
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.num_layers = j.value("num_hidden_layers", c.num_layers);
  c.num_heads = j.value("num_attention_heads", c.num_heads);
  c.intermediate_size = j.value("intermediate_size", c.intermediate_size);
  c.max_position_embeddings = j.value("max_position_embeddings", c.max_position_embeddings);
  c.type_vocab_size = j.value("type_vocab_size", c.type_vocab_size);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  if (j.contains("pad_token_id") && j["pad_token_id"].is_number_integer()) {
    c.pad_token_id = j["pad_token_id"].get<TokenId>();
  } else {
    c.pad_token_id = c.family == ModelFamily::kRoberta ? 1 : 0;
  }
  c.initializer_range = j.value("initializer_range", c.initializer_range);
  return c;
}

json to_json(const TransformerConfig &c) {
  bool bert = c.family == ModelFamily::kBert;
  return {{"model_type", bert ? "bert" : "roberta"},
          {"architectures", {bert ? "BertForMaskedLM" : "RobertaForMaskedLM"}},
          {"vocab_size", c.vocab_size},
          {"hidden_size", c.hidden_size},
          {"num_hidden_layers", c.num_layers},
          {"num_attention_heads", c.num_heads},
          {"intermediate_size", c.intermediate_size},
          {"max_position_embeddings", c.max_position_embeddings},
          {"type_vocab_size", c.type_vocab_size},
          {"layer_norm_eps", c.layer_norm_eps},
          {"pad_token_id", c.pad_token_id},
          {"initializer_range", c.initializer_range},
          {"hidden_act", "gelu"},
          {"position_embedding_type", "absolute"},
          {"hidden_dropout_prob", 0.1},
          {"attention_probs_dropout_prob", 0.1},
          {"tie_word_embeddings", true}};
}

template <typename S>
TransformerModel<S>::TransformerModel(TransformerConfig config) : config_(std::move(config)) {
  const auto &c = config_;
  if (c.vocab_size == 0 || c.hidden_size == 0 || c.num_heads == 0 ||
      c.hidden_size % c.num_heads != 0 || c.intermediate_size == 0 || c.type_vocab_size == 0 ||
      c.max_position_embeddings <= c.position_offset()) {
    throw Error(ErrorCode::kConfig, "inconsistent transformer dimensions");
  }
  params_ = zeros_like();
  set_unit_gains(&params_);
}

template <typename S>
TransformerParams<S> TransformerModel<S>::zeros_like() const {
  const auto &c = config_;
  auto h = static_cast<Eigen::Index>(c.hidden_size);
  auto i = static_cast<Eigen::Index>(c.intermediate_size);
  auto z = [](Eigen::Index r, Eigen::Index k) { return Matrix<S>::Zero(r, k); };
  TransformerParams<S> p;
  p.word = z(static_cast<Eigen::Index>(c.vocab_size), h);
  p.position = z(static_cast<Eigen::Index>(c.max_position_embeddings), h);
  p.token_type = z(static_cast<Eigen::Index>(c.type_vocab_size), h);
  p.emb_ln_g = z(1, h);
  p.emb_ln_b = z(1, h);
  p.layers.resize(c.num_layers);
  for (auto &l : p.layers) {
    l.query_w = l.key_w = l.value_w = l.attn_out_w = z(h, h);
    l.query_b = l.key_b = l.value_b = l.attn_out_b = l.attn_ln_b = l.out_b = l.out_ln_b = z(1, h);
    l.attn_ln_g = l.out_ln_g = z(1, h);
    l.inter_w = z(i, h);
    l.inter_b = z(1, i);
    l.out_w = z(h, i);
  }
  p.head_w = z(h, h);
  p.head_b = p.head_ln_b = z(1, h);
  p.head_ln_g = z(1, h);
  p.decoder_b = z(1, static_cast<Eigen::Index>(c.vocab_size));
  return p;
}

template <typename S>
void TransformerModel<S>::init_random(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, config_.initializer_range);
  params_ = zeros_like();
  set_unit_gains(&params_);
  for (auto &[name, m] : named_tensors(params_, config_.family)) {
    if (is_no_decay_tensor(name)) continue;
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = static_cast<S>(normal(rng));
  }
  if (config_.pad_token_id >= 0 && static_cast<size_t>(config_.pad_token_id) < config_.vocab_size) {
    params_.word.row(config_.pad_token_id).setZero();
  }
}

template <typename S>
void TransformerModel<S>::check_ids(std::span<const TokenId> ids) const {
  if (ids.empty()) throw Error(ErrorCode::kInvalidArgument, "empty token sequence");
  if (ids.size() > config_.max_sequence_length()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                    std::to_string(config_.max_sequence_length()));
  }
  for (TokenId id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= config_.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
    }
  }
}

template <typename S>
Matrix<S> TransformerModel<S>::hidden_states(std::span<const TokenId> ids) const {
  check_ids(ids);
  return forward<S>(config_, params_, ids, nullptr);
}

template <typename S>
Matrix<S> TransformerModel<S>::mlm_logits(const Matrix<S> &hidden,
                                          std::span<const size_t> rows) const {
  HeadCache<S> hc;
  return head_forward(config_, params_, hidden, rows, &hc);
}

template <typename S>
std::pair<double, size_t> TransformerModel<S>::mlm_loss(std::span<const TokenId> ids,
                                                        std::span<const TokenId> labels,
                                                        TransformerParams<S> *grad) const {
  check_ids(ids);
  if (labels.size() != ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, "labels and input ids differ in length");
  }
  std::vector<size_t> rows;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= config_.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument, "label out of range: " + std::to_string(labels[i]));
    }
    rows.push_back(i);
  }
  if (rows.empty()) return {0.0, 0};

  ForwardCache<S> cache;
  Matrix<S> hidden = forward<S>(config_, params_, ids, grad ? &cache : nullptr);
  HeadCache<S> hc;
  Matrix<S> logits = head_forward(config_, params_, hidden, rows, &hc);
  double loss = 0;
  for (size_t r = 0; r < rows.size(); ++r) {
    auto row = logits.row(static_cast<Eigen::Index>(r));
    S max = row.maxCoeff();
    S lse = max + std::log((row.array() - max).exp().sum());
    loss += static_cast<double>(lse - row(labels[rows[r]]));
  }
  if (!grad) return {loss, rows.size()};

  Matrix<S> dlogits = logits;
  softmax_rows(&dlogits);
  for (size_t r = 0; r < rows.size(); ++r) {
    dlogits(static_cast<Eigen::Index>(r), labels[rows[r]]) -= S(1);
  }
  const auto &p = params_;
  auto *g = grad;
  g->word.noalias() += dlogits.transpose() * hc.n;
  g->decoder_b.row(0) += dlogits.colwise().sum();
  Matrix<S> dn = dlogits * p.word;
  Matrix<S> dgelu = layer_norm_backward(dn, hc.ln, p.head_ln_g, &g->head_ln_g, &g->head_ln_b);
  Matrix<S> du = dgelu.cwiseProduct(gelu_grad(hc.u));
  Matrix<S> dhs = linear_backward(du, hc.hs, p.head_w, &g->head_w, &g->head_b);

  Matrix<S> d = Matrix<S>::Zero(hidden.rows(), hidden.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    d.row(static_cast<Eigen::Index>(rows[r])) += dhs.row(static_cast<Eigen::Index>(r));
  }
  for (size_t i = p.layers.size(); i-- > 0;) {
    d = layer_backward(config_, p.layers[i], cache.layers[i], d, &g->layers[i]);
  }
  Matrix<S> de = layer_norm_backward(d, cache.emb, p.emb_ln_g, &g->emb_ln_g, &g->emb_ln_b);
  const auto off = static_cast<Eigen::Index>(config_.position_offset());
  for (size_t t = 0; t < ids.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    g->word.row(ids[t]) += de.row(ti);
    g->position.row(ti + off) += de.row(ti);
  }
  g->token_type.row(0) += de.colwise().sum();
  return {loss, rows.size()};
}

template class TransformerModel<float>;
template class TransformerModel<double>;

TransformerModel<float> load_safetensors(const std::filesystem::path &file,
                                         const TransformerConfig &config) {
  std::string data = read_file(file);
  if (data.size() < 8) throw Error(ErrorCode::kBackend, "truncated safetensors file " + file.string());
  uint64_t header_len = 0;
  std::memcpy(&header_len, data.data(), 8);
  if (8 + header_len > data.size()) {
    throw Error(ErrorCode::kBackend, "corrupt safetensors header in " + file.string());
  }
  json header = json::parse(data.substr(8, header_len));
  const size_t base = 8 + header_len;
  TransformerModel<float> model(config);
  for (auto &[name, m] : named_tensors(model.params(), config.family)) {
    const json *info = nullptr;
    for (const auto &alt : alternative_names(name)) {
      if (header.contains(alt)) {
        info = &header[alt];
        break;
      }
    }
    if (!info) throw Error(ErrorCode::kBackend, "checkpoint lacks tensor " + name);
    *m = read_tensor(data, base, *info, name, m->rows(), m->cols());
  }
  return model;
}

void save_safetensors(const TransformerModel<float> &model, const std::filesystem::path &file) {
  auto tensors = named_tensors(model.params(), model.config().family);
  json header = json::object();
  size_t offset = 0;
  for (const auto &[name, m] : tensors) {
    size_t bytes = static_cast<size_t>(m->size()) * sizeof(float);
    json shape = m->rows() == 1 && name.find("embeddings") == std::string::npos &&
                         !name.ends_with("dense.weight")
                     ? json::array({m->cols()})
                     : json::array({m->rows(), m->cols()});
    header[name] = {{"dtype", "F32"}, {"shape", shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  header["__metadata__"] = {{"format", "pt"}};
  std::string h = header.dump();
  while ((8 + h.size()) % 8 != 0) h.push_back(' ');
  std::string out(8, '\0');
  uint64_t len = h.size();
  std::memcpy(out.data(), &len, 8);
  out += h;
  out.reserve(out.size() + offset);
  for (const auto &[name, m] : tensors) {
    out.append(reinterpret_cast<const char *>(m->data()),
               static_cast<size_t>(m->size()) * sizeof(float));
  }
  write_file_atomic(file, out);
}

TransformerEncoder::TransformerEncoder(std::string model_id, TransformerModel<float> model,
                                       std::unique_ptr<Tokenizer> tokenizer)
    : model_(std::move(model)), tokenizer_(std::move(tokenizer)) {
  const auto &c = model_.config();
  if (tokenizer_->vocab_size() > c.vocab_size) {
    throw Error(ErrorCode::kBackend, "tokenizer has " + std::to_string(tokenizer_->vocab_size()) +
                                         " tokens but the model only " +
                                         std::to_string(c.vocab_size));
  }
  const auto &sp = tokenizer_->specials();
  for (const auto &t : {sp.mask, sp.sep}) {
    if (tokenizer_->encode(t).size() != 1) {
      throw Error(ErrorCode::kBackend, "special token " + t + " is not a single token");
    }
  }
  handle_ = {std::move(model_id), c.hidden_size, c.max_sequence_length(), sp.mask, sp.sep,
             c.vocab_size};
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::load(const std::filesystem::path &dir,
                                                             const std::string &model_id) {
  auto config = transformer_config_from_json(read_json(dir / "config.json"));
  auto model = load_safetensors(dir / "model.safetensors", config);
  std::string id = model_id.empty() ? dir.filename().string() : model_id;
  return std::make_unique<TransformerEncoder>(id, std::move(model), load_tokenizer(dir));
}

TopKPrediction TransformerEncoder::predict_masked_topk(const TokenizedPrompt &prompt,
                                                       size_t k) const {
  check_prompt(prompt);
  Matrix<float> hidden = model_.hidden_states(prompt.token_ids);
  size_t row = prompt.mask_index;
  Matrix<float> logits = model_.mlm_logits(hidden, std::span<const size_t>(&row, 1));
  std::vector<double> probs(static_cast<size_t>(logits.cols()));
  double max = logits.maxCoeff();
  double z = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(static_cast<double>(logits(0, static_cast<Eigen::Index>(i))) - max);
    z += probs[i];
  }
  for (double &p : probs) p /= z;
  if (k > probs.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k = " + std::to_string(k) + " exceeds the vocabulary size " +
                    std::to_string(probs.size()),
                "k");
  }
  // Rows past the tokenizer's vocabulary are padding and never reported.
  probs.resize(tokenizer_->vocab_size());
  return top_k(probs, std::min(k, probs.size()), *tokenizer_);
}

MaskEmbedding TransformerEncoder::mask_hidden_state(const TokenizedPrompt &prompt) const {
  check_prompt(prompt);
  Matrix<float> hidden = model_.hidden_states(prompt.token_ids);
  MaskEmbedding e{prompt.instance_id, prompt.model_id, prompt.template_id, {}};
  auto row = hidden.row(static_cast<Eigen::Index>(prompt.mask_index));
  e.vector.assign(row.data(), row.data() + row.size());
  return e;
}

TrainingTrace TransformerEncoder::train_mlm(std::span<const MaskedBatch> batches,
                                            const OptimizerConfig &config) {
  if (!(config.learning_rate > 0) || !(config.epsilon > 0) || config.beta1 < 0 ||
      config.beta1 >= 1 || config.beta2 < 0 || config.beta2 >= 1 || config.weight_decay < 0) {
    throw Error(ErrorCode::kConfig, "invalid optimizer configuration");
  }
  const auto family = model_.config().family;
  auto params = named_tensors(model_.params(), family);
  TransformerParams<float> m = model_.zeros_like(), v = model_.zeros_like();
  auto ms = named_tensors(m, family);
  auto vs = named_tensors(v, family);
  TrainingTrace trace;
  size_t step = 0;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0;
    size_t epoch_steps = 0;
    for (const auto &batch : batches) {
      TransformerParams<float> grad = model_.zeros_like();
      double loss = 0;
      size_t count = 0;
      for (const auto &ex : batch.examples) {
        auto [l, n] = model_.mlm_loss(ex.input_ids, ex.labels, &grad);
        loss += l;
        count += n;
      }
      if (count == 0) continue;
      loss /= static_cast<double>(count);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNumeric, "non-finite loss in batch " + batch.batch_id, "batch_id");
      }
      ++step;
      auto gs = named_tensors(grad, family);
      const float lr = static_cast<float>(config.learning_rate);
      const float b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
      const float bc1 = static_cast<float>(1 - std::pow(config.beta1, step));
      const float bc2_sqrt = static_cast<float>(std::sqrt(1 - std::pow(config.beta2, step)));
      const float step_size = lr / bc1;
      const float eps = static_cast<float>(config.epsilon);
      const float inv_count = 1.0f / static_cast<float>(count);
      for (size_t i = 0; i < params.size(); ++i) {
        auto &p = *params[i].second;
        auto g = (gs[i].second->array() * inv_count).eval();
        auto &mi = *ms[i].second;
        auto &vi = *vs[i].second;
        if (!is_no_decay_tensor(params[i].first) && config.weight_decay > 0) {
          p *= 1.0f - lr * static_cast<float>(config.weight_decay);
        }
        mi.array() = b1 * mi.array() + (1 - b1) * g;
        vi.array() = b2 * vi.array() + (1 - b2) * g * g;
        p.array() -= step_size * mi.array() / (vi.array().sqrt() / bc2_sqrt + eps);
      }
      trace.step_losses.push_back(loss);
      epoch_sum += loss;
      ++epoch_steps;
    }
    if (epoch_steps == 0) {
      throw Error(ErrorCode::kInvalidArgument, "no batch contains a masked position");
    }
    trace.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_steps));
  }
  return trace;
}

void TransformerEncoder::save(const std::filesystem::path &dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.json", to_json(model_.config()).dump(2));
  save_safetensors(model_, dir / "model.safetensors");
  tokenizer_->save(dir);
}

std::unique_ptr<TransformerEncoder> init_wordpiece_encoder(std::string model_id,
                                                           std::span<const std::string> texts,
                                                           size_t max_words,
                                                           TransformerConfig config,
                                                           uint64_t seed) {
  WordPieceOptions options;
  auto vocab = build_wordpiece_vocab(texts, max_words, options);
  config.family = ModelFamily::kBert;
  config.vocab_size = vocab.size();
  config.pad_token_id = 0;
  TransformerModel<float> model(config);
  model.init_random(seed);
  return std::make_unique<TransformerEncoder>(
      std::move(model_id), std::move(model),
      std::make_unique<WordPieceTokenizer>(std::move(vocab), options));
}

}  // namespace histore
