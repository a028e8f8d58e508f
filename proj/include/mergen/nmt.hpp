//
// Copyright 2026 The Mergen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Encoder-decoder translator: bi-directional GRU encoder, additive
// attention, GRU decoder, teacher-forced cross-entropy. Forward and
// reverse-mode gradients are written out by hand; the encoder walks only
// the real (non-PAD) positions of each row, and attention masks padding,
// so padded batches are bit-identical to unpadded ones.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mergen/corpus.hpp"
#include "mergen/error.hpp"
#include "mergen/io.hpp"
#include "mergen/linalg.hpp"
#include "mergen/rng.hpp"

namespace mergen::nmt {

using corpus::ParallelPair;
using corpus::Sentence;

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kSos = 2;
inline constexpr int kEos = 3;

struct Vocab {
  std::vector<std::string> words;  // id -> token, [0..3] reserved
  std::unordered_map<std::string, int> ids;
  int min_freq = 1;

  static Vocab build(const std::vector<Sentence>& sentences, int min_freq) {
    Vocab v;
    v.min_freq = min_freq;
    v.words = {"<pad>", "<unk>", "<sos>", "<eos>"};
    std::map<std::string, long> freq;  // ordered so ties sort lexicographically
    for (const auto& s : sentences) {
      for (const auto& tok : s) ++freq[tok];
    }
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, f] : items) {
      if (f >= min_freq) v.words.push_back(w);
    }
    for (int i = 0; i < static_cast<int>(v.words.size()); ++i) v.ids[v.words[i]] = i;
    return v;
  }

  int encode(const std::string& tok) const {
    auto it = ids.find(tok);
    return it == ids.end() ? kUnk : it->second;
  }

  const std::string& decode(int id) const { return words.at(id); }
  int size() const { return static_cast<int>(words.size()); }
};

// ---------------------------------------------------------------------------
// Parameters

struct GruParams {
  Mat wz, uz;
  Vec bz;
  Mat wr, ur;
  Vec br;
  Mat wh, uh;
  Vec bh;

  GruParams() = default;
  GruParams(int input, int hidden)
      : wz(hidden, input),
        uz(hidden, hidden),
        bz(hidden, 0.0),
        wr(hidden, input),
        ur(hidden, hidden),
        br(hidden, 0.0),
        wh(hidden, input),
        uh(hidden, hidden),
        bh(hidden, 0.0) {}
};

struct Params {
  int emb_dim = 0;
  int hidden_dim = 0;
  Mat src_embed, tgt_embed;    // |V| x E
  GruParams enc_fwd, enc_bwd;  // input E
  GruParams dec;               // input E + 2H
  Mat attn_w;                  // H x H   (applied to the decoder state)
  Mat attn_u;                  // H x 2H  (applied to an annotation)
  Vec attn_v;                  // H
  Mat bridge;                  // H x 2H  (final encoder states -> initial decoder state)
  Mat out_w;                   // |Vt| x (H + 2H + E)
  Vec out_b;                   // |Vt|

  static Params make(int src_vocab, int tgt_vocab, int emb_dim, int hidden_dim) {
    Params p;
    p.emb_dim = emb_dim;
    p.hidden_dim = hidden_dim;
    p.src_embed = Mat(src_vocab, emb_dim);
    p.tgt_embed = Mat(tgt_vocab, emb_dim);
    p.enc_fwd = GruParams(emb_dim, hidden_dim);
    p.enc_bwd = GruParams(emb_dim, hidden_dim);
    p.dec = GruParams(emb_dim + 2 * hidden_dim, hidden_dim);
    p.attn_w = Mat(hidden_dim, hidden_dim);
    p.attn_u = Mat(hidden_dim, 2 * hidden_dim);
    p.attn_v.assign(hidden_dim, 0.0);
    p.bridge = Mat(hidden_dim, 2 * hidden_dim);
    p.out_w = Mat(tgt_vocab, 3 * hidden_dim + emb_dim);
    p.out_b.assign(tgt_vocab, 0.0);
    return p;
  }
};

// Every tensor, in a fixed order shared by the optimizer, the clip norm,
// checkpointing, and the finite-difference harness.
struct TensorRefs {
  std::vector<std::pair<std::string, Mat*>> mats;
  std::vector<std::pair<std::string, Vec*>> vecs;
};

inline TensorRefs tensor_refs(Params& p) {
  TensorRefs r;
  auto gru = [&r](const std::string& prefix, GruParams& g) {
    r.mats.push_back({prefix + ".wz", &g.wz});
    r.mats.push_back({prefix + ".uz", &g.uz});
    r.vecs.push_back({prefix + ".bz", &g.bz});
    r.mats.push_back({prefix + ".wr", &g.wr});
    r.mats.push_back({prefix + ".ur", &g.ur});
    r.vecs.push_back({prefix + ".br", &g.br});
    r.mats.push_back({prefix + ".wh", &g.wh});
    r.mats.push_back({prefix + ".uh", &g.uh});
    r.vecs.push_back({prefix + ".bh", &g.bh});
  };
  r.mats.push_back({"src_embed", &p.src_embed});
  r.mats.push_back({"tgt_embed", &p.tgt_embed});
  gru("enc_fwd", p.enc_fwd);
  gru("enc_bwd", p.enc_bwd);
  gru("dec", p.dec);
  r.mats.push_back({"attn_w", &p.attn_w});
  r.mats.push_back({"attn_u", &p.attn_u});
  r.vecs.push_back({"attn_v", &p.attn_v});
  r.mats.push_back({"bridge", &p.bridge});
  r.mats.push_back({"out_w", &p.out_w});
  r.vecs.push_back({"out_b", &p.out_b});
  return r;
}

inline void zero_params(Params& p) {
  TensorRefs r = tensor_refs(p);
  for (auto& [name, m] : r.mats) m->zero();
  for (auto& [name, v] : r.vecs) std::fill(v->begin(), v->end(), 0.0);
}

inline Params zeros_like(const Params& p) {
  Params g = Params::make(p.src_embed.rows, p.tgt_embed.rows, p.emb_dim, p.hidden_dim);
  return g;
}

struct Model {
  Vocab src_vocab, tgt_vocab;
  Params params;
};

inline Model init_model(const Vocab& src, const Vocab& tgt, int emb_dim, int hidden_dim,
                        std::uint64_t seed) {
  Model m;
  m.src_vocab = src;
  m.tgt_vocab = tgt;
  m.params = Params::make(src.size(), tgt.size(), emb_dim, hidden_dim);
  Rng rng(seed);
  TensorRefs r = tensor_refs(m.params);
  for (auto& [name, mat] : r.mats) mat->fill_uniform(rng, -0.08, 0.08);
  for (auto& [name, vec] : r.vecs) fill_uniform(*vec, rng, -0.08, 0.08);
  return m;
}

// ---------------------------------------------------------------------------
// Batches

struct Batch {
  int size = 0;
  int src_len = 0;  // width of the source id matrix
  int tgt_len = 0;  // width of the target id matrix (SOS ... EOS, then PAD)
  std::vector<int> src, tgt;
  std::vector<int> src_lengths, tgt_lengths;

  int src_at(int b, int t) const { return src[static_cast<std::size_t>(b) * src_len + t]; }
  int tgt_at(int b, int t) const { return tgt[static_cast<std::size_t>(b) * tgt_len + t]; }
};

inline Batch make_batch(const std::vector<ParallelPair>& pairs, const Vocab& src_vocab,
                        const Vocab& tgt_vocab, std::size_t begin, std::size_t end,
                        int pad_src_to = 0, int pad_tgt_to = 0) {
  Batch b;
  b.size = static_cast<int>(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    b.src_len = std::max(b.src_len, static_cast<int>(pairs[i].source.size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(pairs[i].target.size()) + 2);
  }
  b.src_len = std::max(b.src_len, pad_src_to);
  b.tgt_len = std::max(b.tgt_len, pad_tgt_to);
  b.src.assign(static_cast<std::size_t>(b.size) * b.src_len, kPad);
  b.tgt.assign(static_cast<std::size_t>(b.size) * b.tgt_len, kPad);
  for (std::size_t i = begin; i < end; ++i) {
    const int row = static_cast<int>(i - begin);
    const auto& p = pairs[i];
    b.src_lengths.push_back(static_cast<int>(p.source.size()));
    b.tgt_lengths.push_back(static_cast<int>(p.target.size()) + 2);
    for (std::size_t t = 0; t < p.source.size(); ++t) {
      b.src[static_cast<std::size_t>(row) * b.src_len + t] = src_vocab.encode(p.source[t]);
    }
    std::size_t off = static_cast<std::size_t>(row) * b.tgt_len;
    b.tgt[off] = kSos;
    for (std::size_t t = 0; t < p.target.size(); ++t) b.tgt[off + 1 + t] = tgt_vocab.encode(p.target[t]);
    b.tgt[off + 1 + p.target.size()] = kEos;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Shared masked softmax kernel (attention weights and output cross-entropy).
// Masked entries get probability exactly 0. Returns log-sum-exp over kept
// entries so callers can form cross-entropy as lse - logit[label].

inline double masked_softmax_inplace(Vec& x, const std::vector<char>* keep) {
  double mx = -HUGE_VAL;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep && !(*keep)[i]) continue;
    mx = std::max(mx, x[i]);
  }
  if (mx == -HUGE_VAL) throw Error(Err::AllMasked, "softmax over an empty support");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep && !(*keep)[i]) continue;
    sum += std::exp(x[i] - mx);
  }
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (keep && !(*keep)[i]) ? 0.0 : std::exp(x[i] - lse);
  }
  return lse;
}

// ---------------------------------------------------------------------------
// GRU cell
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hbar = tanh(Wh x + Uh (r .* h) + bh)
//   out = (1 - z) .* h + z .* hbar

struct GruCache {
  Vec x, h_prev, z, r, rh, hbar;
};

inline Vec gru_cell(const GruParams& g, const Vec& x, const Vec& h, GruCache* cache = nullptr) {
  const int hidden = static_cast<int>(h.size());
  Vec z, r;
  matvec(g.wz, x, z);
  matvec_add(g.uz, h, z);
  axpy(1.0, g.bz, z);
  sigmoid_inplace(z);
  matvec(g.wr, x, r);
  matvec_add(g.ur, h, r);
  axpy(1.0, g.br, r);
  sigmoid_inplace(r);
  Vec rh(hidden);
  for (int i = 0; i < hidden; ++i) rh[i] = r[i] * h[i];
  Vec hbar;
  matvec(g.wh, x, hbar);
  matvec_add(g.uh, rh, hbar);
  axpy(1.0, g.bh, hbar);
  tanh_inplace(hbar);
  Vec out(hidden);
  for (int i = 0; i < hidden; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * hbar[i];
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->rh = std::move(rh);
    cache->hbar = std::move(hbar);
  }
  return out;
}

// Accumulates parameter gradients and returns gradients w.r.t. the step
// inputs: dx (added) and dh_prev (added).
inline void gru_cell_backward(const GruParams& g, const GruCache& c, const Vec& dh_out,
                              GruParams& grad, Vec& dx, Vec& dh_prev) {
  const int hidden = static_cast<int>(c.h_prev.size());
  Vec dhbar(hidden), dz(hidden);
  for (int i = 0; i < hidden; ++i) {
    dhbar[i] = dh_out[i] * c.z[i];
    dz[i] = dh_out[i] * (c.hbar[i] - c.h_prev[i]);
    dh_prev[i] += dh_out[i] * (1.0 - c.z[i]);
  }
  // candidate path
  Vec da_h(hidden);
  for (int i = 0; i < hidden; ++i) da_h[i] = dhbar[i] * (1.0 - c.hbar[i] * c.hbar[i]);
  add_outer(grad.wh, da_h, c.x);
  add_outer(grad.uh, da_h, c.rh);
  axpy(1.0, da_h, grad.bh);
  matvec_t_add(g.wh, da_h, dx);
  Vec drh(static_cast<std::size_t>(hidden), 0.0);
  matvec_t_add(g.uh, da_h, drh);
  Vec dr(hidden);
  for (int i = 0; i < hidden; ++i) {
    dr[i] = drh[i] * c.h_prev[i];
    dh_prev[i] += drh[i] * c.r[i];
  }
  // gates
  Vec da_z(hidden), da_r(hidden);
  for (int i = 0; i < hidden; ++i) {
    da_z[i] = dz[i] * c.z[i] * (1.0 - c.z[i]);
    da_r[i] = dr[i] * c.r[i] * (1.0 - c.r[i]);
  }
  add_outer(grad.wz, da_z, c.x);
  add_outer(grad.uz, da_z, c.h_prev);
  axpy(1.0, da_z, grad.bz);
  matvec_t_add(g.wz, da_z, dx);
  matvec_t_add(g.uz, da_z, dh_prev);
  add_outer(grad.wr, da_r, c.x);
  add_outer(grad.ur, da_r, c.h_prev);
  axpy(1.0, da_r, grad.br);
  matvec_t_add(g.wr, da_r, dx);
  matvec_t_add(g.ur, da_r, dh_prev);
}

// ---------------------------------------------------------------------------
// Encoder

struct EncRow {
  std::vector<GruCache> fwd, bwd;  // one cache per real position
  std::vector<Vec> fwd_h, bwd_h;   // state at each real position
  std::vector<Vec> ann;            // src_len annotations of 2H; zero beyond length
  std::vector<Vec> ua_ann;         // attn_u * ann[j] for real j (shared across steps)
  Vec enc_final;                   // concat(final fwd state, final bwd state)
  Vec s0;                          // tanh(bridge * enc_final)
  int length = 0;
};

struct EncodeResult {
  std::vector<EncRow> rows;
};

inline EncodeResult encode(const Params& p, const Batch& batch) {
  const int hidden = p.hidden_dim;
  EncodeResult res;
  res.rows.resize(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    EncRow& row = res.rows[b];
    const int len = batch.src_lengths[b];
    row.length = len;
    row.fwd.resize(len);
    row.bwd.resize(len);
    row.fwd_h.resize(len);
    row.bwd_h.resize(len);
    Vec h(static_cast<std::size_t>(hidden), 0.0);
    for (int t = 0; t < len; ++t) {
      const double* e = p.src_embed.row(batch.src_at(b, t));
      Vec x(e, e + p.emb_dim);
      h = gru_cell(p.enc_fwd, x, h, &row.fwd[t]);
      row.fwd_h[t] = h;
    }
    Vec hb(static_cast<std::size_t>(hidden), 0.0);
    for (int t = len - 1; t >= 0; --t) {
      const double* e = p.src_embed.row(batch.src_at(b, t));
      Vec x(e, e + p.emb_dim);
      hb = gru_cell(p.enc_bwd, x, hb, &row.bwd[t]);
      row.bwd_h[t] = hb;
    }
    row.ann.assign(batch.src_len, Vec(static_cast<std::size_t>(2 * hidden), 0.0));
    for (int t = 0; t < len; ++t) {
      std::copy(row.fwd_h[t].begin(), row.fwd_h[t].end(), row.ann[t].begin());
      std::copy(row.bwd_h[t].begin(), row.bwd_h[t].end(), row.ann[t].begin() + hidden);
    }
    row.ua_ann.resize(len);
    for (int t = 0; t < len; ++t) matvec(p.attn_u, row.ann[t], row.ua_ann[t]);
    row.enc_final.assign(static_cast<std::size_t>(2 * hidden), 0.0);
    if (len > 0) {
      std::copy(row.fwd_h[len - 1].begin(), row.fwd_h[len - 1].end(), row.enc_final.begin());
      std::copy(row.bwd_h[0].begin(), row.bwd_h[0].end(), row.enc_final.begin() + hidden);
    }
    matvec(p.bridge, row.enc_final, row.s0);
    tanh_inplace(row.s0);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Additive attention over one row's annotations.

struct AttnCache {
  std::vector<Vec> tanh_q;  // per real position
  Vec alpha;                // src_len, exactly 0 on padded positions
  Vec context;              // 2H
};

inline void attention(const Params& p, const Vec& state, const EncRow& row, AttnCache& cache) {
  const int hidden = p.hidden_dim;
  const int len = row.length;
  if (len == 0) throw Error(Err::AllMasked, "attention over a zero-length row");
  Vec ws;
  matvec(p.attn_w, state, ws);
  cache.tanh_q.resize(len);
  Vec scores(static_cast<std::size_t>(row.ann.size()), -HUGE_VAL);
  std::vector<char> keep(row.ann.size(), 0);
  for (int j = 0; j < len; ++j) {
    Vec q = ws;
    axpy(1.0, row.ua_ann[j], q);
    tanh_inplace(q);
    scores[j] = dot(q, p.attn_v);
    cache.tanh_q[j] = std::move(q);
    keep[j] = 1;
  }
  masked_softmax_inplace(scores, &keep);
  cache.alpha = std::move(scores);
  cache.context.assign(static_cast<std::size_t>(2 * hidden), 0.0);
  for (int j = 0; j < len; ++j) axpy(cache.alpha[j], row.ann[j], cache.context);
}

// Backward through one attention call. d_ann accumulates per-position
// annotation gradients; returns via dquery the gradient on the state.
inline void attention_backward(const Params& p, const EncRow& row, const AttnCache& cache,
                               const Vec& dcontext, const Vec& query, Params& grad, Vec& dquery,
                               std::vector<Vec>& d_ann) {
  const int len = row.length;
  Vec dalpha(static_cast<std::size_t>(len), 0.0);
  for (int j = 0; j < len; ++j) {
    dalpha[j] = dot(dcontext, row.ann[j]);
    axpy(cache.alpha[j], dcontext, d_ann[j]);
  }
  double inner = 0.0;
  for (int j = 0; j < len; ++j) inner += cache.alpha[j] * dalpha[j];
  for (int j = 0; j < len; ++j) {
    const double de = cache.alpha[j] * (dalpha[j] - inner);
    if (de == 0.0) continue;
    const Vec& tq = cache.tanh_q[j];
    axpy(de, tq, grad.attn_v);
    Vec dq(tq.size());
    for (std::size_t i = 0; i < tq.size(); ++i) dq[i] = de * p.attn_v[i] * (1.0 - tq[i] * tq[i]);
    add_outer(grad.attn_w, dq, query);
    matvec_t_add(p.attn_w, dq, dquery);
    add_outer(grad.attn_u, dq, row.ann[j]);
    matvec_t_add(p.attn_u, dq, d_ann[j]);
  }
}

// ---------------------------------------------------------------------------
// Forward pass with teacher forcing.

struct StepCache {
  int y_in = 0;     // decoder input token
  int label = 0;    // gold next token; PAD steps carry no loss
  AttnCache attn;
  GruCache gru;
  Vec u;            // concat(new state, context, embedded input)
  Vec probs;        // softmax over target vocab
};

struct RowCache {
  std::vector<StepCache> steps;
  std::vector<Vec> states;  // s_0 .. s_steps
};

struct ForwardCache {
  EncodeResult enc;
  std::vector<RowCache> rows;
  double loss_sum = 0.0;
  long loss_tokens = 0;
};

struct LossStats {
  double sum = 0.0;
  long tokens = 0;

  double mean() const { return tokens > 0 ? sum / tokens : 0.0; }
};

// Teacher forcing feeds the gold previous token with probability
// `teacher_forcing` (always, at the default 1.0); otherwise the model's own
// argmax. Loss is the mean cross-entropy over non-PAD target positions.
inline LossStats forward_loss(const Model& model, const Batch& batch, ForwardCache* cache,
                              double teacher_forcing = 1.0, Rng* sample_rng = nullptr) {
  const Params& p = model.params;
  const int hidden = p.hidden_dim;
  EncodeResult enc = encode(p, batch);
  LossStats stats;
  std::vector<RowCache> rows(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    const EncRow& erow = enc.rows[b];
    RowCache& rc = rows[b];
    Vec s = erow.s0;
    rc.states.push_back(s);
    int prev_argmax = kSos;
    for (int t = 0; t + 1 < batch.tgt_len; ++t) {
      StepCache sc;
      int gold_in = batch.tgt_at(b, t);
      sc.y_in = gold_in;
      if (teacher_forcing < 1.0 && t > 0 && sample_rng &&
          sample_rng->uniform() >= teacher_forcing) {
        sc.y_in = prev_argmax;
      }
      sc.label = batch.tgt_at(b, t + 1);
      const double* e = p.tgt_embed.row(sc.y_in);
      Vec emb(e, e + p.emb_dim);
      attention(p, s, erow, sc.attn);
      Vec x(p.emb_dim + 2 * hidden);
      std::copy(emb.begin(), emb.end(), x.begin());
      std::copy(sc.attn.context.begin(), sc.attn.context.end(), x.begin() + p.emb_dim);
      Vec s_new = gru_cell(p.dec, x, s, &sc.gru);
      sc.u.assign(static_cast<std::size_t>(3 * hidden + p.emb_dim), 0.0);
      std::copy(s_new.begin(), s_new.end(), sc.u.begin());
      std::copy(sc.attn.context.begin(), sc.attn.context.end(), sc.u.begin() + hidden);
      std::copy(emb.begin(), emb.end(), sc.u.begin() + 3 * hidden);
      Vec logits;
      matvec(p.out_w, sc.u, logits);
      axpy(1.0, p.out_b, logits);
      const double gold_logit = sc.label == kPad ? 0.0 : logits[sc.label];
      double lse = masked_softmax_inplace(logits, nullptr);
      sc.probs = std::move(logits);
      if (sc.label != kPad) {
        stats.sum += lse - gold_logit;
        ++stats.tokens;
      }
      prev_argmax = static_cast<int>(
          std::max_element(sc.probs.begin(), sc.probs.end()) - sc.probs.begin());
      s = std::move(s_new);
      rc.states.push_back(s);
      rc.steps.push_back(std::move(sc));
    }
  }
  if (cache) {
    cache->enc = std::move(enc);
    cache->rows = std::move(rows);
    cache->loss_sum = stats.sum;
    cache->loss_tokens = stats.tokens;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Reverse mode. Gradients are of the scalar mean loss; PAD-labelled steps
// contribute exactly nothing.

inline Params backward(const Model& model, const Batch& batch, const ForwardCache& cache) {
  const Params& p = model.params;
  const int hidden = p.hidden_dim;
  const int emb = p.emb_dim;
  Params grad = zeros_like(p);
  if (cache.loss_tokens == 0) return grad;
  const double inv_tokens = 1.0 / static_cast<double>(cache.loss_tokens);

  for (int b = 0; b < batch.size; ++b) {
    const EncRow& erow = cache.enc.rows[b];
    const RowCache& rc = cache.rows[b];
    const int len = erow.length;
    const int steps = static_cast<int>(rc.steps.size());
    std::vector<Vec> d_ann(len, Vec(static_cast<std::size_t>(2 * hidden), 0.0));
    Vec ds(static_cast<std::size_t>(hidden), 0.0);  // grad on s_{t+1} while walking back
    for (int t = steps - 1; t >= 0; --t) {
      const StepCache& sc = rc.steps[t];
      Vec du(static_cast<std::size_t>(3 * hidden + emb), 0.0);
      if (sc.label != kPad) {
        Vec dlogits = sc.probs;
        dlogits[sc.label] -= 1.0;
        for (double& v : dlogits) v *= inv_tokens;
        add_outer(grad.out_w, dlogits, sc.u);
        axpy(1.0, dlogits, grad.out_b);
        matvec_t_add(p.out_w, dlogits, du);
      }
      // u = [s_{t+1}; context; emb]
      Vec ds_new(du.begin(), du.begin() + hidden);
      axpy(1.0, ds, ds_new);  // recurrent gradient from later steps
      Vec dcontext(du.begin() + hidden, du.begin() + 3 * hidden);
      Vec demb(du.begin() + 3 * hidden, du.end());

      // decoder GRU step: x = [emb; context], h_prev = s_t
      Vec dx(static_cast<std::size_t>(emb + 2 * hidden), 0.0);
      Vec dh_prev(static_cast<std::size_t>(hidden), 0.0);
      gru_cell_backward(p.dec, sc.gru, ds_new, grad.dec, dx, dh_prev);
      for (int i = 0; i < emb; ++i) demb[i] += dx[i];
      for (int i = 0; i < 2 * hidden; ++i) dcontext[i] += dx[emb + i];

      // attention queried s_t
      Vec dquery(static_cast<std::size_t>(hidden), 0.0);
      attention_backward(p, erow, sc.attn, dcontext, rc.states[t], grad, dquery, d_ann);
      axpy(1.0, dquery, dh_prev);

      // embedding of the step input
      double* gemb = grad.tgt_embed.row(sc.y_in);
      for (int i = 0; i < emb; ++i) gemb[i] += demb[i];

      ds = std::move(dh_prev);  // becomes grad on s_t
    }

    // bridge: s0 = tanh(bridge * enc_final)
    Vec da(static_cast<std::size_t>(hidden), 0.0);
    for (int i = 0; i < hidden; ++i) da[i] = ds[i] * (1.0 - erow.s0[i] * erow.s0[i]);
    add_outer(grad.bridge, da, erow.enc_final);
    Vec denc_final(static_cast<std::size_t>(2 * hidden), 0.0);
    matvec_t_add(p.bridge, da, denc_final);

    if (len == 0) continue;
    // forward encoder chain: final state at position len-1
    Vec dh(denc_final.begin(), denc_final.begin() + hidden);
    for (int t = len - 1; t >= 0; --t) {
      for (int i = 0; i < hidden; ++i) dh[i] += d_ann[t][i];
      Vec dx(static_cast<std::size_t>(emb), 0.0);
      Vec dh_prev(static_cast<std::size_t>(hidden), 0.0);
      gru_cell_backward(p.enc_fwd, erow.fwd[t], dh, grad.enc_fwd, dx, dh_prev);
      double* ge = grad.src_embed.row(batch.src_at(b, t));
      for (int i = 0; i < emb; ++i) ge[i] += dx[i];
      dh = std::move(dh_prev);
    }
    // backward encoder chain: processed right-to-left, so its "previous"
    // state at position t is the state at t+1; unwind left-to-right.
    Vec dhb(denc_final.begin() + hidden, denc_final.end());
    for (int t = 0; t < len; ++t) {
      for (int i = 0; i < hidden; ++i) dhb[i] += d_ann[t][hidden + i];
      Vec dx(static_cast<std::size_t>(emb), 0.0);
      Vec dh_prev(static_cast<std::size_t>(hidden), 0.0);
      gru_cell_backward(p.enc_bwd, erow.bwd[t], dhb, grad.enc_bwd, dx, dh_prev);
      double* ge = grad.src_embed.row(batch.src_at(b, t));
      for (int i = 0; i < emb; ++i) ge[i] += dx[i];
      dhb = std::move(dh_prev);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Greedy decoding.

struct Translation {
  std::vector<std::string> tokens;
  Mat attention_weights;  // steps x src_len
};

inline Translation translate(const Model& model, const Sentence& source, int max_len) {
  const Params& p = model.params;
  const int hidden = p.hidden_dim;
  Translation out;
  if (max_len <= 0 || source.empty()) {
    out.attention_weights = Mat(0, static_cast<int>(source.size()));
    return out;
  }
  ParallelPair pair;
  pair.source = source;
  pair.target = {"<eos>"};  // placeholder; targets are unused below
  std::vector<ParallelPair> one{pair};
  Batch batch = make_batch(one, model.src_vocab, model.tgt_vocab, 0, 1);
  EncodeResult enc = encode(p, batch);
  const EncRow& erow = enc.rows[0];
  Vec s = erow.s0;
  int prev = kSos;
  std::vector<Vec> weights;
  for (int step = 0; step < max_len; ++step) {
    const double* e = p.tgt_embed.row(prev);
    Vec emb(e, e + p.emb_dim);
    AttnCache attn;
    attention(p, s, erow, attn);
    Vec x(p.emb_dim + 2 * hidden);
    std::copy(emb.begin(), emb.end(), x.begin());
    std::copy(attn.context.begin(), attn.context.end(), x.begin() + p.emb_dim);
    Vec s_new = gru_cell(p.dec, x, s);
    Vec u(static_cast<std::size_t>(3 * hidden + p.emb_dim));
    std::copy(s_new.begin(), s_new.end(), u.begin());
    std::copy(attn.context.begin(), attn.context.end(), u.begin() + hidden);
    std::copy(emb.begin(), emb.end(), u.begin() + 3 * hidden);
    Vec logits;
    matvec(p.out_w, u, logits);
    axpy(1.0, p.out_b, logits);
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    weights.push_back(attn.alpha);
    if (best == kEos) break;
    out.tokens.push_back(model.tgt_vocab.decode(best));
    prev = best;
    s = std::move(s_new);
  }
  out.attention_weights = Mat(static_cast<int>(weights.size()), batch.src_len);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    std::copy(weights[i].begin(), weights[i].end(), out.attention_weights.row(static_cast<int>(i)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training: Adam with global-norm clipping, best epoch by validation loss.

struct TrainConfig {
  int emb_dim = 256;
  int hidden_dim = 512;
  int min_freq = 1;
  int batch_size = 64;
  int epochs = 5;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  double teacher_forcing = 1.0;
  std::uint64_t seed = 0;
  int threads = 1;  // >1: gradients computed on shards, summed in shard order
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;       // snapshot of the best epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

namespace detail {

inline void accumulate(Params& dst, const Params& src) {
  TensorRefs a = tensor_refs(dst);
  TensorRefs b = tensor_refs(const_cast<Params&>(src));
  for (std::size_t i = 0; i < a.mats.size(); ++i) {
    for (std::size_t k = 0; k < a.mats[i].second->a.size(); ++k) {
      a.mats[i].second->a[k] += b.mats[i].second->a[k];
    }
  }
  for (std::size_t i = 0; i < a.vecs.size(); ++i) {
    for (std::size_t k = 0; k < a.vecs[i].second->size(); ++k) {
      (*a.vecs[i].second)[k] += (*b.vecs[i].second)[k];
    }
  }
}

class Adam {
 public:
  Adam(Params& params, const TrainConfig& cfg)
      : params_(params), cfg_(cfg), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(Params& grad) {
    ++t_;
    clip(grad);
    TensorRefs pr = tensor_refs(params_);
    TensorRefs gr = tensor_refs(grad);
    TensorRefs mr = tensor_refs(m_);
    TensorRefs vr = tensor_refs(v_);
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    auto update = [&](double& p, double g, double& m, double& v) {
      m = cfg_.adam_beta1 * m + (1.0 - cfg_.adam_beta1) * g;
      v = cfg_.adam_beta2 * v + (1.0 - cfg_.adam_beta2) * g * g;
      p -= cfg_.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
    };
    for (std::size_t i = 0; i < pr.mats.size(); ++i) {
      auto& pa = pr.mats[i].second->a;
      auto& ga = gr.mats[i].second->a;
      auto& ma = mr.mats[i].second->a;
      auto& va = vr.mats[i].second->a;
      for (std::size_t k = 0; k < pa.size(); ++k) update(pa[k], ga[k], ma[k], va[k]);
    }
    for (std::size_t i = 0; i < pr.vecs.size(); ++i) {
      auto& pa = *pr.vecs[i].second;
      auto& ga = *gr.vecs[i].second;
      auto& ma = *mr.vecs[i].second;
      auto& va = *vr.vecs[i].second;
      for (std::size_t k = 0; k < pa.size(); ++k) update(pa[k], ga[k], ma[k], va[k]);
    }
  }

 private:
  void clip(Params& grad) {
    if (cfg_.clip_norm <= 0.0) return;
    TensorRefs gr = tensor_refs(grad);
    double sq = 0.0;
    for (auto& [n, m] : gr.mats) {
      for (double x : m->a) sq += x * x;
    }
    for (auto& [n, v] : gr.vecs) {
      for (double x : *v) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm <= cfg_.clip_norm || norm == 0.0) return;
    const double scale = cfg_.clip_norm / norm;
    for (auto& [n, m] : gr.mats) {
      for (double& x : m->a) x *= scale;
    }
    for (auto& [n, v] : gr.vecs) {
      for (double& x : *v) x *= scale;
    }
  }

  Params& params_;
  const TrainConfig& cfg_;
  Params m_, v_;
  long t_ = 0;
};

}  // namespace detail

inline LossStats dataset_loss(const Model& model, const std::vector<ParallelPair>& pairs,
                              int batch_size) {
  LossStats total;
  for (std::size_t at = 0; at < pairs.size(); at += batch_size) {
    std::size_t end = std::min(pairs.size(), at + batch_size);
    Batch b = make_batch(pairs, model.src_vocab, model.tgt_vocab, at, end);
    LossStats s = forward_loss(model, b, nullptr);
    total.sum += s.sum;
    total.tokens += s.tokens;
  }
  return total;
}

inline TrainResult train(const std::vector<ParallelPair>& train_set,
                         const std::vector<ParallelPair>& valid_set, const TrainConfig& cfg) {
  if (train_set.empty() || valid_set.empty()) {
    throw Error(Err::EmptyCorpus, "train and validation sets must be nonempty");
  }
  Vocab src_vocab = Vocab::build(corpus::source_sentences(train_set), cfg.min_freq);
  Vocab tgt_vocab = Vocab::build(corpus::target_sentences(train_set), cfg.min_freq);
  Model model = init_model(src_vocab, tgt_vocab, cfg.emb_dim, cfg.hidden_dim,
                           stage_seed(cfg.seed, "nmt-init"));
  detail::Adam adam(model.params, cfg);
  Rng order_rng(stage_seed(cfg.seed, "nmt-batches"));
  Rng tf_rng(stage_seed(cfg.seed, "nmt-teacher"));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  double best_valid = HUGE_VAL;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    std::vector<ParallelPair> shuffled;
    shuffled.reserve(order.size());
    for (std::size_t idx : order) shuffled.push_back(train_set[idx]);

    LossStats train_stats;
    for (std::size_t at = 0; at < shuffled.size(); at += cfg.batch_size) {
      std::size_t end = std::min(shuffled.size(), at + cfg.batch_size);
      Params grad;
      LossStats s;
      const int threads = std::max(1, cfg.threads);
      if (threads == 1 || end - at < 2) {
        Batch batch = make_batch(shuffled, src_vocab, tgt_vocab, at, end);
        ForwardCache cache;
        s = forward_loss(model, batch, &cache, cfg.teacher_forcing, &tf_rng);
        grad = backward(model, batch, cache);
        // Mean-loss gradients are per-batch; rescale so shard counts match.
        TensorRefs gr = tensor_refs(grad);
        const double w = static_cast<double>(s.tokens);
        for (auto& [n, m] : gr.mats) {
          for (double& x : m->a) x *= w;
        }
        for (auto& [n, v] : gr.vecs) {
          for (double& x : *v) x *= w;
        }
      } else {
        // Data-parallel shards: each worker differentiates its slice, shards
        // are summed in shard order, so the result is deterministic for a
        // fixed shard assignment.
        const std::size_t n = end - at;
        const std::size_t per = (n + threads - 1) / threads;
        std::vector<Params> shard_grads(threads);
        std::vector<LossStats> shard_stats(threads);
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
          pool.emplace_back([&, w] {
            const std::size_t lo = at + w * per;
            const std::size_t hi = std::min(end, lo + per);
            if (lo >= hi) return;
            Batch batch = make_batch(shuffled, src_vocab, tgt_vocab, lo, hi);
            ForwardCache cache;
            LossStats st = forward_loss(model, batch, &cache, 1.0, nullptr);
            Params g = backward(model, batch, cache);
            TensorRefs gr = tensor_refs(g);
            const double scale = static_cast<double>(st.tokens);
            for (auto& [nm, m] : gr.mats) {
              for (double& x : m->a) x *= scale;
            }
            for (auto& [nm, v] : gr.vecs) {
              for (double& x : *v) x *= scale;
            }
            shard_grads[w] = std::move(g);
            shard_stats[w] = st;
          });
        }
        for (auto& th : pool) th.join();
        grad = zeros_like(model.params);
        for (int w = 0; w < threads; ++w) {
          if (shard_stats[w].tokens == 0) continue;
          detail::accumulate(grad, shard_grads[w]);
          s.sum += shard_stats[w].sum;
          s.tokens += shard_stats[w].tokens;
        }
      }
      if (!std::isfinite(s.sum)) {
        throw Error(Err::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " +
                                            std::to_string(at / cfg.batch_size));
      }
      // back to mean-loss scale
      TensorRefs gr = tensor_refs(grad);
      const double inv = s.tokens > 0 ? 1.0 / static_cast<double>(s.tokens) : 0.0;
      for (auto& [n, m] : gr.mats) {
        for (double& x : m->a) x *= inv;
      }
      for (auto& [n, v] : gr.vecs) {
        for (double& x : *v) x *= inv;
      }
      adam.step(grad);
      train_stats.sum += s.sum;
      train_stats.tokens += s.tokens;
    }

    LossStats valid_stats = dataset_loss(model, valid_set, cfg.batch_size);
    if (!std::isfinite(valid_stats.sum)) {
      throw Error(Err::NonFiniteLoss, "validation after epoch " + std::to_string(epoch));
    }
    auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_stats.mean();
    log.valid_loss = valid_stats.mean();
    log.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.log.push_back(log);
    if (log.valid_loss < best_valid) {
      best_valid = log.valid_loss;
      result.best_epoch = epoch;
      result.model = model;  // snapshot
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text, hex floats so tensors reload bit-exactly.

inline void save_checkpoint(const std::string& path, const Model& model) {
  std::string out;
  out += "mergen-nmt 1\n";
  out += std::to_string(model.params.emb_dim) + " " + std::to_string(model.params.hidden_dim) +
         "\n";
  auto dump_vocab = [&out](const Vocab& v) {
    out += std::to_string(v.size()) + " " + std::to_string(v.min_freq) + "\n";
    for (const auto& w : v.words) {
      out += w;
      out += '\n';
    }
  };
  dump_vocab(model.src_vocab);
  dump_vocab(model.tgt_vocab);
  TensorRefs refs = tensor_refs(const_cast<Params&>(model.params));
  char buf[64];
  auto dump_values = [&](const std::string& name, const double* a, std::size_t n, int rows,
                         int cols) {
    out += name + " " + std::to_string(rows) + " " + std::to_string(cols) + "\n";
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%a", a[i]);
      out += buf;
      out += (i + 1) % 8 == 0 || i + 1 == n ? '\n' : ' ';
    }
    if (n == 0) out += '\n';
  };
  for (auto& [name, m] : refs.mats) dump_values(name, m->a.data(), m->a.size(), m->rows, m->cols);
  for (auto& [name, v] : refs.vecs) {
    dump_values(name, v->data(), v->size(), static_cast<int>(v->size()), 1);
  }
  write_file(path, out);
}

inline Model load_checkpoint(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  std::size_t ln = 0;
  auto next = [&]() -> const std::string& {
    if (ln >= lines.size()) throw Error(Err::MalformedLine, path + ": truncated checkpoint");
    return lines[ln++];
  };
  if (next() != "mergen-nmt 1") throw Error(Err::MalformedLine, path + ": bad magic");
  std::vector<std::string> dims = split_ws(next());
  Model model;
  int emb_dim = std::stoi(dims.at(0));
  int hidden_dim = std::stoi(dims.at(1));
  auto read_vocab = [&]() {
    Vocab v;
    std::vector<std::string> head = split_ws(next());
    int n = std::stoi(head.at(0));
    v.min_freq = std::stoi(head.at(1));
    v.words.clear();
    for (int i = 0; i < n; ++i) v.words.push_back(next());
    for (int i = 0; i < n; ++i) v.ids[v.words[i]] = i;
    return v;
  };
  model.src_vocab = read_vocab();
  model.tgt_vocab = read_vocab();
  model.params = Params::make(model.src_vocab.size(), model.tgt_vocab.size(), emb_dim, hidden_dim);
  TensorRefs refs = tensor_refs(model.params);
  auto load_values = [&](const std::string& name, double* a, std::size_t n) {
    std::vector<std::string> head = split_ws(next());
    if (head.empty() || head[0] != name) {
      throw Error(Err::MalformedLine, path + ": expected tensor " + name);
    }
    std::size_t got = 0;
    while (got < n) {
      for (const std::string& tok : split_ws(next())) {
        if (got >= n) throw Error(Err::MalformedLine, path + ": too many values for " + name);
        a[got++] = std::strtod(tok.c_str(), nullptr);
      }
    }
    if (n == 0) next();
  };
  for (auto& [name, m] : refs.mats) load_values(name, m->a.data(), m->a.size());
  for (auto& [name, v] : refs.vecs) load_values(name, v->data(), v->size());
  return model;
}

}  // namespace mergen::nmt
