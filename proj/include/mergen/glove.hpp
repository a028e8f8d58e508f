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

// GloVe trained from scratch: distance-weighted co-occurrence counts, the
// weighted least-squares objective over log counts, and per-cell AdaGrad.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "mergen/corpus.hpp"
#include "mergen/error.hpp"
#include "mergen/io.hpp"
#include "mergen/linalg.hpp"
#include "mergen/rng.hpp"

namespace mergen::glove {

using corpus::Sentence;

struct Hyperparams {
  int window = 5;
  int min_sentence_len = 3;  // the corpus fed to build_cooc is already filtered to this
  int dim = 100;
  int iterations = 50;
  double learning_rate = 0.05;
  double x_max = 100.0;
  double alpha = 0.75;
  std::uint64_t seed = 0;
  int threads = 1;  // >1: lock-free parallel updates, no determinism guarantee
};

// word <-> id bijection in first-occurrence order.
struct Vocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> ids;

  int add(const std::string& w) {
    auto it = ids.find(w);
    if (it != ids.end()) return it->second;
    int id = static_cast<int>(words.size());
    words.push_back(w);
    ids.emplace(w, id);
    return id;
  }

  int find(const std::string& w) const {
    auto it = ids.find(w);
    return it == ids.end() ? -1 : it->second;
  }

  int size() const { return static_cast<int>(words.size()); }
};

// Symmetric sparse co-occurrence counts. Both (i,j) and (j,i) are stored;
// the diagonal is never stored.
struct CoocMatrix {
  Vocab vocab;
  std::unordered_map<std::uint64_t, double> cells;

  static std::uint64_t key(int i, int j) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
           static_cast<std::uint32_t>(j);
  }

  void add(int i, int j, double w) {
    if (i == j || w == 0.0) return;
    cells[key(i, j)] += w;
    cells[key(j, i)] += w;
  }

  double get(int i, int j) const {
    auto it = cells.find(key(i, j));
    return it == cells.end() ? 0.0 : it->second;
  }

  // Canonical (i, j, x) order for deterministic iteration.
  std::vector<std::tuple<int, int, double>> sorted_cells() const {
    std::vector<std::tuple<int, int, double>> out;
    out.reserve(cells.size());
    for (const auto& [k, x] : cells) {
      out.emplace_back(static_cast<int>(k >> 32), static_cast<int>(k & 0xFFFFFFFFu), x);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Window pass: every pair at distance d <= window inside one sentence adds
// 1/d in both directions. Sentences are independent contexts.
inline CoocMatrix build_cooc(const std::vector<Sentence>& sentences, const Hyperparams& hyper) {
  CoocMatrix m;
  for (const Sentence& s : sentences) {
    for (const std::string& tok : s) m.vocab.add(tok);
  }
  for (const Sentence& s : sentences) {
    std::vector<int> ids(s.size());
    for (std::size_t p = 0; p < s.size(); ++p) ids[p] = m.vocab.find(s[p]);
    for (std::size_t p = 0; p < s.size(); ++p) {
      const std::size_t hi = std::min(s.size(), p + 1 + static_cast<std::size_t>(hyper.window));
      for (std::size_t q = p + 1; q < hi; ++q) {
        m.add(ids[p], ids[q], 1.0 / static_cast<double>(q - p));
      }
    }
  }
  return m;
}

struct Model {
  Hyperparams hyper;
  Vocab vocab;
  Mat w_main;   // |V| x dim
  Mat w_ctx;    // |V| x dim
  Vec b_main;   // |V|
  Vec b_ctx;    // |V|
};

inline double weight_f(double x, const Hyperparams& h) {
  return x < h.x_max ? std::pow(x / h.x_max, h.alpha) : 1.0;
}

// J = sum over stored cells of f(X_ij) (w_i . w~_j + b_i + b~_j - ln X_ij)^2
inline double loss(const Model& m, const CoocMatrix& cooc) {
  double total = 0.0;
  for (const auto& [i, j, x] : cooc.sorted_cells()) {
    double diff = dot(m.w_main.row(i), m.w_ctx.row(j), m.hyper.dim) + m.b_main[i] + m.b_ctx[j] -
                  std::log(x);
    total += weight_f(x, m.hyper) * diff * diff;
  }
  return total;
}

struct Gradients {
  Mat w_main, w_ctx;
  Vec b_main, b_ctx;
};

// Exact gradient of loss() with respect to every parameter; the analytic
// side of the finite-difference oracle.
inline Gradients loss_grad(const Model& m, const CoocMatrix& cooc) {
  const int dim = m.hyper.dim;
  Gradients g;
  g.w_main = Mat(m.vocab.size(), dim);
  g.w_ctx = Mat(m.vocab.size(), dim);
  g.b_main.assign(m.vocab.size(), 0.0);
  g.b_ctx.assign(m.vocab.size(), 0.0);
  for (const auto& [i, j, x] : cooc.sorted_cells()) {
    double diff =
        dot(m.w_main.row(i), m.w_ctx.row(j), dim) + m.b_main[i] + m.b_ctx[j] - std::log(x);
    double coef = 2.0 * weight_f(x, m.hyper) * diff;
    const double* wi = m.w_main.row(i);
    const double* wj = m.w_ctx.row(j);
    double* gwi = g.w_main.row(i);
    double* gwj = g.w_ctx.row(j);
    for (int d = 0; d < dim; ++d) {
      gwi[d] += coef * wj[d];
      gwj[d] += coef * wi[d];
    }
    g.b_main[i] += coef;
    g.b_ctx[j] += coef;
  }
  return g;
}

// Per-cell AdaGrad, the standard GloVe recipe: step fdiff = f(x) * diff,
// squared-gradient accumulators start at 1 so the first step size is lr.
class Trainer {
 public:
  Trainer(const CoocMatrix& cooc, const Hyperparams& hyper) : cooc_(cooc) {
    if (cooc.cells.empty()) {
      throw Error(Err::EmptyCorpus, "co-occurrence matrix has no cells");
    }
    model_.hyper = hyper;
    model_.vocab = cooc.vocab;
    const int v = model_.vocab.size();
    Rng init_rng(hyper.seed);
    const double r = 0.5 / hyper.dim;
    model_.w_main = Mat(v, hyper.dim);
    model_.w_ctx = Mat(v, hyper.dim);
    model_.w_main.fill_uniform(init_rng, -r, r);
    model_.w_ctx.fill_uniform(init_rng, -r, r);
    model_.b_main.assign(v, 0.0);
    model_.b_ctx.assign(v, 0.0);
    fill_uniform(model_.b_main, init_rng, -r, r);
    fill_uniform(model_.b_ctx, init_rng, -r, r);
    sq_w_main_ = Mat(v, hyper.dim);
    sq_w_ctx_ = Mat(v, hyper.dim);
    std::fill(sq_w_main_.a.begin(), sq_w_main_.a.end(), 1.0);
    std::fill(sq_w_ctx_.a.begin(), sq_w_ctx_.a.end(), 1.0);
    sq_b_main_.assign(v, 1.0);
    sq_b_ctx_.assign(v, 1.0);
    order_ = cooc.sorted_cells();
    shuffle_rng_ = std::make_unique<Rng>(stage_seed(hyper.seed, "glove-shuffle"));
  }

  // One pass over all cells in a fresh shuffled order; returns the summed
  // pre-update loss f(x) * diff^2 seen during the pass.
  double run_epoch() {
    shuffle_rng_->shuffle(order_);
    const int threads = std::max(1, model_.hyper.threads);
    if (threads == 1) {
      double total = 0.0;
      for (const auto& cell : order_) total += update_cell(cell);
      return total;
    }
    // Lock-free mode: shards race on the shared model (hogwild); summed loss
    // is still well-defined per shard.
    std::vector<double> partial(threads, 0.0);
    std::vector<std::thread> pool;
    const std::size_t per = (order_.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        const std::size_t lo = t * per;
        const std::size_t hi = std::min(order_.size(), lo + per);
        double sum = 0.0;
        for (std::size_t k = lo; k < hi; ++k) sum += update_cell(order_[k]);
        partial[t] = sum;
      });
    }
    for (auto& th : pool) th.join();
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
  }

  const Model& model() const { return model_; }
  Model take_model() { return std::move(model_); }
  const Mat& grad_sq_main() const { return sq_w_main_; }
  const Mat& grad_sq_ctx() const { return sq_w_ctx_; }

 private:
  double update_cell(const std::tuple<int, int, double>& cell) {
    const auto& [i, j, x] = cell;
    const int dim = model_.hyper.dim;
    const double lr = model_.hyper.learning_rate;
    double* wi = model_.w_main.row(i);
    double* wj = model_.w_ctx.row(j);
    double diff = dot(wi, wj, dim) + model_.b_main[i] + model_.b_ctx[j] - std::log(x);
    double fx = weight_f(x, model_.hyper);
    double fdiff = fx * diff;
    double* sqi = sq_w_main_.row(i);
    double* sqj = sq_w_ctx_.row(j);
    for (int d = 0; d < dim; ++d) {
      double gi = fdiff * wj[d];
      double gj = fdiff * wi[d];
      wi[d] -= lr * gi / std::sqrt(sqi[d]);
      wj[d] -= lr * gj / std::sqrt(sqj[d]);
      sqi[d] += gi * gi;
      sqj[d] += gj * gj;
    }
    model_.b_main[i] -= lr * fdiff / std::sqrt(sq_b_main_[i]);
    model_.b_ctx[j] -= lr * fdiff / std::sqrt(sq_b_ctx_[j]);
    sq_b_main_[i] += fdiff * fdiff;
    sq_b_ctx_[j] += fdiff * fdiff;
    return fx * diff * diff;
  }

  const CoocMatrix& cooc_;
  Model model_;
  Mat sq_w_main_, sq_w_ctx_;
  Vec sq_b_main_, sq_b_ctx_;
  std::vector<std::tuple<int, int, double>> order_;
  std::unique_ptr<Rng> shuffle_rng_;
};

inline Model train_glove(const CoocMatrix& cooc, const Hyperparams& hyper,
                         std::vector<double>* epoch_losses = nullptr) {
  Trainer trainer(cooc, hyper);
  for (int epoch = 0; epoch < hyper.iterations; ++epoch) {
    double l = trainer.run_epoch();
    if (!std::isfinite(l)) {
      throw Error(Err::NonFiniteLoss, "epoch " + std::to_string(epoch));
    }
    if (epoch_losses) epoch_losses->push_back(l);
  }
  return trainer.take_model();
}

// ---------------------------------------------------------------------------
// Query-side representation: the exported vector of a word is W + W~.

struct WordVectors {
  Vocab vocab;
  Mat vectors;  // |V| x dim
};

inline Vec word_vector(const Model& m, const std::string& word) {
  int id = m.vocab.find(word);
  if (id < 0) throw Error(Err::OutOfVocabulary, word);
  Vec v(m.hyper.dim);
  const double* a = m.w_main.row(id);
  const double* b = m.w_ctx.row(id);
  for (int d = 0; d < m.hyper.dim; ++d) v[d] = a[d] + b[d];
  return v;
}

inline WordVectors combined_vectors(const Model& m) {
  WordVectors wv;
  wv.vocab = m.vocab;
  wv.vectors = Mat(m.vocab.size(), m.hyper.dim);
  for (int i = 0; i < m.vocab.size(); ++i) {
    double* dst = wv.vectors.row(i);
    const double* a = m.w_main.row(i);
    const double* b = m.w_ctx.row(i);
    for (int d = 0; d < m.hyper.dim; ++d) dst[d] = a[d] + b[d];
  }
  return wv;
}

struct Neighbor {
  std::string word;
  double cosine;
};

// Cosine ranking of every other vocabulary word against `word`. Ties break
// toward the lexicographically smaller word; zero-norm candidates are
// unrankable and skipped.
inline std::vector<Neighbor> most_similar(const WordVectors& wv, const std::string& word, int k) {
  int id = wv.vocab.find(word);
  if (id < 0) throw Error(Err::OutOfVocabulary, word);
  const int dim = wv.vectors.cols;
  const double* q = wv.vectors.row(id);
  double qn = std::sqrt(dot(q, q, dim));
  if (qn == 0.0) throw Error(Err::ZeroVector, word);
  std::vector<Neighbor> all;
  all.reserve(wv.vocab.size());
  for (int i = 0; i < wv.vocab.size(); ++i) {
    if (i == id) continue;
    const double* v = wv.vectors.row(i);
    double vn = std::sqrt(dot(v, v, dim));
    if (vn == 0.0) continue;
    all.push_back(Neighbor{wv.vocab.words[i], dot(q, v, dim) / (qn * vn)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.word < b.word;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  return all;
}

inline std::vector<Neighbor> most_similar(const Model& m, const std::string& word, int k) {
  return most_similar(combined_vectors(m), word, k);
}

// ---------------------------------------------------------------------------
// File formats. Vectors: one line per word, "word v1 ... v_dim"; 17
// significant digits so doubles round-trip exactly.

inline void save_vectors(const std::string& path, const WordVectors& wv) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (int i = 0; i < wv.vocab.size(); ++i) {
    out << wv.vocab.words[i];
    const double* v = wv.vectors.row(i);
    for (int d = 0; d < wv.vectors.cols; ++d) out << ' ' << v[d];
    out << '\n';
  }
  write_file(path, out.str());
}

inline WordVectors load_vectors(const std::string& path) {
  WordVectors wv;
  std::vector<std::string> lines = read_lines(path);
  int dim = -1;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    std::vector<std::string> f = split_ws(lines[ln]);
    if (dim < 0) {
      dim = static_cast<int>(f.size()) - 1;
      if (dim < 1) throw Error(Err::MalformedLine, path + ":" + std::to_string(ln + 1));
      wv.vectors.cols = dim;
    } else if (static_cast<int>(f.size()) != dim + 1) {
      throw Error(Err::MalformedLine, path + ":" + std::to_string(ln + 1) + ": expected " +
                                          std::to_string(dim) + " components");
    }
    wv.vocab.add(f[0]);
    for (int d = 0; d < dim; ++d) wv.vectors.a.push_back(std::stod(f[1 + d]));
  }
  wv.vectors.rows = wv.vocab.size();
  return wv;
}

// Co-occurrence cache: "i j x" triples (canonical order) after the vocab.
inline void save_cooc(const std::string& path, const CoocMatrix& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "cooc 1\n" << m.vocab.size() << '\n';
  for (const auto& w : m.vocab.words) out << w << '\n';
  auto cells = m.sorted_cells();
  out << cells.size() << '\n';
  for (const auto& [i, j, x] : cells) out << i << ' ' << j << ' ' << x << '\n';
  write_file(path, out.str());
}

inline CoocMatrix load_cooc(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != "cooc 1") {
    throw Error(Err::MalformedLine, path + ": bad header");
  }
  CoocMatrix m;
  std::size_t ln = 1;
  int nwords = std::stoi(lines.at(ln++));
  for (int i = 0; i < nwords; ++i) m.vocab.add(lines.at(ln++));
  std::size_t ncells = std::stoul(lines.at(ln++));
  for (std::size_t c = 0; c < ncells; ++c) {
    std::vector<std::string> f = split_ws(lines.at(ln++));
    if (f.size() != 3) throw Error(Err::MalformedLine, path + ":" + std::to_string(ln));
    m.cells[CoocMatrix::key(std::stoi(f[0]), std::stoi(f[1]))] = std::stod(f[2]);
  }
  return m;
}

}  // namespace mergen::glove
