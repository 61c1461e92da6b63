// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "unidiff/error.hpp"
#include "unidiff/kernels.hpp"

namespace unidiff {

void ModelConfig::validate() const {
  require(vocab_size > 0, ErrorKind::kConfiguration, "vocab_size must be positive");
  require(d_model > 0 && n_layers > 0 && n_heads > 0 && d_ff > 0, ErrorKind::kConfiguration,
          "model dimensions must be positive");
  require(d_model % n_heads == 0, ErrorKind::kConfiguration, "d_model must be divisible by n_heads");
  require(max_len > 0 && max_len <= kernels::kMaxKeys, ErrorKind::kConfiguration,
          "max_len must lie in [1, " + std::to_string(kernels::kMaxKeys) + "]");
  require(anchor_token >= -1 && anchor_token < vocab_size, ErrorKind::kConfiguration,
          "anchor_token must be -1 or a vocabulary id");
  require(anchor_offset >= 0 && anchor_offset < max_len, ErrorKind::kConfiguration,
          "anchor_offset must lie in [0, max_len)");
}

ModelConfig default_model_config(const Vocabulary& vocab) {
  ModelConfig c;
  c.vocab_size = vocab.total_size();
  c.anchor_token = vocab.id(Special::kImageBegin);
  return c;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  auto add = [&](std::string name, int rows, int cols) {
    TensorSpec spec{std::move(name), rows, cols, total};
    total += spec.size();
    tensors.push_back(spec);
    return spec.offset;
  };
  const int d = c.d_model;
  tok_emb = add("tok_emb", c.vocab_size, d);
  pos_emb = add("pos_emb", c.max_len, d);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_g = add(p + "ln1_g", 1, d);
    o.ln1_b = add(p + "ln1_b", 1, d);
    o.wq = add(p + "wq", d, d);
    o.wk = add(p + "wk", d, d);
    o.wv = add(p + "wv", d, d);
    o.wo = add(p + "wo", d, d);
    o.bo = add(p + "bo", 1, d);
    o.ln2_g = add(p + "ln2_g", 1, d);
    o.ln2_b = add(p + "ln2_b", 1, d);
    o.w1 = add(p + "w1", d, c.d_ff);
    o.b1 = add(p + "b1", 1, c.d_ff);
    o.w2 = add(p + "w2", c.d_ff, d);
    o.b2 = add(p + "b2", 1, d);
    layers.push_back(o);
  }
  lnf_g = add("lnf_g", 1, d);
  lnf_b = add("lnf_b", 1, d);
  w_out = add("w_out", d, c.vocab_size);
  b_out = add("b_out", 1, c.vocab_size);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config), layout_(config), params_(layout_.total, T(0)) {
  Rng rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  for (const auto& t : layout_.tensors) {
    T* p = params_.data() + t.offset;
    const bool is_gain = t.name.ends_with("_g");
    const bool is_bias = t.rows == 1 && !is_gain;
    if (is_gain) {
      std::fill(p, p + t.size(), T(1));
    } else if (is_bias) {
      std::fill(p, p + t.size(), T(0));
    } else {
      double std = 0.02;
      if (t.name.ends_with("wq") || t.name.ends_with("wk") || t.name.ends_with("wv") || t.name.ends_with("w1")) {
        std = 1.0 / std::sqrt(static_cast<double>(t.rows));
      } else if (t.name.ends_with("wo") || t.name.ends_with("w2")) {
        std = residual_scale / std::sqrt(static_cast<double>(t.rows));
      } else if (t.name == "w_out") {
        std = 1.0 / std::sqrt(static_cast<double>(t.rows));
      }
      for (std::size_t i = 0; i < t.size(); ++i) p[i] = static_cast<T>(normal(rng) * std);
    }
  }
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::vector<T> params)
    : config_(config), layout_(config), params_(std::move(params)) {
  require(params_.size() == layout_.total, ErrorKind::kConfiguration,
          "parameter count " + std::to_string(params_.size()) + " does not match layout " +
              std::to_string(layout_.total));
}

template <typename T>
void KVCache<T>::reset(int n_positions, const ModelConfig& config) {
  n = n_positions;
  const std::size_t rows = static_cast<std::size_t>(n) * config.d_model;
  keys.assign(static_cast<std::size_t>(config.n_layers), std::vector<T>(rows, T(0)));
  values.assign(static_cast<std::size_t>(config.n_layers), std::vector<T>(rows, T(0)));
  logits.assign(static_cast<std::size_t>(n) * config.vocab_size, T(0));
  valid.assign(static_cast<std::size_t>(n), 0);
  computed_at.assign(static_cast<std::size_t>(n), -1);
}

void validate_ids(std::span<const TokenId> ids, const ModelConfig& config) {
  require(!ids.empty(), ErrorKind::kParameter, "empty input sequence");
  require(static_cast<int>(ids.size()) <= config.max_len, ErrorKind::kCapacity,
          "sequence length " + std::to_string(ids.size()) + " exceeds max_len " + std::to_string(config.max_len));
  for (TokenId id : ids) {
    require(id >= 0 && id < config.vocab_size, ErrorKind::kVocabulary,
            "token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(config.vocab_size));
  }
}

std::vector<int> position_ids(std::span<const TokenId> ids, const ModelConfig& config) {
  const int n = static_cast<int>(ids.size());
  int shift = 0;
  if (config.anchor_token >= 0) {
    const auto it = std::find(ids.begin(), ids.end(), config.anchor_token);
    if (it != ids.end()) shift = config.anchor_offset - static_cast<int>(it - ids.begin());
  }
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = std::clamp(i + shift, 0, config.max_len - 1);
  return pos;
}

namespace {

template <typename T>
void add_into(const T* a, const T* b, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

// Shared body of forward / forward_rows. With a tape, rows must cover every
// position.
template <typename T>
std::vector<T> run(const Model<T>& model, std::span<const TokenId> ids, std::span<const int> rows,
                   KVCache<T>* cache, int step_index, ForwardTape<T>* tape) {
  const ModelConfig& c = model.config();
  const ParamLayout& lay = model.layout();
  validate_ids(ids, c);
  const int n = static_cast<int>(ids.size());
  const int r_count = static_cast<int>(rows.size());
  const int d = c.d_model;
  const int f = c.d_ff;
  const int kv = c.vocab_size;
  const bool all_rows = r_count == n;
  const std::size_t rd = static_cast<std::size_t>(r_count) * d;

  if (cache) {
    require(cache->n == n, ErrorKind::kCacheCoherence, "cache was built for a different sequence length");
    if (!all_rows) {
      std::vector<std::uint8_t> is_row(static_cast<std::size_t>(n), 0);
      for (int r : rows) is_row[static_cast<std::size_t>(r)] = 1;
      for (int p = 0; p < n; ++p) {
        if (!is_row[static_cast<std::size_t>(p)] && !cache->valid[static_cast<std::size_t>(p)]) {
          fail(ErrorKind::kCacheCoherence, "position " + std::to_string(p) + " reused without a cache entry");
        }
      }
    }
  } else {
    require(all_rows, ErrorKind::kCacheCoherence, "partial recomputation needs a cache");
  }

  const std::vector<int> pid = position_ids(ids, c);
  std::vector<T> x(rd);
  for (int r = 0; r < r_count; ++r) {
    const int pos = rows[static_cast<std::size_t>(r)];
    add_into(model.at(lay.tok_emb) + static_cast<std::size_t>(ids[static_cast<std::size_t>(pos)]) * d,
             model.at(lay.pos_emb) + static_cast<std::size_t>(pid[static_cast<std::size_t>(pos)]) * d,
             static_cast<std::size_t>(d),
             x.data() + static_cast<std::size_t>(r) * d);
  }

  if (tape) {
    tape->n = n;
    tape->ids.assign(ids.begin(), ids.end());
    tape->layers.resize(static_cast<std::size_t>(c.n_layers));
  }

  std::vector<T> xhat1(rd), rstd1(static_cast<std::size_t>(r_count)), h1(rd), q(rd), k(rd), v(rd), att(rd),
      o(rd), x_mid(rd), xhat2(rd), rstd2(static_cast<std::size_t>(r_count)), h2(rd),
      ff_pre(static_cast<std::size_t>(r_count) * f), ff_act(static_cast<std::size_t>(r_count) * f), ff_out(rd);
  std::vector<T> probs;
  std::vector<T> kfull, vfull;

  for (int l = 0; l < c.n_layers; ++l) {
    const LayerOffsets& lo = lay.layers[static_cast<std::size_t>(l)];
    kernels::layernorm(x.data(), r_count, d, model.at(lo.ln1_g), model.at(lo.ln1_b), h1.data(), xhat1.data(),
                       rstd1.data());
    kernels::matmul(h1.data(), r_count, d, model.at(lo.wq), d, static_cast<const T*>(nullptr), q.data());
    kernels::matmul(h1.data(), r_count, d, model.at(lo.wk), d, static_cast<const T*>(nullptr), k.data());
    kernels::matmul(h1.data(), r_count, d, model.at(lo.wv), d, static_cast<const T*>(nullptr), v.data());

    const T* keys = k.data();
    const T* values = v.data();
    if (!all_rows) {
      kfull = cache->keys[static_cast<std::size_t>(l)];
      vfull = cache->values[static_cast<std::size_t>(l)];
      for (int r = 0; r < r_count; ++r) {
        const std::size_t dst = static_cast<std::size_t>(rows[static_cast<std::size_t>(r)]) * d;
        std::copy_n(k.data() + static_cast<std::size_t>(r) * d, d, kfull.data() + dst);
        std::copy_n(v.data() + static_cast<std::size_t>(r) * d, d, vfull.data() + dst);
      }
      keys = kfull.data();
      values = vfull.data();
    }
    if (tape) probs.assign(static_cast<std::size_t>(c.n_heads) * n * n, T(0));
    kernels::attention(q.data(), r_count, keys, values, n, d, c.n_heads, att.data(), tape ? probs.data() : nullptr);
    kernels::matmul(att.data(), r_count, d, model.at(lo.wo), d, model.at(lo.bo), o.data());
    add_into(x.data(), o.data(), rd, x_mid.data());

    kernels::layernorm(x_mid.data(), r_count, d, model.at(lo.ln2_g), model.at(lo.ln2_b), h2.data(), xhat2.data(),
                       rstd2.data());
    kernels::matmul(h2.data(), r_count, d, model.at(lo.w1), f, model.at(lo.b1), ff_pre.data());
    kernels::gelu_forward(ff_pre.data(), ff_pre.size(), ff_act.data());
    kernels::matmul(ff_act.data(), r_count, f, model.at(lo.w2), d, model.at(lo.b2), ff_out.data());

    if (cache) {
      auto& ck = cache->keys[static_cast<std::size_t>(l)];
      auto& cv = cache->values[static_cast<std::size_t>(l)];
      for (int r = 0; r < r_count; ++r) {
        const std::size_t dst = static_cast<std::size_t>(rows[static_cast<std::size_t>(r)]) * d;
        std::copy_n(k.data() + static_cast<std::size_t>(r) * d, d, ck.data() + dst);
        std::copy_n(v.data() + static_cast<std::size_t>(r) * d, d, cv.data() + dst);
      }
    }
    if (tape) {
      auto& t = tape->layers[static_cast<std::size_t>(l)];
      t.x_in = x;
      t.xhat1 = xhat1;
      t.rstd1 = rstd1;
      t.h1 = h1;
      t.q = q;
      t.k = k;
      t.v = v;
      t.probs = probs;
      t.att = att;
      t.x_mid = x_mid;
      t.xhat2 = xhat2;
      t.rstd2 = rstd2;
      t.h2 = h2;
      t.ff_pre = ff_pre;
      t.ff_act = ff_act;
    }
    add_into(x_mid.data(), ff_out.data(), rd, x.data());
  }

  std::vector<T> xhat_f(rd), rstd_f(static_cast<std::size_t>(r_count)), h_f(rd);
  kernels::layernorm(x.data(), r_count, d, model.at(lay.lnf_g), model.at(lay.lnf_b), h_f.data(), xhat_f.data(),
                     rstd_f.data());
  std::vector<T> row_logits(static_cast<std::size_t>(r_count) * kv);
  kernels::matmul(h_f.data(), r_count, d, model.at(lay.w_out), kv, model.at(lay.b_out), row_logits.data());

  if (tape) {
    tape->x_final = x;
    tape->xhat_f = std::move(xhat_f);
    tape->rstd_f = std::move(rstd_f);
    tape->h_f = std::move(h_f);
  }

  if (all_rows) {
    if (cache) {
      cache->logits = row_logits;
      std::fill(cache->valid.begin(), cache->valid.end(), 1);
      std::fill(cache->computed_at.begin(), cache->computed_at.end(), step_index);
    }
    return row_logits;
  }
  std::vector<T> logits = cache->logits;
  for (int r = 0; r < r_count; ++r) {
    const int pos = rows[static_cast<std::size_t>(r)];
    std::copy_n(row_logits.data() + static_cast<std::size_t>(r) * kv, kv,
                logits.data() + static_cast<std::size_t>(pos) * kv);
    cache->valid[static_cast<std::size_t>(pos)] = 1;
    cache->computed_at[static_cast<std::size_t>(pos)] = step_index;
  }
  cache->logits = logits;
  return logits;
}

}  // namespace

template <typename T>
std::vector<T> forward(const Model<T>& model, std::span<const TokenId> ids, ForwardTape<T>* tape) {
  std::vector<int> rows(ids.size());
  std::iota(rows.begin(), rows.end(), 0);
  return run(model, ids, rows, static_cast<KVCache<T>*>(nullptr), 0, tape);
}

template <typename T>
std::vector<T> forward_rows(const Model<T>& model, std::span<const TokenId> ids, std::span<const int> rows,
                            KVCache<T>* cache, int step_index) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < static_cast<int>(ids.size()) && (i == 0 || rows[i] > rows[i - 1]),
            ErrorKind::kContract, "rows must be sorted, unique and in range");
  }
  return run(model, ids, rows, cache, step_index, static_cast<ForwardTape<T>*>(nullptr));
}

template <typename T>
void backward(const Model<T>& model, const ForwardTape<T>& tape, std::span<const T> dlogits, std::vector<T>& grad) {
  const ModelConfig& c = model.config();
  const ParamLayout& lay = model.layout();
  require(grad.size() == lay.total, ErrorKind::kContract, "gradient buffer has the wrong size");
  const int n = tape.n;
  const int d = c.d_model;
  const int f = c.d_ff;
  const int kv = c.vocab_size;
  const std::size_t nd = static_cast<std::size_t>(n) * d;
  require(dlogits.size() == static_cast<std::size_t>(n) * kv, ErrorKind::kContract, "dlogits has the wrong shape");
  T* g = grad.data();

  std::vector<T> dh(nd), dx(nd);
  kernels::matmul_backward_input(dlogits.data(), n, kv, model.at(lay.w_out), d, dh.data());
  kernels::matmul_backward_weight(tape.h_f.data(), dlogits.data(), n, d, kv, g + lay.w_out, g + lay.b_out);
  kernels::layernorm_backward(dh.data(), tape.xhat_f.data(), tape.rstd_f.data(), model.at(lay.lnf_g), n, d,
                              dx.data(), g + lay.lnf_g, g + lay.lnf_b);

  std::vector<T> dff_act(static_cast<std::size_t>(n) * f), dff_pre(static_cast<std::size_t>(n) * f), dh2(nd),
      dx_mid(nd), datt(nd), dq(nd), dk(nd), dv(nd), dh1(nd), tmp(nd),
      ds(static_cast<std::size_t>(c.n_heads) * n * n);

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const LayerOffsets& lo = lay.layers[static_cast<std::size_t>(l)];
    const auto& t = tape.layers[static_cast<std::size_t>(l)];

    kernels::matmul_backward_input(dx.data(), n, d, model.at(lo.w2), f, dff_act.data());
    kernels::matmul_backward_weight(t.ff_act.data(), dx.data(), n, f, d, g + lo.w2, g + lo.b2);
    kernels::gelu_backward(t.ff_pre.data(), dff_act.data(), dff_act.size(), dff_pre.data());
    kernels::matmul_backward_input(dff_pre.data(), n, f, model.at(lo.w1), d, dh2.data());
    kernels::matmul_backward_weight(t.h2.data(), dff_pre.data(), n, d, f, g + lo.w1, g + lo.b1);
    kernels::layernorm_backward(dh2.data(), t.xhat2.data(), t.rstd2.data(), model.at(lo.ln2_g), n, d, tmp.data(),
                                g + lo.ln2_g, g + lo.ln2_b);
    for (std::size_t i = 0; i < nd; ++i) dx_mid[i] = dx[i] + tmp[i];

    kernels::matmul_backward_input(dx_mid.data(), n, d, model.at(lo.wo), d, datt.data());
    kernels::matmul_backward_weight(t.att.data(), dx_mid.data(), n, d, d, g + lo.wo, g + lo.bo);
    kernels::attention_backward(datt.data(), t.q.data(), t.k.data(), t.v.data(), t.probs.data(), n, d, c.n_heads,
                                dq.data(), dk.data(), dv.data(), ds.data());

    kernels::matmul_backward_input(dq.data(), n, d, model.at(lo.wq), d, dh1.data());
    kernels::matmul_backward_input(dk.data(), n, d, model.at(lo.wk), d, tmp.data());
    for (std::size_t i = 0; i < nd; ++i) dh1[i] += tmp[i];
    kernels::matmul_backward_input(dv.data(), n, d, model.at(lo.wv), d, tmp.data());
    for (std::size_t i = 0; i < nd; ++i) dh1[i] += tmp[i];
    kernels::matmul_backward_weight(t.h1.data(), dq.data(), n, d, d, g + lo.wq, static_cast<T*>(nullptr));
    kernels::matmul_backward_weight(t.h1.data(), dk.data(), n, d, d, g + lo.wk, static_cast<T*>(nullptr));
    kernels::matmul_backward_weight(t.h1.data(), dv.data(), n, d, d, g + lo.wv, static_cast<T*>(nullptr));
    kernels::layernorm_backward(dh1.data(), t.xhat1.data(), t.rstd1.data(), model.at(lo.ln1_g), n, d, tmp.data(),
                                g + lo.ln1_g, g + lo.ln1_b);
    for (std::size_t i = 0; i < nd; ++i) dx[i] = dx_mid[i] + tmp[i];
  }

  const std::vector<int> pid = position_ids(tape.ids, model.config());
  for (int i = 0; i < n; ++i) {
    const T* row = dx.data() + static_cast<std::size_t>(i) * d;
    kernels::axpy(T(1), row, g + lay.tok_emb + static_cast<std::size_t>(tape.ids[static_cast<std::size_t>(i)]) * d, d);
    kernels::axpy(T(1), row, g + lay.pos_emb + static_cast<std::size_t>(pid[static_cast<std::size_t>(i)]) * d, d);
  }
}

// ---------------------------------------------------------------------------

MaskSet sample_training_mask(Rng& rng, const TokenSequence& seq, double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorKind::kParameter, "mask ratio must lie in (0, 1]");
  std::vector<int> eligible;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.maskable[i]) eligible.push_back(static_cast<int>(i));
  }
  // long double holds L * m exactly for any double m and L < 2^11.
  const auto count = static_cast<std::size_t>(
      std::floor(static_cast<long double>(eligible.size()) * static_cast<long double>(ratio)));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  MaskSet mask;
  mask.ratio = ratio;
  mask.indices.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

std::vector<TokenId> apply_mask(const TokenSequence& seq, const MaskSet& mask, const Vocabulary& vocab) {
  std::vector<TokenId> ids = seq.ids;
  for (int i : mask.indices) {
    require(i >= 0 && static_cast<std::size_t>(i) < ids.size(), ErrorKind::kParameter, "mask index out of range");
    ids[static_cast<std::size_t>(i)] = vocab.mask();
  }
  return ids;
}

template <typename T>
T masked_ce_loss(std::span<const T> logits, int vocab_size, std::span<const TokenId> targets, const MaskSet& mask,
                 std::vector<T>* dlogits) {
  require(!mask.empty(), ErrorKind::kUndefinedLoss, "masked cross-entropy needs a nonempty mask");
  require(logits.size() == targets.size() * static_cast<std::size_t>(vocab_size), ErrorKind::kContract,
          "logits and targets disagree on length");
  if (dlogits) dlogits->assign(logits.size(), T(0));
  const T inv = T(1) / static_cast<T>(mask.size());
  T loss = 0;
  std::vector<T> p(static_cast<std::size_t>(vocab_size));
  for (int i : mask.indices) {
    const T* row = logits.data() + static_cast<std::size_t>(i) * vocab_size;
    std::copy_n(row, vocab_size, p.data());
    const T mx = *std::max_element(p.begin(), p.end());
    T z = 0;
    for (auto& e : p) z += std::exp(e - mx);
    const T lse = mx + std::log(z);
    const TokenId t = targets[static_cast<std::size_t>(i)];
    loss -= row[t] - lse;
    if (dlogits) {
      T* drow = dlogits->data() + static_cast<std::size_t>(i) * vocab_size;
      for (int j = 0; j < vocab_size; ++j) drow[j] = std::exp(row[j] - lse) * inv;
      drow[t] -= inv;
    }
  }
  return loss * inv;
}

double adam_update(Model<float>& model, AdamState& state, std::vector<float>& grad, const AdamConfig& config) {
  auto& params = model.params();
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
    state.step = 0;
  }
  double sq = 0.0;
  for (float gv : grad) sq += static_cast<double>(gv) * gv;
  const double norm = std::sqrt(sq);
  const double clip = (config.grad_clip > 0.0 && norm > config.grad_clip) ? config.grad_clip / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto step_size = static_cast<float>(config.lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(config.eps);
  const auto decay = static_cast<float>(config.lr * config.weight_decay);
  const auto scale = static_cast<float>(clip);

  for (const auto& t : model.layout().tensors) {
    const bool decayed = t.rows > 1 && t.cols > 1;
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i) {
      const float gi = grad[i] * scale;
      state.m[i] = b1 * state.m[i] + (1.0f - b1) * gi;
      state.v[i] = b2 * state.v[i] + (1.0f - b2) * gi * gi;
      if (decayed) params[i] -= decay * params[i];
      params[i] -= step_size * state.m[i] / (std::sqrt(state.v[i] * inv_bc2) + eps);
    }
  }
  return norm;
}

TrainStepResult train_step(Model<float>& model, std::span<const TokenSequence> batch, AdamState& state,
                           const AdamConfig& config, const Vocabulary& vocab, Rng& rng) {
  require(!batch.empty(), ErrorKind::kParameter, "empty batch");
  std::vector<float> grad(model.params().size(), 0.0f);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  TrainStepResult result;
  ForwardTape<float> tape;
  std::vector<float> dlogits;
  for (const auto& seq : batch) {
    require(seq.maskable_count() > 0, ErrorKind::kParameter, "training example has no maskable positions");
    MaskSet mask;
    while (mask.empty()) mask = sample_training_mask(rng, seq, 1.0 - unit(rng));
    const auto input = apply_mask(seq, mask, vocab);
    const auto logits = forward(model, std::span<const TokenId>(input), &tape);
    const float loss = masked_ce_loss<float>(logits, model.config().vocab_size, seq.ids, mask, &dlogits);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kDivergence, "non-finite loss at optimizer step " + std::to_string(state.step));
    }
    for (auto& gv : dlogits) gv *= inv_batch;
    backward(model, tape, std::span<const float>(dlogits), grad);
    result.loss += loss;
    result.masked_tokens += mask.size();
  }
  result.loss /= static_cast<double>(batch.size());
  for (float gv : grad) {
    if (!std::isfinite(gv)) {
      fail(ErrorKind::kDivergence, "non-finite gradient at optimizer step " + std::to_string(state.step) +
                                       " (loss " + std::to_string(result.loss) + ")");
    }
  }
  result.grad_norm = adam_update(model, state, grad, config);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'U', 'D', 'I', 'F', 'F', 'C', 'K', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename U>
U swap_bytes(U value) {
  unsigned char b[sizeof(U)];
  std::memcpy(b, &value, sizeof(U));
  std::reverse(b, b + sizeof(U));
  std::memcpy(&value, b, sizeof(U));
  return value;
}

template <typename U>
void write_le(std::ostream& out, U value) {
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  U value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(U));
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open checkpoint '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, vocab.manifest_hash());
  const auto& c = model.config();
  for (int v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_len, c.anchor_token, c.anchor_offset})
    write_le<std::int32_t>(out, v);
  write_le<std::uint64_t>(out, model.params().size());
  for (float p : model.params()) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(p));
  require(static_cast<bool>(out), ErrorKind::kIo, "write to checkpoint '" + path + "' failed");
}

Model<float> load_checkpoint(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::kIo, "'" + path + "' is not a checkpoint");
  require(read_le<std::uint32_t>(in) == kCheckpointVersion, ErrorKind::kIo, "unsupported checkpoint version");
  require(read_le<std::uint64_t>(in) == vocab.manifest_hash(), ErrorKind::kConfiguration,
          "checkpoint was trained with a different vocabulary");
  ModelConfig c;
  c.vocab_size = read_le<std::int32_t>(in);
  c.d_model = read_le<std::int32_t>(in);
  c.n_layers = read_le<std::int32_t>(in);
  c.n_heads = read_le<std::int32_t>(in);
  c.d_ff = read_le<std::int32_t>(in);
  c.max_len = read_le<std::int32_t>(in);
  c.anchor_token = read_le<std::int32_t>(in);
  c.anchor_offset = read_le<std::int32_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated checkpoint header");
  c.validate();
  std::vector<float> params(count);
  for (auto& p : params) p = std::bit_cast<float>(read_le<std::uint32_t>(in));
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated checkpoint tensors");
  return Model<float>(c, std::move(params));
}

template class Model<float>;
template class Model<double>;
template struct KVCache<float>;
template struct KVCache<double>;
template std::vector<float> forward(const Model<float>&, std::span<const TokenId>, ForwardTape<float>*);
template std::vector<double> forward(const Model<double>&, std::span<const TokenId>, ForwardTape<double>*);
template std::vector<float> forward_rows(const Model<float>&, std::span<const TokenId>, std::span<const int>,
                                         KVCache<float>*, int);
template std::vector<double> forward_rows(const Model<double>&, std::span<const TokenId>, std::span<const int>,
                                          KVCache<double>*, int);
template void backward(const Model<float>&, const ForwardTape<float>&, std::span<const float>, std::vector<float>&);
template void backward(const Model<double>&, const ForwardTape<double>&, std::span<const double>,
                       std::vector<double>&);
template float masked_ce_loss(std::span<const float>, int, std::span<const TokenId>, const MaskSet&,
                              std::vector<float>*);
template double masked_ce_loss(std::span<const double>, int, std::span<const TokenId>, const MaskSet&,
                               std::vector<double>*);

}  // namespace unidiff
