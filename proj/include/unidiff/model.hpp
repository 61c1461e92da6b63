// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unidiff/rng.hpp"
#include "unidiff/vocab.hpp"

namespace unidiff {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_len = 256;
  // Positions are counted from the first occurrence of anchor_token, which
  // sits at table row anchor_offset; -1 keeps plain sequence indices.
  int anchor_token = -1;
  int anchor_offset = 32;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Toy defaults over `vocab`, with positions anchored at the image-begin token.
ModelConfig default_model_config(const Vocabulary& vocab);

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, wq, wk, wv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

// Flat parameter layout in declared (checkpoint) order.
struct ParamLayout {
  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, w_out = 0, b_out = 0;
  std::vector<LayerOffsets> layers;
  std::vector<TensorSpec> tensors;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& config);
};

// The mask predictor: a pre-LN bidirectional transformer over the joint
// vocabulary with learned absolute positions. T is float for training and
// inference, double for gradient verification.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t init_seed);
  Model(const ModelConfig& config, std::vector<T> params);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  const T* at(std::size_t offset) const { return params_.data() + offset; }
  T* at(std::size_t offset) { return params_.data() + offset; }

  template <typename U>
  Model<U> cast() const {
    return Model<U>(config_, std::vector<U>(params_.begin(), params_.end()));
  }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<T> params_;
};

// Activations kept for the backward pass.
template <typename T>
struct ForwardTape {
  struct Layer {
    std::vector<T> x_in, xhat1, rstd1, h1, q, k, v, probs, att, x_mid, xhat2, rstd2, h2, ff_pre, ff_act;
  };
  int n = 0;
  std::vector<TokenId> ids;
  std::vector<Layer> layers;
  std::vector<T> x_final, xhat_f, rstd_f, h_f;
};

// Per-layer key/value rows and last logits for every position, filled by
// forward_rows and read back for positions that are not recomputed.
template <typename T>
struct KVCache {
  int n = 0;
  std::vector<std::vector<T>> keys;    // per layer, n x d
  std::vector<std::vector<T>> values;  // per layer, n x d
  std::vector<T> logits;               // n x K
  std::vector<std::uint8_t> valid;     // per position
  std::vector<int> computed_at;        // step index of the last computation

  void reset(int n_positions, const ModelConfig& config);
};

// Full forward pass: logits (n x K), row-major. Throws kVocabulary for ids out
// of range and kCapacity when the sequence exceeds max_len.
template <typename T>
std::vector<T> forward(const Model<T>& model, std::span<const TokenId> ids, ForwardTape<T>* tape = nullptr);

// Recomputes only `rows` (sorted, unique). Every other position takes its keys,
// values and logits from `cache`; a missing entry is a kCacheCoherence error.
// The cache is refreshed for the computed rows. With rows == all positions the
// result is bitwise identical to forward().
template <typename T>
std::vector<T> forward_rows(const Model<T>& model, std::span<const TokenId> ids, std::span<const int> rows,
                            KVCache<T>* cache, int step_index = 0);

// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
template <typename T>
void backward(const Model<T>& model, const ForwardTape<T>& tape, std::span<const T> dlogits, std::vector<T>& grad);

void validate_ids(std::span<const TokenId> ids, const ModelConfig& config);

// Row of the position table used for each input position, clamped to
// [0, max_len).
std::vector<int> position_ids(std::span<const TokenId> ids, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Masking and loss

struct MaskSet {
  std::vector<int> indices;  // sorted
  double ratio = 1.0;
  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

// Uniform without replacement over maskable positions; |M| = floor(L_maskable * m).
MaskSet sample_training_mask(Rng& rng, const TokenSequence& seq, double ratio);

// Copy of seq.ids with the mask positions replaced by MASK.
std::vector<TokenId> apply_mask(const TokenSequence& seq, const MaskSet& mask, const Vocabulary& vocab);

// -(1/|M|) sum_{i in M} log softmax(logits[i])[targets[i]]; fills dlogits when
// non-null (same shape as logits, zero outside M).
template <typename T>
T masked_ce_loss(std::span<const T> logits, int vocab_size, std::span<const TokenId> targets, const MaskSet& mask,
                 std::vector<T>* dlogits = nullptr);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
};

struct AdamState {
  std::vector<float> m, v;
  std::int64_t step = 0;
};

// Clips to grad_clip (global L2) and applies one decoupled-weight-decay Adam
// update. Returns the pre-clip gradient norm.
double adam_update(Model<float>& model, AdamState& state, std::vector<float>& grad, const AdamConfig& config);

struct TrainStepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t masked_tokens = 0;
};

// One optimizer step on a batch. Each example draws its own ratio
// m ~ Uniform(0, 1] and a mask over its maskable positions; the loss is the
// batch mean of per-example masked cross-entropy. Throws kDivergence on
// non-finite loss or gradient.
TrainStepResult train_step(Model<float>& model, std::span<const TokenSequence> batch, AdamState& state,
                           const AdamConfig& config, const Vocabulary& vocab, Rng& rng);

// ---------------------------------------------------------------------------
// Checkpoints: versioned header followed by little-endian float32 tensors.

void save_checkpoint(const std::string& path, const Model<float>& model, const Vocabulary& vocab);
Model<float> load_checkpoint(const std::string& path, const Vocabulary& vocab);

}  // namespace unidiff
