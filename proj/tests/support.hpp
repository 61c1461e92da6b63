// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <doctest.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "unidiff/corpus.hpp"
#include "unidiff/error.hpp"
#include "unidiff/model.hpp"
#include "unidiff/rng.hpp"

namespace unidiff::test {

// Small model used wherever the tests need a network but not a trained one.
inline ModelConfig tiny_config(const Vocabulary& vocab, int d = 32, int layers = 2, int max_len = 128) {
  ModelConfig c = default_model_config(vocab);
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = 4;
  c.d_ff = 2 * d;
  c.max_len = max_len;
  return c;
}

inline Model<float> tiny_model(const Vocabulary& vocab, std::uint64_t seed = 1, int d = 32, int layers = 2) {
  return Model<float>(tiny_config(vocab, d, layers), seed);
}

// Random parameters are too flat for argmax-driven tests; scale them up so
// logits spread out.
template <typename T>
Model<T> sharpened(Model<T> model, T factor) {
  for (auto& p : model.params()) p *= factor;
  return model;
}

// Same network in double precision, for finite-difference checks.
inline Model<double> to_double(const Model<float>& m) {
  Model<double> out(m.config(), 1);
  std::copy(m.params().begin(), m.params().end(), out.params().begin());
  return out;
}

inline ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an unidiff::Error");
  return ErrorKind::kContract;
}

inline GridImage random_grid(const Vocabulary& vocab, int h, int w, Rng& rng) {
  GridImage g(h, w, 0);
  std::uniform_int_distribution<int> color(0, vocab.image_count() - 1);
  for (auto& c : g.cells) c = vocab.image_token(color(rng));
  return g;
}

}  // namespace unidiff::test
