// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major kernels used by the transformer. Every kernel parallelizes
// over independent output rows with OpenMP and runs the same per-row code in
// either mode, so serial and parallel execution agree bit for bit. Each output
// row depends only on its own input row (plus shared weights), which is what
// lets the cached forward recompute a subset of rows and still match the full
// forward exactly.
//
// kernels::ref holds naive reference implementations used only by tests and
// the benchmark.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <type_traits>
#include <vector>
#include <cmath>
#include <cstddef>
#include <limits>

namespace unidiff::kernels {

// Below this many output elements a parallel region costs more than it saves.
inline constexpr std::size_t kParallelThreshold = 1 << 14;

inline bool go_parallel(std::size_t work) { return work >= kParallelThreshold; }

// Upper bound on attention keys; the model refuses longer sequences.
inline constexpr int kMaxKeys = 1024;

template <typename T>
inline T dot(const T* a, const T* b, int n) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, int n) {
#pragma omp simd
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out[n] = bias + a[k] * W[k x n]
template <typename T>
inline void matmul_row(const T* a, int k, const T* w, int n, const T* bias, T* out) {
  if (bias) {
    std::copy(bias, bias + n, out);
  } else {
    std::fill(out, out + n, T(0));
  }
  for (int p = 0; p < k; ++p) axpy(a[p], w + static_cast<std::size_t>(p) * n, out, n);
}

// out[m x n] = A[m x k] * W[k x n] + bias
template <typename T>
void matmul(const T* a, int m, int k, const T* w, int n, const T* bias, T* out) {
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(m) * n * k / 16))
  for (int i = 0; i < m; ++i) {
    matmul_row(a + static_cast<std::size_t>(i) * k, k, w, n, bias, out + static_cast<std::size_t>(i) * n);
  }
}

// dA[m x k] = dOut[m x n] * W^T
template <typename T>
void matmul_backward_input(const T* dout, int m, int n, const T* w, int k, T* da) {
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(m) * n * k / 16))
  for (int i = 0; i < m; ++i) {
    const T* g = dout + static_cast<std::size_t>(i) * n;
    T* row = da + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) row[p] = dot(g, w + static_cast<std::size_t>(p) * n, n);
  }
}

// dW[k x n] += A^T * dOut ; dB[n] += column sums of dOut
template <typename T>
void matmul_backward_weight(const T* a, const T* dout, int m, int k, int n, T* dw, T* db) {
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(m) * n * k / 16))
  for (int p = 0; p < k; ++p) {
    T* row = dw + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) axpy(a[static_cast<std::size_t>(i) * k + p], dout + static_cast<std::size_t>(i) * n, row, n);
  }
  if (db) {
    for (int i = 0; i < m; ++i) axpy(T(1), dout + static_cast<std::size_t>(i) * n, db, n);
  }
}

template <typename T>
inline constexpr T kLayerNormEps = T(1e-5);

// Per row: xhat = (x - mean) * rstd ; out = xhat * gamma + beta.
template <typename T>
void layernorm(const T* x, int m, int d, const T* gamma, const T* beta, T* out, T* xhat, T* rstd) {
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(m) * d * 4))
  for (int i = 0; i < m; ++i) {
    const T* xi = x + static_cast<std::size_t>(i) * d;
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= T(d);
    T var = 0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= T(d);
    const T r = T(1) / std::sqrt(var + kLayerNormEps<T>);
    T* hi = xhat + static_cast<std::size_t>(i) * d;
    T* oi = out + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      hi[j] = (xi[j] - mean) * r;
      oi[j] = hi[j] * gamma[j] + beta[j];
    }
    if (rstd) rstd[i] = r;
  }
}

// dx = rstd * (g - mean(g) - xhat * mean(g * xhat)), g = dout * gamma.
template <typename T>
void layernorm_backward(const T* dout, const T* xhat, const T* rstd, const T* gamma, int m, int d, T* dx,
                        T* dgamma, T* dbeta) {
  for (int i = 0; i < m; ++i) {
    const T* go = dout + static_cast<std::size_t>(i) * d;
    const T* hi = xhat + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      dgamma[j] += go[j] * hi[j];
      dbeta[j] += go[j];
    }
  }
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(m) * d * 4))
  for (int i = 0; i < m; ++i) {
    const T* go = dout + static_cast<std::size_t>(i) * d;
    const T* hi = xhat + static_cast<std::size_t>(i) * d;
    T* di = dx + static_cast<std::size_t>(i) * d;
    T mean_g = 0;
    T mean_gh = 0;
    for (int j = 0; j < d; ++j) {
      const T g = go[j] * gamma[j];
      mean_g += g;
      mean_gh += g * hi[j];
    }
    mean_g /= T(d);
    mean_gh /= T(d);
    for (int j = 0; j < d; ++j) di[j] = rstd[i] * (go[j] * gamma[j] - mean_g - hi[j] * mean_gh);
  }
}

// Cephes-style expf: range reduction to [-ln2/2, ln2/2] and a degree-6
// polynomial, written branch-free so loops around it vectorize. Max relative
// error ~1e-7 on [-87, 88]; inputs outside are clamped.
inline float fast_exp(float x) {
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  const float n = (x * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
  const float r = x - n * 0.693359375f + n * 2.12194440e-4f;
  float y = 1.9875691500e-4f;
  y = y * r + 1.3981999507e-3f;
  y = y * r + 8.3334519073e-3f;
  y = y * r + 4.1665795894e-2f;
  y = y * r + 1.6666665459e-1f;
  y = y * r + 5.0000001201e-1f;
  y = y * r * r + r + 1.0f;
  const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
  return y * std::bit_cast<float>(bits);
}

// float paths use fast_exp; double (gradient checking) stays on libm.
template <typename T>
inline T vexp(T x) {
  if constexpr (std::is_same_v<T, float>) {
    return fast_exp(x);
  } else {
    return std::exp(x);
  }
}

template <typename T>
inline T vtanh(T u) {
  return T(1) - T(2) / (vexp(T(2) * u) + T(1));
}

template <typename T>
inline T gelu(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + vtanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  constexpr T c = T(0.7978845608028654);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = vtanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <typename T>
void gelu_forward(const T* x, std::size_t n, T* out) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp simd
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = gelu(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dout, std::size_t n, T* dx) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp simd
  for (std::ptrdiff_t i = 0; i < count; ++i) dx[i] = dout[i] * gelu_grad(x[i]);
}

// In-place numerically stable softmax of one row.
template <typename T>
inline void softmax_row(T* row, int n) {
  T mx = -std::numeric_limits<T>::infinity();
#pragma omp simd reduction(max : mx)
  for (int j = 0; j < n; ++j) mx = row[j] > mx ? row[j] : mx;
  T sum = 0;
#pragma omp simd reduction(+ : sum)
  for (int j = 0; j < n; ++j) {
    row[j] = vexp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
#pragma omp simd
  for (int j = 0; j < n; ++j) row[j] *= inv;
}

// Multi-head bidirectional attention for a block of query rows against a full
// key/value table.
//   q:     rows x d          (query projections of the rows being computed)
//   k, v:  keys x d
//   out:   rows x d
//   probs: heads x rows x keys (optional; kept for the backward pass)
template <typename T>
void attention(const T* q, int rows, const T* k, const T* v, int keys, int d, int heads, T* out, T* probs) {
  const int hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  // Keys transposed per head (d x keys) so score rows vectorize over keys.
  std::vector<T> kt(static_cast<std::size_t>(d) * keys);
  for (int j = 0; j < keys; ++j) {
    for (int c = 0; c < d; ++c) kt[static_cast<std::size_t>(c) * keys + j] = k[static_cast<std::size_t>(j) * d + c];
  }
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<std::size_t>(rows) * keys * d / 4))
  for (int i = 0; i < rows; ++i) {
    T local[kMaxKeys];
    T* oi = out + static_cast<std::size_t>(i) * d;
    std::fill(oi, oi + d, T(0));
    for (int h = 0; h < heads; ++h) {
      T* p = probs ? probs + (static_cast<std::size_t>(h) * rows + i) * keys : local;
      const T* qi = q + static_cast<std::size_t>(i) * d + h * hd;
      std::fill(p, p + keys, T(0));
      for (int c = 0; c < hd; ++c) axpy(qi[c] * scale, kt.data() + static_cast<std::size_t>(h * hd + c) * keys, p, keys);
      softmax_row(p, keys);
      for (int j = 0; j < keys; ++j) axpy(p[j], v + static_cast<std::size_t>(j) * d + h * hd, oi + h * hd, hd);
    }
  }
}

// Backward of attention() with rows == keys (the training path).
//   ds: heads x n x n scratch
template <typename T>
void attention_backward(const T* dout, const T* q, const T* k, const T* v, const T* probs, int n, int d, int heads,
                        T* dq, T* dk, T* dv, T* ds) {
  const int hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const bool par = go_parallel(static_cast<std::size_t>(n) * n * d / 4);
  // dS = P * (dP - rowsum(P * dP)), dP_ij = dout_i . v_j
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < heads; ++h) {
      const T* p = probs + (static_cast<std::size_t>(h) * n + i) * n;
      T* s = ds + (static_cast<std::size_t>(h) * n + i) * n;
      const T* gi = dout + static_cast<std::size_t>(i) * d + h * hd;
      T acc = 0;
      for (int j = 0; j < n; ++j) {
        s[j] = dot(gi, v + static_cast<std::size_t>(j) * d + h * hd, hd);
        acc += p[j] * s[j];
      }
      for (int j = 0; j < n; ++j) s[j] = p[j] * (s[j] - acc) * scale;
    }
  }
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < n; ++i) {
    T* dqi = dq + static_cast<std::size_t>(i) * d;
    std::fill(dqi, dqi + d, T(0));
    for (int h = 0; h < heads; ++h) {
      const T* s = ds + (static_cast<std::size_t>(h) * n + i) * n;
      for (int j = 0; j < n; ++j) axpy(s[j], k + static_cast<std::size_t>(j) * d + h * hd, dqi + h * hd, hd);
    }
  }
#pragma omp parallel for schedule(static) if (par)
  for (int j = 0; j < n; ++j) {
    T* dkj = dk + static_cast<std::size_t>(j) * d;
    T* dvj = dv + static_cast<std::size_t>(j) * d;
    std::fill(dkj, dkj + d, T(0));
    std::fill(dvj, dvj + d, T(0));
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < n; ++i) {
        const T sij = ds[(static_cast<std::size_t>(h) * n + i) * n + j];
        const T pij = probs[(static_cast<std::size_t>(h) * n + i) * n + j];
        axpy(sij, q + static_cast<std::size_t>(i) * d + h * hd, dkj + h * hd, hd);
        axpy(pij, dout + static_cast<std::size_t>(i) * d + h * hd, dvj + h * hd, hd);
      }
    }
  }
}

namespace ref {

template <typename T>
void matmul(const T* a, int m, int k, const T* w, int n, const T* bias, T* out) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = bias ? bias[j] : 0.0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * w[p * n + j];
      out[i * n + j] = static_cast<T>(s);
    }
  }
}

template <typename T>
void layernorm(const T* x, int m, int d, const T* gamma, const T* beta, T* out) {
  for (int i = 0; i < m; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < d; ++j) mean += x[i * d + j];
    mean /= d;
    for (int j = 0; j < d; ++j) var += (x[i * d + j] - mean) * (x[i * d + j] - mean);
    var /= d;
    for (int j = 0; j < d; ++j) {
      out[i * d + j] = static_cast<T>((x[i * d + j] - mean) / std::sqrt(var + 1e-5) * gamma[j] + beta[j]);
    }
  }
}

template <typename T>
void attention(const T* q, int rows, const T* k, const T* v, int keys, int d, int heads, T* out) {
  const int hd = d / heads;
  for (int i = 0; i < rows; ++i) {
    for (int h = 0; h < heads; ++h) {
      double mx = -1e300;
      double scores[1024];
      for (int j = 0; j < keys; ++j) {
        double s = 0;
        for (int t = 0; t < hd; ++t) s += static_cast<double>(q[i * d + h * hd + t]) * k[j * d + h * hd + t];
        scores[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, scores[j]);
      }
      double z = 0;
      for (int j = 0; j < keys; ++j) z += std::exp(scores[j] - mx);
      for (int t = 0; t < hd; ++t) {
        double acc = 0;
        for (int j = 0; j < keys; ++j) acc += std::exp(scores[j] - mx) / z * v[j * d + h * hd + t];
        out[i * d + h * hd + t] = static_cast<T>(acc);
      }
    }
  }
}

template <typename T>
void gelu(const T* x, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v))));
  }
}

template <typename T>
void softmax_row(T* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max<double>(mx, row[j]);
  double z = 0;
  for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  for (int j = 0; j < n; ++j) row[j] = static_cast<T>(std::exp(row[j] - mx) / z);
}

}  // namespace ref

}  // namespace unidiff::kernels
