// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "unidiff/error.hpp"

namespace unidiff {
namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

// Row of `step.logits` for `cell`, or empty when the cell was not masked.
std::span<const float> logits_of(const StepRecord& step, int cell, int width) {
  const auto it = std::lower_bound(step.masked.begin(), step.masked.end(), cell);
  if (it == step.masked.end() || *it != cell) return {};
  const auto i = static_cast<std::size_t>(it - step.masked.begin());
  return {step.logits.data() + i * static_cast<std::size_t>(width), static_cast<std::size_t>(width)};
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::kContract, "cosine of vectors with different lengths");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::kContract, "spearman series differ in length");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

FidelityReport fidelity_report(const Trajectory& baseline, const Trajectory& cached) {
  require(baseline.height == cached.height && baseline.width == cached.width &&
              baseline.steps.size() == cached.steps.size(),
          ErrorKind::kContract, "trajectories differ in shape or step count");
  const std::size_t n_steps = baseline.steps.size();
  for (const StepRecord& s : baseline.steps) {
    require(s.masked.empty() || (!s.logits.empty() && s.logits.size() % s.masked.size() == 0),
            ErrorKind::kContract, "baseline trajectory was recorded without logits");
  }
  FidelityReport rep;
  for (const StepRecord& s : cached.steps) {
    rep.masked_total += static_cast<long>(s.masked.size());
    rep.reused_total += static_cast<long>(s.reused.size());
  }
  rep.computed_masked = cached.computed_masked;
  rep.accounting_holds = rep.computed_masked == rep.masked_total - rep.reused_total;
  rep.savings_fraction =
      rep.masked_total ? static_cast<double>(rep.reused_total) / static_cast<double>(rep.masked_total) : 0.0;

  long same = 0;
  for (std::size_t i = 0; i < baseline.grid.cells.size(); ++i) same += baseline.grid.cells[i] == cached.grid.cells[i];
  rep.final_agreement =
      baseline.grid.cells.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(baseline.grid.cells.size());

  int width = 0;
  for (const StepRecord& s : baseline.steps) {
    if (!s.masked.empty()) {
      width = static_cast<int>(s.logits.size() / s.masked.size());
      break;
    }
  }
  std::vector<double> xs, ys;
  rep.per_step_similarity.assign(n_steps, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 1; t < n_steps; ++t) {
    const StepRecord& prev = baseline.steps[t - 1];
    const StepRecord& cur = baseline.steps[t];
    for (std::size_t i = 0; i < cur.masked.size(); ++i) {
      const auto a = logits_of(prev, cur.masked[i], width);
      if (a.empty()) continue;
      const auto b = logits_of(cur, cur.masked[i], width);
      const float mx = *std::max_element(a.begin(), a.end());
      const double cs = cosine_similarity(a, b);
      rep.scatter.emplace_back(mx, cs);
      xs.push_back(mx);
      ys.push_back(cs);
    }
    double sum = 0;
    int count = 0;
    for (int cell : cached.steps[t].reused) {
      const auto a = logits_of(prev, cell, width);
      const auto b = logits_of(cur, cell, width);
      if (a.empty() || b.empty()) continue;
      sum += cosine_similarity(a, b);
      ++count;
    }
    if (count) rep.per_step_similarity[t] = sum / count;
  }
  rep.spearman = spearman(xs, ys);
  return rep;
}

}  // namespace unidiff
