// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "unidiff/error.hpp"
#include "unidiff/layout.hpp"

namespace unidiff {
namespace {

template <typename T>
T log_sum_exp(const T* v, int n) {
  T mx = v[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, v[j]);
  T s = 0;
  for (int j = 0; j < n; ++j) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

std::size_t cell_row(std::size_t image_begin, int width, int cell) {
  return image_begin + cell_offset(width, cell / width, cell % width);
}

struct TrajectoryTerms {
  double t2i = 0.0;     // mean over selected steps
  double kl_sum = 0.0;  // summed over masked cells of selected steps
};

// Shared forward work for the generation log-likelihood and the KL anchor.
// Gradients: t2i_scale * d(t2i) + kl_scale * d(kl_sum).
template <typename T>
TrajectoryTerms trajectory_terms(const Model<T>& model, const Model<T>* reference, const Trajectory& traj,
                                 std::span<const int> selected, const Vocabulary& vocab, std::vector<T>* grad,
                                 T t2i_scale, T kl_scale) {
  require(!selected.empty(), ErrorKind::kParameter, "no selected timesteps");
  std::vector<std::uint8_t> chosen(traj.steps.size(), 0);
  for (int t : selected) {
    require(t >= 1 && t <= static_cast<int>(traj.steps.size()), ErrorKind::kParameter,
            "selected timestep " + std::to_string(t) + " outside trajectory of " +
                std::to_string(traj.steps.size()) + " steps");
    chosen[static_cast<std::size_t>(t - 1)] = 1;
  }
  const bool guided = traj.cfg_scale != 1.0;
  const T s = static_cast<T>(traj.cfg_scale);
  const IdRange img = vocab.image_subrange();
  const int kv = vocab.total_size();
  const std::size_t cond_begin = t2i_image_begin(traj.caption.size());
  const std::size_t uncond_begin = uncond_image_begin();
  const T inv_sel = T(1) / static_cast<T>(selected.size());

  TrajectoryTerms out;
  std::vector<TokenId> cells = traj.initial;
  ForwardTape<T> cond_tape, uncond_tape;
  std::vector<T> g(static_cast<std::size_t>(img.count)), p(static_cast<std::size_t>(img.count)),
      q(static_cast<std::size_t>(img.count));

  for (std::size_t si = 0; si < traj.steps.size(); ++si) {
    const StepRecord& rec = traj.steps[si];
    const auto committed = committed_at(rec);
    const bool want_kl = reference != nullptr && !rec.masked.empty();
    if (chosen[si] && (!committed.empty() || want_kl)) {
      const auto cond_ids = t2i_canvas(traj.caption, traj.height, traj.width, cells, vocab);
      const auto uncond_ids = uncond_canvas(traj.height, traj.width, cells, vocab);
      const auto cond = forward(model, std::span<const TokenId>(cond_ids), grad ? &cond_tape : nullptr);
      std::vector<T> uncond, ref_cond, ref_uncond;
      if (guided) uncond = forward(model, std::span<const TokenId>(uncond_ids), grad ? &uncond_tape : nullptr);
      if (want_kl) {
        ref_cond = forward(*reference, std::span<const TokenId>(cond_ids));
        if (guided) ref_uncond = forward(*reference, std::span<const TokenId>(uncond_ids));
      }
      std::vector<T> d_cond, d_uncond;
      if (grad) {
        d_cond.assign(cond.size(), T(0));
        if (guided) d_uncond.assign(uncond.size(), T(0));
      }
      auto guide = [&](const std::vector<T>& c, const std::vector<T>& u, int cell, std::vector<T>& dst) {
        const T* cr = c.data() + cell_row(cond_begin, traj.width, cell) * kv + img.begin;
        if (!guided) {
          std::copy_n(cr, img.count, dst.begin());
          return;
        }
        const T* ur = u.data() + cell_row(uncond_begin, traj.width, cell) * kv + img.begin;
        for (int j = 0; j < img.count; ++j) dst[static_cast<std::size_t>(j)] = ur[j] + s * (cr[j] - ur[j]);
      };
      // dg holds d(objective)/d(guided logits) for one cell.
      auto push_grad = [&](int cell, const std::vector<T>& dg) {
        T* dc = d_cond.data() + cell_row(cond_begin, traj.width, cell) * kv + img.begin;
        if (!guided) {
          for (int j = 0; j < img.count; ++j) dc[j] += dg[static_cast<std::size_t>(j)];
          return;
        }
        T* du = d_uncond.data() + cell_row(uncond_begin, traj.width, cell) * kv + img.begin;
        for (int j = 0; j < img.count; ++j) {
          dc[j] += s * dg[static_cast<std::size_t>(j)];
          du[j] += (T(1) - s) * dg[static_cast<std::size_t>(j)];
        }
      };
      std::vector<T> dg(static_cast<std::size_t>(img.count));

      T step_ll = 0;
      for (auto [cell, id] : committed) {
        guide(cond, uncond, cell, g);
        const T lse = log_sum_exp(g.data(), img.count);
        step_ll += g[static_cast<std::size_t>(id - img.begin)] - lse;
        if (grad) {
          for (int j = 0; j < img.count; ++j) {
            dg[static_cast<std::size_t>(j)] =
                -t2i_scale * inv_sel * std::exp(g[static_cast<std::size_t>(j)] - lse);
          }
          dg[static_cast<std::size_t>(id - img.begin)] += t2i_scale * inv_sel;
          push_grad(cell, dg);
        }
      }
      out.t2i += static_cast<double>(step_ll * inv_sel);

      if (want_kl) {
        for (int cell : rec.masked) {
          guide(cond, uncond, cell, g);
          guide(ref_cond, ref_uncond, cell, q);
          const T lp = log_sum_exp(g.data(), img.count);
          const T lq = log_sum_exp(q.data(), img.count);
          T kl = 0;
          for (int j = 0; j < img.count; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            p[jj] = std::exp(g[jj] - lp);
            kl += p[jj] * ((g[jj] - lp) - (q[jj] - lq));
          }
          out.kl_sum += static_cast<double>(kl);
          if (grad && kl_scale != T(0)) {
            for (int j = 0; j < img.count; ++j) {
              const auto jj = static_cast<std::size_t>(j);
              dg[jj] = kl_scale * p[jj] * (((g[jj] - lp) - (q[jj] - lq)) - kl);
            }
            push_grad(cell, dg);
          }
        }
      }
      if (grad) {
        backward(model, cond_tape, std::span<const T>(d_cond), *grad);
        if (guided) backward(model, uncond_tape, std::span<const T>(d_uncond), *grad);
      }
    }
    for (auto [cell, id] : committed) cells[static_cast<std::size_t>(cell)] = id;
  }
  return out;
}

}  // namespace

RewardMode parse_reward_mode(std::string_view word) {
  if (word == "oracle") return RewardMode::kOracle;
  if (word == "model") return RewardMode::kModel;
  fail(ErrorKind::kParameter, "unknown reward mode '" + std::string(word) + "'");
}

GrpoConfig::GrpoConfig() {
  sampler.steps = 16;
  sampler.cfg_scale = 2.0;
  sampler.temperature = 1.0;
  answer.block_length = 4;
  answer.steps_per_block = 2;
  answer.max_total_length = 8;
  adam.lr = 1e-4;
  adam.beta1 = 0.9;
  adam.beta2 = 0.99;
  adam.weight_decay = 0.0;
}

void GrpoConfig::validate() const {
  require(group >= 2, ErrorKind::kParameter, "group size must be at least 2");
  require(alpha > 0.0, ErrorKind::kParameter, "alpha must be positive");
  require(beta >= 0.0, ErrorKind::kParameter, "beta must be non-negative");
  require(answer_length >= 2, ErrorKind::kParameter, "answer_length must be at least 2");
  sampler.validate();
  answer.validate();
  for (int t : selected_steps()) {
    require(t >= 1 && t <= sampler.steps, ErrorKind::kParameter,
            "selected timestep " + std::to_string(t) + " outside [1, " + std::to_string(sampler.steps) + "]");
  }
}

std::vector<int> GrpoConfig::selected_steps() const {
  if (!selected.empty()) return selected;
  const int n = std::max(1, (sampler.steps + 3) / 4);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i + 1;
  return out;
}

RolloutGroup rollout_group(const Model<float>& model, std::span<const TokenId> caption,
                           const std::vector<QAItem>& questions, int group, SamplerConfig sampler,
                           std::uint64_t seed, const Vocabulary& vocab) {
  require(group >= 2, ErrorKind::kParameter, "group size must be at least 2");
  RolloutGroup out;
  out.caption.assign(caption.begin(), caption.end());
  out.questions = questions;
  out.candidates.resize(static_cast<std::size_t>(group));
  SeedSplitter split(seed);
  for (int g = 0; g < group; ++g) {
    sampler.seed = split.seed("rollout", static_cast<std::uint64_t>(g));
    out.candidates[static_cast<std::size_t>(g)].trajectory = generate_image(model, caption, sampler, vocab);
  }
  return out;
}

void compute_rewards(RolloutGroup& group, RewardMode mode, const Model<float>& model, const Corpus& corpus,
                     const BlockConfig& answer) {
  const Vocabulary& vocab = corpus.vocab();
  for (Rollout& r : group.candidates) {
    r.reward = 0;
    r.malformed = false;
    r.answers.assign(group.questions.size(), -1);
    try {
      validate_grid(r.trajectory.grid, vocab);
    } catch (const Error&) {
      r.malformed = true;
      continue;
    }
    for (std::size_t n = 0; n < group.questions.size(); ++n) {
      const QAItem& q = group.questions[n];
      if (mode == RewardMode::kOracle) {
        const int pick = oracle_answer(r.trajectory.grid, q, vocab);
        r.reward += pick == q.correct_index;
        r.answers[n] = corpus.lexicon().id(q.choices[static_cast<std::size_t>(pick)]);
      } else {
        const AnswerResult a = answer_question(model, r.trajectory.grid, q, answer, corpus);
        r.reward += a.choice == q.correct_index;
        if (!a.word.empty()) r.answers[n] = corpus.lexicon().id(a.word);
      }
    }
  }
}

std::vector<double> softmax_weights(std::span<const double> rewards, double alpha) {
  require(rewards.size() >= 2, ErrorKind::kParameter, "softmax weights need at least two rewards");
  require(alpha > 0.0, ErrorKind::kParameter, "alpha must be positive");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> z(rewards.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    z[i] = alpha * (rewards[i] - mean);
    mx = std::max(mx, z[i]);
  }
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  for (double& v : z) v /= sum;
  return z;
}

template <typename T>
T t2i_loglik(const Model<T>& model, const Trajectory& trajectory, std::span<const int> selected,
             const Vocabulary& vocab, std::vector<T>* grad, T scale) {
  return static_cast<T>(
      trajectory_terms<T>(model, nullptr, trajectory, selected, vocab, grad, scale, T(0)).t2i);
}

template <typename T>
T mmu_loglik(const Model<T>& model, const GridImage& grid, const std::vector<QAItem>& questions,
             std::span<const TokenId> answers, int answer_length, const Vocabulary& vocab, std::vector<T>* grad,
             T scale) {
  require(answers.size() == questions.size(), ErrorKind::kContract, "one answer per question expected");
  int used = 0;
  for (TokenId a : answers) used += a >= 0;
  require(used > 0, ErrorKind::kParameter, "no answers to score");
  const int kv = vocab.total_size();
  const IdRange text = vocab.text_subrange();
  const TokenId end = vocab.id(Special::kAnswerEnd);
  const T inv_n = T(1) / static_cast<T>(used);
  ForwardTape<T> tape;
  T total = 0;
  std::vector<T> cand(static_cast<std::size_t>(text.count + 1));
  for (std::size_t n = 0; n < questions.size(); ++n) {
    const TokenId y = answers[n];
    if (y < 0) continue;
    require(vocab.classify(y) == TokenClass::kText, ErrorKind::kClass, "answers must be text tokens");
    std::vector<TokenId> ids = mmu_prompt(grid, questions[n].question, vocab).ids;
    const std::size_t slot = ids.size();
    ids.resize(slot + static_cast<std::size_t>(answer_length), vocab.mask());
    const auto logits = forward(model, std::span<const TokenId>(ids), grad ? &tape : nullptr);
    const T* row = logits.data() + slot * kv;
    std::copy_n(row + text.begin, text.count, cand.begin());
    cand[static_cast<std::size_t>(text.count)] = row[end];
    const T lse = log_sum_exp(cand.data(), text.count + 1);
    total += row[y] - lse;
    if (grad) {
      std::vector<T> dl(logits.size(), T(0));
      T* drow = dl.data() + slot * kv;
      const T w = scale * inv_n;
      for (int j = 0; j < text.count; ++j) drow[text.begin + j] = -w * std::exp(row[text.begin + j] - lse);
      drow[end] = -w * std::exp(row[end] - lse);
      drow[y] += w;
      backward(model, tape, std::span<const T>(dl), *grad);
    }
  }
  return total * inv_n;
}

template <typename T>
GrpoLossParts grpo_loss(const Model<T>& model, const Model<T>& reference, const std::vector<RolloutGroup>& groups,
                        const GrpoConfig& config, const Vocabulary& vocab, std::vector<T>* grad) {
  require(!groups.empty(), ErrorKind::kParameter, "no rollout groups");
  const std::vector<int> sel = config.selected_steps();
  long kl_count = 0;
  for (const auto& grp : groups) {
    require(grp.weights.size() == grp.candidates.size(), ErrorKind::kContract, "weights missing for a group");
    for (const auto& cand : grp.candidates) {
      for (int t : sel) {
        require(t >= 1 && t <= static_cast<int>(cand.trajectory.steps.size()), ErrorKind::kParameter,
                "selected timestep " + std::to_string(t) + " outside the trajectory");
        kl_count += static_cast<long>(cand.trajectory.steps[static_cast<std::size_t>(t - 1)].masked.size());
      }
    }
  }
  const T inv_groups = T(1) / static_cast<T>(groups.size());
  const T kl_scale = kl_count > 0 ? static_cast<T>(config.beta) / static_cast<T>(kl_count) : T(0);
  GrpoLossParts parts;
  double kl_sum = 0.0;
  for (const auto& grp : groups) {
    for (std::size_t g = 0; g < grp.candidates.size(); ++g) {
      const Rollout& cand = grp.candidates[g];
      const T w = static_cast<T>(grp.weights[g]);
      const T scale = -w * inv_groups;
      const auto terms = trajectory_terms<T>(model, &reference, cand.trajectory, sel, vocab, grad, scale, kl_scale);
      parts.weighted_t2i += static_cast<double>(w) * terms.t2i;
      kl_sum += terms.kl_sum;
      const bool has_answer = std::any_of(cand.answers.begin(), cand.answers.end(), [](TokenId a) { return a >= 0; });
      if (config.use_mmu && has_answer && !cand.malformed) {
        const T mmu = mmu_loglik<T>(model, cand.trajectory.grid, grp.questions, cand.answers, config.answer_length,
                                    vocab, grad, scale);
        parts.weighted_mmu += static_cast<double>(w) * static_cast<double>(mmu);
      }
    }
  }
  parts.weighted_t2i /= static_cast<double>(groups.size());
  parts.weighted_mmu /= static_cast<double>(groups.size());
  parts.kl = kl_count > 0 ? kl_sum / static_cast<double>(kl_count) : 0.0;
  parts.loss = -(parts.weighted_t2i + parts.weighted_mmu) + config.beta * parts.kl;
  return parts;
}

GrpoDiagnostics grpo_step(Model<float>& model, const Model<float>& reference, const std::vector<RolloutGroup>& groups,
                          AdamState& state, const GrpoConfig& config, const Vocabulary& vocab) {
  std::vector<float> grad(model.params().size(), 0.0f);
  const GrpoLossParts parts = grpo_loss<float>(model, reference, groups, config, vocab, &grad);
  GrpoDiagnostics d;
  d.loss = parts.loss;
  d.kl = parts.kl;
  require(std::isfinite(parts.loss), ErrorKind::kDivergence,
          "non-finite GRPO loss (t2i " + std::to_string(parts.weighted_t2i) + ", mmu " +
              std::to_string(parts.weighted_mmu) + ", kl " + std::to_string(parts.kl) + ")");
  for (float gv : grad) require(std::isfinite(gv), ErrorKind::kDivergence, "non-finite GRPO gradient");
  long n = 0;
  for (const auto& grp : groups) {
    double h = 0.0;
    for (std::size_t g = 0; g < grp.candidates.size(); ++g) {
      d.mean_reward += grp.candidates[g].reward;
      ++n;
      if (grp.weights[g] > 0) h -= grp.weights[g] * std::log(grp.weights[g]);
    }
    d.weight_entropy += h;
  }
  d.mean_reward /= static_cast<double>(n);
  d.weight_entropy /= static_cast<double>(groups.size());
  d.grad_norm = adam_update(model, state, grad, config.adam);
  return d;
}

std::vector<GrpoDiagnostics> run_grpo(Model<float>& model, const std::vector<Sample>& prompts,
                                      const GrpoConfig& config, const GrpoRunConfig& run, const Corpus& corpus,
                                      const GrpoCallback& on_iteration) {
  config.validate();
  require(!prompts.empty(), ErrorKind::kParameter, "no GRPO prompts");
  require(run.iterations >= 0 && run.prompts_per_iteration >= 1, ErrorKind::kParameter,
          "iterations must be >= 0 and prompts per iteration >= 1");
  const Model<float> reference = model;
  AdamState state;
  SeedSplitter split(run.seed);
  Rng pick_rng = split.rng("prompts");
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  std::vector<GrpoDiagnostics> out;
  for (int it = 0; it < run.iterations; ++it) {
    std::vector<RolloutGroup> groups;
    for (int p = 0; p < run.prompts_per_iteration; ++p) {
      const Sample& s = prompts[pick(pick_rng)];
      const std::uint64_t seed = split.seed("rollouts", static_cast<std::uint64_t>(it) * 1000003ULL + p);
      RolloutGroup g = rollout_group(model, s.caption, s.qa, config.group, config.sampler, seed, corpus.vocab());
      compute_rewards(g, config.reward, model, corpus, config.answer);
      std::vector<double> r;
      for (const auto& c : g.candidates) r.push_back(c.reward);
      g.weights = softmax_weights(r, config.alpha);
      groups.push_back(std::move(g));
    }
    out.push_back(grpo_step(model, reference, groups, state, config, corpus.vocab()));
    if (on_iteration) on_iteration(it, out.back());
  }
  return out;
}

double wilcoxon_signed_rank(std::span<const double> differences) {
  std::vector<double> mags;
  std::vector<int> signs;
  for (double v : differences) {
    if (v == 0.0) continue;
    mags.push_back(std::fabs(v));
    signs.push_back(v > 0 ? 1 : -1);
  }
  const int n = static_cast<int>(mags.size());
  if (n == 0) return 1.0;
  require(n <= 24, ErrorKind::kParameter, "exact signed-rank enumeration supports at most 24 pairs");
  // Doubled average ranks keep everything integral.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return mags[static_cast<std::size_t>(a)] < mags[static_cast<std::size_t>(b)]; });
  std::vector<long> rank2(static_cast<std::size_t>(n));
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && mags[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])] ==
                            mags[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
      ++j;
    }
    for (int k = i; k <= j; ++k) rank2[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = i + j + 2;
    i = j + 1;
  }
  long total = 0, observed = 0;
  for (int i = 0; i < n; ++i) {
    total += rank2[static_cast<std::size_t>(i)];
    if (signs[static_cast<std::size_t>(i)] > 0) observed += rank2[static_cast<std::size_t>(i)];
  }
  // Compare |2 W+ - total| in doubled units.
  const long obs_dev = std::labs(2 * observed - total);
  long extreme = 0;
  const long patterns = 1L << n;
  for (long m = 0; m < patterns; ++m) {
    long w = 0;
    for (int i = 0; i < n; ++i) {
      if (m & (1L << i)) w += rank2[static_cast<std::size_t>(i)];
    }
    extreme += std::labs(2 * w - total) >= obs_dev;
  }
  return static_cast<double>(extreme) / static_cast<double>(patterns);
}

template float t2i_loglik<float>(const Model<float>&, const Trajectory&, std::span<const int>, const Vocabulary&,
                                 std::vector<float>*, float);
template double t2i_loglik<double>(const Model<double>&, const Trajectory&, std::span<const int>, const Vocabulary&,
                                   std::vector<double>*, double);
template float mmu_loglik<float>(const Model<float>&, const GridImage&, const std::vector<QAItem>&,
                                 std::span<const TokenId>, int, const Vocabulary&, std::vector<float>*, float);
template double mmu_loglik<double>(const Model<double>&, const GridImage&, const std::vector<QAItem>&,
                                   std::span<const TokenId>, int, const Vocabulary&, std::vector<double>*, double);
template GrpoLossParts grpo_loss<float>(const Model<float>&, const Model<float>&, const std::vector<RolloutGroup>&,
                                        const GrpoConfig&, const Vocabulary&, std::vector<float>*);
template GrpoLossParts grpo_loss<double>(const Model<double>&, const Model<double>&, const std::vector<RolloutGroup>&,
                                         const GrpoConfig&, const Vocabulary&, std::vector<double>*);

}  // namespace unidiff
