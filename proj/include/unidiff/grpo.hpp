// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "unidiff/corpus.hpp"
#include "unidiff/model.hpp"
#include "unidiff/sampler.hpp"
#include "unidiff/textgen.hpp"

namespace unidiff {

enum class RewardMode { kOracle, kModel };
RewardMode parse_reward_mode(std::string_view word);

struct GrpoConfig {
  int group = 4;
  double alpha = 1.0;
  double beta = 0.05;
  std::vector<int> selected;  // timesteps in [1, T]; empty selects the earliest quarter
  bool use_mmu = true;
  int answer_length = 8;
  RewardMode reward = RewardMode::kOracle;
  SamplerConfig sampler;
  BlockConfig answer;
  AdamConfig adam;

  GrpoConfig();
  void validate() const;
  std::vector<int> selected_steps() const;
};

struct Rollout {
  Trajectory trajectory;
  int reward = 0;
  bool malformed = false;
  std::vector<TokenId> answers;  // per question; -1 when the question is skipped in the MMU term
};

struct RolloutGroup {
  std::vector<TokenId> caption;
  std::vector<QAItem> questions;
  std::vector<Rollout> candidates;
  std::vector<double> weights;
};

// G generations of one prompt, candidate g sampled with seed split("rollout", g).
RolloutGroup rollout_group(const Model<float>& model, std::span<const TokenId> caption,
                           const std::vector<QAItem>& questions, int group, SamplerConfig sampler,
                           std::uint64_t seed, const Vocabulary& vocab);

// Fills reward and answers for every candidate. Oracle mode scores the grid
// with oracle_answer and teaches the oracle's choice; model mode answers with
// the model itself and keeps its own answers.
void compute_rewards(RolloutGroup& group, RewardMode mode, const Model<float>& model, const Corpus& corpus,
                     const BlockConfig& answer);

// w_g = exp(alpha (r_g - mean r)) / sum_j exp(alpha (r_j - mean r)).
std::vector<double> softmax_weights(std::span<const double> rewards, double alpha);

// Mean over selected timesteps t of the guided, image-restricted
// log-probability of the tokens committed at t, evaluated on the trajectory
// state entering t. Adds scale * d(result)/d(params) into grad when given.
template <typename T>
T t2i_loglik(const Model<T>& model, const Trajectory& trajectory, std::span<const int> selected,
             const Vocabulary& vocab, std::vector<T>* grad = nullptr, T scale = T(1));

// (1/N) sum_n log p(y_n | grid, q_n), with the answer slots masked and the
// softmax restricted to text ids plus ANSWER_END. Questions whose answer is
// negative are skipped; N counts the rest.
template <typename T>
T mmu_loglik(const Model<T>& model, const GridImage& grid, const std::vector<QAItem>& questions,
             std::span<const TokenId> answers, int answer_length, const Vocabulary& vocab,
             std::vector<T>* grad = nullptr, T scale = T(1));

struct GrpoLossParts {
  double loss = 0.0;
  double weighted_t2i = 0.0;
  double weighted_mmu = 0.0;
  double kl = 0.0;
};

// L = -(1/|groups|) sum_groups sum_g w_g (l_T2I + l_MMU) + beta * KL, where KL
// is the mean over (candidate, selected step, masked cell) of the exact
// categorical KL between current and reference guided image distributions.
template <typename T>
GrpoLossParts grpo_loss(const Model<T>& model, const Model<T>& reference, const std::vector<RolloutGroup>& groups,
                        const GrpoConfig& config, const Vocabulary& vocab, std::vector<T>* grad = nullptr);

struct GrpoDiagnostics {
  double loss = 0.0;
  double mean_reward = 0.0;
  double weight_entropy = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
};

GrpoDiagnostics grpo_step(Model<float>& model, const Model<float>& reference, const std::vector<RolloutGroup>& groups,
                          AdamState& state, const GrpoConfig& config, const Vocabulary& vocab);

struct GrpoRunConfig {
  int iterations = 50;
  int prompts_per_iteration = 2;
  std::uint64_t seed = 0;
};

using GrpoCallback = std::function<void(int iteration, const GrpoDiagnostics&)>;

// Self-GRPO loop: each iteration draws prompts, rolls out groups with the
// current parameters, scores them, and takes one step against a reference
// snapshot taken at the start.
std::vector<GrpoDiagnostics> run_grpo(Model<float>& model, const std::vector<Sample>& prompts,
                                      const GrpoConfig& config, const GrpoRunConfig& run, const Corpus& corpus,
                                      const GrpoCallback& on_iteration = {});

// Exact two-sided Wilcoxon signed-rank p-value for paired differences
// (zeros dropped, average ranks for ties, full sign enumeration).
double wilcoxon_signed_rank(std::span<const double> differences);

}  // namespace unidiff
