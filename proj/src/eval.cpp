// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/eval.hpp"

#include "unidiff/error.hpp"

namespace unidiff {

int oracle_reward(const GridImage& grid, const std::vector<QAItem>& questions, const Vocabulary& vocab) {
  int correct = 0;
  for (const QAItem& q : questions) correct += oracle_answer(grid, q, vocab) == q.correct_index;
  return correct;
}

PromptEval prompt_following(const Model<float>& model, const std::vector<Sample>& prompts, SamplerConfig config,
                            const Vocabulary& vocab) {
  require(!prompts.empty(), ErrorKind::kParameter, "no prompts to evaluate");
  PromptEval out;
  const std::uint64_t base = config.seed;
  long passed = 0, correct = 0, asked = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    config.seed = base + i;
    const Trajectory t = generate_image(model, prompts[i].caption, config, vocab);
    const int r = oracle_reward(t.grid, prompts[i].qa, vocab);
    const int n = static_cast<int>(prompts[i].qa.size());
    out.rewards.push_back(r);
    out.questions.push_back(n);
    passed += r == n;
    correct += r;
    asked += n;
  }
  out.pass_rate = static_cast<double>(passed) / static_cast<double>(prompts.size());
  out.mean_reward = asked ? static_cast<double>(correct) / static_cast<double>(asked) : 0.0;
  return out;
}

}  // namespace unidiff
