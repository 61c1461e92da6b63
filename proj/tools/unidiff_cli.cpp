// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point: gen-data, train, sample, inpaint, extrapolate,
// answer, bench-cache, grpo, serve, eval.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "unidiff/corpus.hpp"
#include "unidiff/error.hpp"
#include "unidiff/eval.hpp"
#include "unidiff/fidelity.hpp"
#include "unidiff/grpo.hpp"
#include "unidiff/io.hpp"
#include "unidiff/layout.hpp"
#include "unidiff/sampler.hpp"
#include "unidiff/service.hpp"
#include "unidiff/textgen.hpp"
#include "unidiff/train.hpp"

using namespace unidiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Global {
  std::uint64_t seed = 0;
  int verbosity = 1;
};

void log(const Global& g, const std::string& line) {
  if (g.verbosity > 0) std::cerr << line << "\n";
}

// Flag checks that run before any work; failures are usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

struct SamplerFlags {
  int steps = 64;
  double cfg = 2.0;
  double temperature = 0.0;
  std::vector<int> size{8, 8};
  double cache_ratio = 0.0;
  double warmup = 0.0;
  int refresh = 1;

  void add(CLI::App* app, bool with_size) {
    app->add_option("--steps", steps, "sampling steps T")->capture_default_str();
    app->add_option("--cfg", cfg, "classifier-free guidance scale")->capture_default_str();
    app->add_option("--temperature", temperature, "0 for argmax")->capture_default_str();
    if (with_size) app->add_option("--size", size, "height width")->expected(2)->capture_default_str();
    app->add_option("--cache-ratio", cache_ratio, "max-logit cache ratio in [0,1)")->capture_default_str();
    app->add_option("--warmup", warmup, "cache warmup ratio in [0,1]")->capture_default_str();
    app->add_option("--refresh", refresh, "cache refresh interval")->capture_default_str();
  }

  SamplerConfig build(std::uint64_t seed) const {
    SamplerConfig c;
    c.steps = steps;
    c.cfg_scale = cfg;
    c.temperature = temperature;
    c.seed = seed;
    c.height = size[0];
    c.width = size[1];
    c.cache = {cache_ratio, warmup, refresh};
    try {
      c.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

std::vector<TokenId> encode_or_usage(const Corpus& corpus, const std::string& text) {
  try {
    return corpus.lexicon().encode(text);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::vector<Sample> prompts_from_file(const std::string& path, const Corpus& corpus, std::uint64_t seed) {
  std::istringstream in(read_file(path));
  std::vector<Sample> out;
  std::string line;
  SeedSplitter split(seed);
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    out.push_back(corpus.sample_from_caption(corpus.lexicon().encode(line), split.seed("prompt", out.size())));
  }
  require(!out.empty(), ErrorKind::kParameter, path + " holds no prompts");
  return out;
}

nlohmann::ordered_json fidelity_json(const FidelityReport& r) {
  nlohmann::ordered_json j;
  j["savings_fraction"] = r.savings_fraction;
  j["final_agreement"] = r.final_agreement;
  auto sim = nlohmann::json::array();
  for (double v : r.per_step_similarity) sim.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  j["per_step_similarity"] = sim;
  auto sc = nlohmann::json::array();
  for (auto [x, y] : r.scatter) sc.push_back({x, y});
  j["scatter"] = sc;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unidiff: desk-scale unified discrete diffusion"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "root seed for every random stream")->capture_default_str();
  app.add_option("--verbosity", g.verbosity, "0 silences progress output")->capture_default_str();
  const Vocabulary vocab;
  std::function<void()> run;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic caption/grid dataset");
  long gen_count = 1000;
  std::string gen_out;
  std::vector<int> gen_size{8, 8};
  int gen_max_objects = 3;
  gen->add_option("--count", gen_count, "number of samples")->capture_default_str();
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--grid-size", gen_size, "height width")->expected(2)->capture_default_str();
  gen->add_option("--max-objects", gen_max_objects, "objects per scene, 1..3")->capture_default_str();
  gen->callback([&] {
    check(gen_count >= 1, "--count must be positive");
    check(gen_max_objects >= 1 && gen_max_objects <= 3, "--max-objects must be 1..3");
    run = [&] {
      GrammarConfig gc{gen_size[0], gen_size[1], 1, gen_max_objects};
      Corpus corpus(vocab, gc);
      const auto samples = corpus.generate(g.seed, static_cast<std::size_t>(gen_count));
      write_dataset(gen_out, corpus, samples);
      log(g, "wrote " + std::to_string(samples.size()) + " samples to " + gen_out);
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "train the mask predictor on a dataset");
  std::string tr_data, tr_ckpt, tr_heldout, tr_log;
  TrainConfig tc;
  ModelConfig mc = default_model_config(vocab);
  mc.d_ff = 0;
  tc.adam.lr = 2e-4;
  tr->add_option("--data", tr_data, "dataset path")->required();
  tr->add_option("--ckpt", tr_ckpt, "checkpoint to write")->required();
  tr->add_option("--steps", tc.steps, "optimizer steps")->capture_default_str();
  tr->add_option("--lr", tc.adam.lr, "learning rate")->capture_default_str();
  tr->add_option("--warmup-steps", tc.warmup_steps, "linear learning-rate warmup steps")->capture_default_str();
  tr->add_option("--min-lr-ratio", tc.min_lr_ratio, "final learning rate as a fraction of --lr (cosine decay)")
      ->capture_default_str();
  tr->add_option("--batch", tc.batch, "examples per step")->capture_default_str();
  tr->add_option("--weight-decay", tc.adam.weight_decay, "decoupled weight decay")->capture_default_str();
  tr->add_option("--d-model", mc.d_model, "model width")->capture_default_str();
  tr->add_option("--layers", mc.n_layers, "transformer layers")->capture_default_str();
  tr->add_option("--heads", mc.n_heads, "attention heads")->capture_default_str();
  tr->add_option("--d-ff", mc.d_ff, "feed-forward width (0 = 4 x d-model)")->capture_default_str();
  tr->add_option("--max-len", mc.max_len, "maximum sequence length")->capture_default_str();
  tr->add_option("--heldout", tr_heldout, "held-out dataset for accuracy");
  tr->add_option("--eval-every", tc.eval_every, "steps between held-out evaluations")->capture_default_str();
  tr->add_option("--log", tr_log, "JSON-lines training log");
  tr->callback([&] {
    check(tc.steps >= 1, "--steps must be positive");
    check(tc.batch >= 1, "--batch must be positive");
    check(tc.adam.lr > 0, "--lr must be positive");
    check(tc.warmup_steps >= 0 && tc.min_lr_ratio > 0 && tc.min_lr_ratio <= 1,
          "--warmup-steps must be non-negative and --min-lr-ratio in (0, 1]");
    if (mc.d_ff == 0) mc.d_ff = 4 * mc.d_model;
    try {
      mc.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    run = [&] {
      Corpus corpus(vocab, {});
      const auto data = read_dataset(tr_data, corpus);
      std::vector<Sample> held;
      if (!tr_heldout.empty()) held = read_dataset(tr_heldout, corpus);
      tc.seed = SeedSplitter(g.seed).seed("train");
      Model<float> model(mc, SeedSplitter(g.seed).seed("init"));
      std::string log_lines;
      train(model, data, held, corpus, tc, [&](const TrainRecord& r) {
        nlohmann::ordered_json j{{"step", r.step}, {"loss", r.loss}, {"accuracy", r.accuracy},
                                 {"seconds", r.seconds}};
        log_lines += j.dump() + "\n";
        log(g, j.dump());
      });
      if (!tr_log.empty()) write_file(tr_log, log_lines);
      save_checkpoint(tr_ckpt, model, vocab);
      log(g, "saved " + tr_ckpt);
    };
  });

  // sample
  auto* sa = app.add_subcommand("sample", "generate a grid from a text prompt");
  std::string sa_ckpt, sa_prompt, sa_out;
  SamplerFlags sa_flags;
  sa->add_option("--ckpt", sa_ckpt, "checkpoint")->required();
  sa->add_option("--prompt", sa_prompt, "caption text")->required();
  sa->add_option("--out", sa_out, "grid JSON output")->required();
  sa_flags.add(sa, true);
  sa->callback([&] {
    const SamplerConfig sc = sa_flags.build(g.seed);
    run = [&, sc] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(sa_ckpt, vocab);
      const Trajectory t = generate_image(model, encode_or_usage(corpus, sa_prompt), sc, vocab);
      save_grid(sa_out, t.grid, vocab);
      log(g, "wrote " + sa_out);
    };
  });

  // inpaint
  auto* in = app.add_subcommand("inpaint", "regenerate a region of an existing grid");
  std::string in_ckpt, in_grid, in_region, in_prompt, in_out;
  SamplerFlags in_flags;
  in->add_option("--ckpt", in_ckpt, "checkpoint")->required();
  in->add_option("--in", in_grid, "input grid JSON")->required();
  in->add_option("--region", in_region, "r0,c0,r1,c1[;...] inclusive")->required();
  in->add_option("--prompt", in_prompt, "caption text")->capture_default_str();
  in->add_option("--out", in_out, "grid JSON output")->required();
  in_flags.add(in, false);
  in->callback([&] {
    std::vector<Rect> rects;
    try {
      rects = parse_rects(in_region);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    check(!rects.empty(), "--region is empty");
    const SamplerConfig sc = in_flags.build(g.seed);
    run = [&, sc, rects] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(in_ckpt, vocab);
      const GridImage grid = load_grid(in_grid, vocab);
      const auto cells = region_cells(rects, grid.height, grid.width);
      const Trajectory t = inpaint(model, grid, cells, encode_or_usage(corpus, in_prompt), sc, vocab);
      save_grid(in_out, t.grid, vocab);
      log(g, "wrote " + in_out);
    };
  });

  // extrapolate
  auto* ex = app.add_subcommand("extrapolate", "extend a grid by new rows or columns");
  std::string ex_ckpt, ex_grid, ex_dir = "right", ex_prompt, ex_out;
  int ex_extent = 1;
  SamplerFlags ex_flags;
  ex->add_option("--ckpt", ex_ckpt, "checkpoint")->required();
  ex->add_option("--in", ex_grid, "input grid JSON")->required();
  ex->add_option("--direction", ex_dir, "left, right, up or down")->capture_default_str();
  ex->add_option("--extent", ex_extent, "rows or columns to add")->capture_default_str();
  ex->add_option("--prompt", ex_prompt, "caption text")->capture_default_str();
  ex->add_option("--out", ex_out, "grid JSON output")->required();
  ex_flags.add(ex, false);
  ex->callback([&] {
    check(ex_extent >= 0, "--extent must be non-negative");
    Direction dir{};
    try {
      dir = parse_direction(ex_dir);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    const SamplerConfig sc = ex_flags.build(g.seed);
    run = [&, sc, dir] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(ex_ckpt, vocab);
      const GridImage grid = load_grid(ex_grid, vocab);
      const Trajectory t = extrapolate(model, grid, dir, ex_extent, encode_or_usage(corpus, ex_prompt), sc, vocab);
      save_grid(ex_out, t.grid, vocab);
      log(g, "wrote " + ex_out);
    };
  });

  // answer
  auto* an = app.add_subcommand("answer", "answer a question about a grid");
  std::string an_ckpt, an_grid, an_question;
  BlockConfig bc;
  bc.block_length = 4;
  bc.steps_per_block = 2;
  bc.max_total_length = 8;
  an->add_option("--ckpt", an_ckpt, "checkpoint")->required();
  an->add_option("--grid", an_grid, "grid JSON")->required();
  an->add_option("--question", an_question, "question words, e.g. 'what color top-left ? red blue green gray'")
      ->required();
  an->add_option("--block-len", bc.block_length, "tokens per block")->capture_default_str();
  an->add_option("--steps", bc.steps_per_block, "steps per block")->capture_default_str();
  an->add_option("--total-len", bc.max_total_length, "answer slots, a multiple of --block-len")
      ->capture_default_str();
  an->add_flag("!--no-early-stop", bc.early_stop, "decode every block");
  an->callback([&] {
    try {
      bc.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    run = [&] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(an_ckpt, vocab);
      const GridImage grid = load_grid(an_grid, vocab);
      TokenSequence q;
      push_special(q, vocab, Special::kUserBegin);
      for (TokenId id : encode_or_usage(corpus, an_question)) push_token(q, vocab, id);
      push_special(q, vocab, Special::kUserEnd);
      const TokenSequence prompt = mmu_prompt(grid, q, vocab);
      const TextResult r = generate_text(model, prompt.ids, bc, vocab);
      std::string words;
      for (TokenId id : r.tokens) {
        if (vocab.classify(id) != TokenClass::kText || static_cast<std::size_t>(id) >= corpus.lexicon().size()) {
          continue;
        }
        words += (words.empty() ? "" : " ") + corpus.lexicon().word(id);
      }
      nlohmann::ordered_json j{{"answer", words},
                               {"blocks_decoded", r.blocks_decoded},
                               {"forward_passes", r.forward_passes},
                               {"stopped_early", r.stopped_early}};
      std::cout << j.dump() << "\n";
    };
  });

  // bench-cache
  auto* bcache = app.add_subcommand("bench-cache", "measure max-logit cache savings and fidelity");
  std::string bc_ckpt, bc_report, bc_data;
  SamplerFlags bc_flags;
  int bc_seeds = 4;
  bcache->add_option("--ckpt", bc_ckpt, "checkpoint")->required();
  bcache->add_option("--report", bc_report, "JSON report path")->required();
  bcache->add_option("--seeds", bc_seeds, "prompts/seeds to sweep")->capture_default_str();
  bcache->add_option("--data", bc_data, "dataset to take prompts from (default: generated)");
  bc_flags.add(bcache, true);
  bcache->callback([&] {
    check(bc_seeds >= 1, "--seeds must be positive");
    const SamplerConfig sc = bc_flags.build(g.seed);
    run = [&, sc] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(bc_ckpt, vocab);
      const auto prompts = bc_data.empty() ? corpus.generate(SeedSplitter(g.seed).seed("bench-prompts"),
                                                             static_cast<std::size_t>(bc_seeds))
                                           : read_dataset(bc_data, corpus);
      check(static_cast<int>(prompts.size()) >= bc_seeds, "--data holds fewer prompts than --seeds");
      FidelityReport total;
      nlohmann::ordered_json runs = nlohmann::json::array();
      double agree = 0, wall_base = 0, wall_cached = 0;
      std::vector<double> sim_sum(static_cast<std::size_t>(sc.steps), 0.0);
      std::vector<int> sim_n(static_cast<std::size_t>(sc.steps), 0);
      for (int i = 0; i < bc_seeds; ++i) {
        SamplerConfig base = sc;
        base.cache = {};
        base.record_logits = true;
        base.seed = SeedSplitter(g.seed).seed("bench", static_cast<std::uint64_t>(i));
        SamplerConfig cached = sc;
        cached.seed = base.seed;
        const auto& cap = prompts[static_cast<std::size_t>(i)].caption;
        auto t0 = std::chrono::steady_clock::now();
        const Trajectory tb = generate_image(model, cap, base, vocab);
        auto t1 = std::chrono::steady_clock::now();
        const Trajectory tc2 = generate_image(model, cap, cached, vocab);
        auto t2 = std::chrono::steady_clock::now();
        wall_base += std::chrono::duration<double>(t1 - t0).count();
        wall_cached += std::chrono::duration<double>(t2 - t1).count();
        const FidelityReport r = fidelity_report(tb, tc2);
        total.masked_total += r.masked_total;
        total.reused_total += r.reused_total;
        total.computed_masked += r.computed_masked;
        agree += r.final_agreement;
        total.scatter.insert(total.scatter.end(), r.scatter.begin(), r.scatter.end());
        for (std::size_t s = 0; s < r.per_step_similarity.size(); ++s) {
          if (!std::isnan(r.per_step_similarity[s])) sim_sum[s] += r.per_step_similarity[s], ++sim_n[s];
        }
      }
      total.final_agreement = agree / bc_seeds;
      total.savings_fraction = total.masked_total ? static_cast<double>(total.reused_total) /
                                                        static_cast<double>(total.masked_total)
                                                  : 0.0;
      total.accounting_holds = total.computed_masked == total.masked_total - total.reused_total;
      for (std::size_t s = 0; s < sim_sum.size(); ++s) {
        total.per_step_similarity.push_back(sim_n[s] ? sim_sum[s] / sim_n[s]
                                                     : std::numeric_limits<double>::quiet_NaN());
      }
      std::vector<double> xs, ys;
      for (auto [x, y] : total.scatter) xs.push_back(x), ys.push_back(y);
      total.spearman = spearman(xs, ys);
      auto j = fidelity_json(total);
      j["spearman"] = total.spearman;
      j["masked_token_forwards"] = total.masked_total;
      j["reused_token_forwards"] = total.reused_total;
      j["computed_token_forwards"] = total.computed_masked;
      j["accounting_holds"] = total.accounting_holds;
      j["wall_seconds_baseline"] = wall_base;
      j["wall_seconds_cached"] = wall_cached;
      j["config"] = {{"steps", sc.steps},          {"cfg", sc.cfg_scale},
                     {"cache_ratio", sc.cache.cache_ratio}, {"warmup_ratio", sc.cache.warmup_ratio},
                     {"refresh_interval", sc.cache.refresh_interval}, {"seeds", bc_seeds}};
      write_file(bc_report, j.dump(2) + "\n");
      log(g, "savings " + std::to_string(total.savings_fraction) + ", agreement " +
                 std::to_string(total.final_agreement) + ", spearman " + std::to_string(total.spearman));
    };
  });

  // grpo
  auto* gr = app.add_subcommand("grpo", "Self-GRPO fine-tuning with oracle or model rewards");
  std::string gr_ckpt, gr_prompts, gr_out, gr_reward = "oracle", gr_log;
  GrpoConfig gc;
  GrpoRunConfig grc;
  gr->add_option("--ckpt", gr_ckpt, "starting checkpoint")->required();
  gr->add_option("--prompts", gr_prompts, "one caption per line")->required();
  gr->add_option("--out", gr_out, "checkpoint to write")->required();
  gr->add_option("--group", gc.group, "candidates per prompt G")->capture_default_str();
  gr->add_option("--alpha", gc.alpha, "reward softmax temperature")->capture_default_str();
  gr->add_option("--beta", gc.beta, "KL weight")->capture_default_str();
  gr->add_option("--iters", grc.iterations, "GRPO iterations")->capture_default_str();
  gr->add_option("--prompts-per-iter", grc.prompts_per_iteration, "groups per step")->capture_default_str();
  gr->add_option("--lr", gc.adam.lr, "learning rate")->capture_default_str();
  gr->add_option("--steps", gc.sampler.steps, "rollout sampling steps")->capture_default_str();
  gr->add_option("--cfg", gc.sampler.cfg_scale, "rollout guidance scale")->capture_default_str();
  gr->add_option("--temperature", gc.sampler.temperature, "rollout temperature")->capture_default_str();
  gr->add_option("--selected", gc.selected, "selected timesteps (default: earliest quarter)");
  gr->add_option("--reward", gr_reward, "oracle or model")->capture_default_str();
  gr->add_flag("!--no-mmu", gc.use_mmu, "drop the understanding term");
  gr->add_option("--log", gr_log, "JSON-lines diagnostics");
  gr->callback([&] {
    try {
      gc.reward = parse_reward_mode(gr_reward);
      gc.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    check(grc.iterations >= 0 && grc.prompts_per_iteration >= 1, "--iters >= 0, --prompts-per-iter >= 1");
    run = [&] {
      Corpus corpus(vocab, {});
      auto model = load_checkpoint(gr_ckpt, vocab);
      const auto prompts = prompts_from_file(gr_prompts, corpus, SeedSplitter(g.seed).seed("questions"));
      grc.seed = SeedSplitter(g.seed).seed("grpo");
      std::string lines;
      run_grpo(model, prompts, gc, grc, corpus, [&](int it, const GrpoDiagnostics& d) {
        nlohmann::ordered_json j{{"iteration", it},        {"loss", d.loss}, {"mean_reward", d.mean_reward},
                                 {"weight_entropy", d.weight_entropy}, {"kl", d.kl},     {"grad_norm", d.grad_norm}};
        lines += j.dump() + "\n";
        log(g, j.dump());
      });
      if (!gr_log.empty()) write_file(gr_log, lines);
      save_checkpoint(gr_out, model, vocab);
      log(g, "saved " + gr_out);
    };
  });

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP API for generation and retouching sessions");
  std::string sv_ckpt, sv_cors, sv_host = "127.0.0.1", sv_snapshot;
  int sv_port = 8080;
  SamplerFlags sv_flags;
  sv_flags.steps = 16;
  sv->add_option("--ckpt", sv_ckpt, "checkpoint (omit to serve without a model)");
  sv->add_option("--port", sv_port, "TCP port")->capture_default_str();
  sv->add_option("--host", sv_host, "bind address")->capture_default_str();
  sv->add_option("--cors-origin", sv_cors, "Access-Control-Allow-Origin value");
  sv->add_option("--snapshot", sv_snapshot, "write sessions here on shutdown");
  sv_flags.add(sv, true);
  sv->callback([&] {
    check(sv_port >= 0 && sv_port <= 65535, "--port must be 0..65535");
    const SamplerConfig sc = sv_flags.build(g.seed);
    run = [&, sc] {
      Corpus corpus(vocab, {});
      std::shared_ptr<const Model<float>> model;
      if (!sv_ckpt.empty()) model = std::make_shared<Model<float>>(load_checkpoint(sv_ckpt, vocab));
      Service service(model, corpus, sc);
      HttpServer server(service, sv_cors);
      const int port = server.bind(sv_host, sv_port);
      log(g, "listening on " + sv_host + ":" + std::to_string(port));
      static HttpServer* active = nullptr;
      active = &server;
      std::signal(SIGINT, [](int) { if (active) active->stop(); });
      std::signal(SIGTERM, [](int) { if (active) active->stop(); });
      server.listen();
      active = nullptr;
      if (!sv_snapshot.empty()) service.snapshot(sv_snapshot);
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "prompt following, inpainting, accuracy and cache report");
  std::string ev_ckpt, ev_data, ev_report;
  int ev_prompts = 200;
  SamplerFlags ev_flags;
  ev_flags.steps = 16;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset")->required();
  ev->add_option("--report", ev_report, "JSON report path")->required();
  ev->add_option("--prompts", ev_prompts, "prompts to evaluate")->capture_default_str();
  ev_flags.add(ev, false);
  ev->callback([&] {
    check(ev_prompts >= 1, "--prompts must be positive");
    const SamplerConfig sc = ev_flags.build(g.seed);
    run = [&, sc] {
      Corpus corpus(vocab, {});
      const auto model = load_checkpoint(ev_ckpt, vocab);
      auto data = read_dataset(ev_data, corpus);
      if (static_cast<int>(data.size()) > ev_prompts) data.resize(static_cast<std::size_t>(ev_prompts));
      const PromptEval pe = prompt_following(model, data, sc, vocab);
      const double acc = heldout_masked_accuracy(model, data, vocab, SeedSplitter(g.seed).seed("accuracy"));
      // Inpainting preservation: regenerate one random quadrant per prompt.
      long preserved = 0, trials = 0;
      SeedSplitter split(g.seed);
      for (std::size_t i = 0; i < data.size(); ++i) {
        Rng rng = split.rng("inpaint", i);
        const GridImage& grid = data[i].grid;
        std::uniform_int_distribution<int> rr(0, grid.height - 1), cc(0, grid.width - 1);
        int r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
        const auto cells = region_cells({{std::min(r0, r1), std::min(c0, c1), std::max(r0, r1), std::max(c0, c1)}},
                                        grid.height, grid.width);
        SamplerConfig ic = sc;
        ic.seed = split.seed("inpaint-seed", i);
        const Trajectory t = inpaint(model, grid, cells, data[i].caption, ic, vocab);
        std::vector<std::uint8_t> in_region(grid.size(), 0);
        for (int c : cells) in_region[static_cast<std::size_t>(c)] = 1;
        bool ok = true;
        for (std::size_t c = 0; c < grid.size(); ++c) ok &= in_region[c] || t.grid.cells[c] == grid.cells[c];
        preserved += ok;
        ++trials;
      }
      SamplerConfig base = sc;
      base.record_logits = true;
      base.cache = {};
      SamplerConfig cached = sc;
      if (!cached.cache.enabled()) cached.cache = {0.5, 0.25, 4};
      const std::size_t nb = std::min<std::size_t>(data.size(), 8);
      long masked = 0, reused = 0;
      double agree = 0;
      for (std::size_t i = 0; i < nb; ++i) {
        base.seed = cached.seed = split.seed("cache", i);
        const FidelityReport r =
            fidelity_report(generate_image(model, data[i].caption, base, vocab),
                            generate_image(model, data[i].caption, cached, vocab));
        masked += r.masked_total;
        reused += r.reused_total;
        agree += r.final_agreement;
      }
      nlohmann::ordered_json j;
      j["prompts"] = data.size();
      j["prompt_pass_rate"] = pe.pass_rate;
      j["mean_question_accuracy"] = pe.mean_reward;
      j["masked_token_accuracy"] = acc;
      j["inpaint_preservation_rate"] = static_cast<double>(preserved) / static_cast<double>(trials);
      j["cache_savings_fraction"] = masked ? static_cast<double>(reused) / static_cast<double>(masked) : 0.0;
      j["cache_final_agreement"] = nb ? agree / static_cast<double>(nb) : 1.0;
      j["sampler"] = {{"steps", sc.steps}, {"cfg", sc.cfg_scale}, {"temperature", sc.temperature}};
      write_file(ev_report, j.dump(2) + "\n");
      std::printf("%-28s %8.4f\n", "prompt pass rate", pe.pass_rate);
      std::printf("%-28s %8.4f\n", "question accuracy", pe.mean_reward);
      std::printf("%-28s %8.4f\n", "masked-token accuracy", acc);
      std::printf("%-28s %8.4f\n", "inpaint preservation", j["inpaint_preservation_rate"].get<double>());
      std::printf("%-28s %8.4f\n", "cache savings", j["cache_savings_fraction"].get<double>());
      std::printf("%-28s %8.4f\n", "cache agreement", j["cache_final_agreement"].get<double>());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    if (run) run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
