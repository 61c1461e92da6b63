// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include <rapidjson/document.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "support.hpp"
#include "unidiff/io.hpp"

using namespace unidiff;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Scratch directory with a tiny checkpoint, removed on exit.
struct Workspace {
  fs::path dir;
  Corpus corpus{Vocabulary(), {}};

  Workspace() {
    dir = fs::temp_directory_path() / ("unidiff_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(dir);
    save_checkpoint(path("m.ckpt"), test::sharpened(test::tiny_model(corpus.vocab(), 5), 3.0f), corpus.vocab());
  }
  ~Workspace() { fs::remove_all(dir); }

  static int& counter() {
    static int n = 0;
    return n;
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  // Runs the CLI with `args`; returns the exit status. Output goes to out.txt.
  int run(const std::string& args) const {
    const std::string cmd = std::string(UNIDIFF_CLI_PATH) + " --verbosity 0 " + args + " > " + path("out.txt") +
                            " 2> " + path("err.txt");
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }
  std::string out() const { return read_file(path("out.txt")); }
  std::string prompt(std::uint64_t seed) const {
    return "\"" + corpus.lexicon().decode(corpus.generate_sample(seed).caption) + "\"";
  }
};

std::string validation_errors(const std::string& schema_path, const std::string& document) {
  rapidjson::Document sd;
  sd.Parse(read_file(schema_path).c_str());
  REQUIRE_FALSE(sd.HasParseError());
  rapidjson::SchemaDocument schema(sd);
  rapidjson::Document d;
  d.Parse(document.c_str());
  if (d.HasParseError()) return "report is not JSON";
  rapidjson::SchemaValidator validator(schema);
  if (d.Accept(validator)) return "";
  rapidjson::StringBuffer sb;
  validator.GetInvalidSchemaPointer().StringifyUriFragment(sb);
  return std::string("violates ") + sb.GetString() + " (" + validator.GetInvalidSchemaKeyword() + ")";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  Workspace w;
  CHECK(w.run("") == 2);
  CHECK(w.run("--help") == 0);
  CHECK(w.run("frobnicate") == 2);
  CHECK(w.run("sample --prompt x") == 2);  // missing required flags
  CHECK(w.run("sample --ckpt " + w.path("m.ckpt") + " --prompt " + w.prompt(1) + " --out " + w.path("g.json") +
              " --steps 0") == 2);
  CHECK(w.run("sample --ckpt " + w.path("m.ckpt") + " --prompt " + w.prompt(1) + " --out " + w.path("g.json") +
              " --cache-ratio 1.5") == 2);
  CHECK(w.run("sample --ckpt " + w.path("m.ckpt") + " --prompt \"purple elephant\" --out " + w.path("g.json")) == 2);
  CHECK(w.run("train --data x --ckpt y --steps 0") == 2);
  CHECK(w.run("gen-data --out " + w.path("d.txt") + " --max-objects 4") == 2);
  CHECK(w.run("inpaint --ckpt a --in b --out c --region 1,2,3") == 2);
  CHECK(w.run("extrapolate --ckpt a --in b --out c --direction sideways") == 2);
  CHECK(w.run("answer --ckpt a --grid b --question q --block-len 3 --total-len 8") == 2);
  CHECK(w.run("grpo --ckpt a --prompts b --out c --group 1") == 2);
  // runtime failures
  CHECK(w.run("sample --ckpt " + w.path("missing.ckpt") + " --prompt " + w.prompt(1) + " --out " + w.path("g.json")) ==
        3);
  CHECK(w.run("sample --ckpt " + w.path("m.ckpt") + " --prompt " + w.prompt(1) + " --out " + w.path("g.json") +
              " --size 16 16") == 3);
  CHECK(read_file(w.path("err.txt")).find("capacity") != std::string::npos);
}

TEST_CASE("gen-data, train and eval") {
  Workspace w;
  REQUIRE(w.run("--seed 3 gen-data --count 40 --out " + w.path("a.txt")) == 0);
  REQUIRE(w.run("--seed 3 gen-data --count 40 --out " + w.path("b.txt")) == 0);
  REQUIRE(w.run("--seed 4 gen-data --count 40 --out " + w.path("c.txt")) == 0);
  CHECK(read_file(w.path("a.txt")) == read_file(w.path("b.txt")));
  CHECK(read_file(w.path("a.txt")) != read_file(w.path("c.txt")));
  CHECK(read_dataset(w.path("a.txt"), w.corpus).size() == 40);

  const std::string train = "train --data " + w.path("a.txt") + " --heldout " + w.path("c.txt") +
                            " --steps 4 --batch 2 --d-model 16 --layers 1 --heads 2 --max-len 128 --eval-every 2";
  REQUIRE(w.run("--seed 1 " + train + " --ckpt " + w.path("t1.ckpt") + " --log " + w.path("log.jsonl")) == 0);
  REQUIRE(w.run("--seed 1 " + train + " --ckpt " + w.path("t2.ckpt")) == 0);
  CHECK(read_file(w.path("t1.ckpt")) == read_file(w.path("t2.ckpt")));
  const Model<float> m = load_checkpoint(w.path("t1.ckpt"), w.corpus.vocab());
  CHECK(m.config().d_model == 16);
  CHECK(m.config().d_ff == 64);
  CHECK_FALSE(read_file(w.path("log.jsonl")).empty());

  const std::string eval = "eval --ckpt " + w.path("m.ckpt") + " --data " + w.path("a.txt") + " --prompts 6 --steps 4";
  REQUIRE(w.run(eval + " --report " + w.path("r1.json")) == 0);
  REQUIRE(w.run(eval + " --report " + w.path("r2.json")) == 0);
  const std::string r1 = read_file(w.path("r1.json"));
  CHECK(r1 == read_file(w.path("r2.json")));
  const json j = json::parse(r1);
  CHECK(j["prompts"] == 6);
  CHECK(j["inpaint_preservation_rate"] == 1.0);
  for (const char* key : {"prompt_pass_rate", "mean_question_accuracy", "masked_token_accuracy",
                          "cache_savings_fraction", "cache_final_agreement"}) {
    CHECK(j[key].get<double>() >= 0.0);
    CHECK(j[key].get<double>() <= 1.0);
  }
  CHECK(w.run("eval --ckpt " + w.path("m.ckpt") + " --data " + w.path("none.txt") + " --report " + w.path("r.json")) ==
        3);
  CHECK(read_file(w.path("err.txt")).find("none.txt") != std::string::npos);
}

TEST_CASE("sample, inpaint, extrapolate and answer") {
  Workspace w;
  const std::string ck = " --ckpt " + w.path("m.ckpt");
  REQUIRE(w.run("--seed 9 sample" + ck + " --prompt " + w.prompt(2) + " --steps 8 --out " + w.path("s1.json")) == 0);
  REQUIRE(w.run("--seed 9 sample" + ck + " --prompt " + w.prompt(2) + " --steps 8 --out " + w.path("s2.json")) == 0);
  CHECK(read_file(w.path("s1.json")) == read_file(w.path("s2.json")));
  const GridImage g = load_grid(w.path("s1.json"), w.corpus.vocab());
  CHECK(g.height == 8);

  REQUIRE(w.run("inpaint" + ck + " --in " + w.path("s1.json") + " --region \"0,0,1,7;6,6,7,7\" --steps 4 --out " +
                w.path("i.json")) == 0);
  const GridImage in = load_grid(w.path("i.json"), w.corpus.vocab());
  const auto region = region_cells(parse_rects("0,0,1,7;6,6,7,7"), 8, 8);
  for (int i = 0; i < 64; ++i) {
    if (!std::binary_search(region.begin(), region.end(), i))
      CHECK(in.cells[static_cast<std::size_t>(i)] == g.cells[static_cast<std::size_t>(i)]);
  }
  CHECK(w.run("inpaint" + ck + " --in " + w.path("s1.json") + " --region 0,0,9,9 --out " + w.path("i.json")) == 3);

  REQUIRE(w.run("extrapolate" + ck + " --in " + w.path("s1.json") + " --direction down --extent 2 --steps 4 --out " +
                w.path("e.json")) == 0);
  const GridImage e = load_grid(w.path("e.json"), w.corpus.vocab());
  CHECK(e.height == 10);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(e.at(r, c) == g.at(r, c));

  const QAItem q = w.corpus.generate_sample(2).qa.front();
  const std::string question = "\"" + w.corpus.lexicon().decode(std::vector<TokenId>(q.question.ids.begin() + 1,
                                                                                      q.question.ids.end() - 1)) +
                               "\"";
  REQUIRE(w.run("answer" + ck + " --grid " + w.path("s1.json") + " --question " + question) == 0);
  const json a = json::parse(w.out());
  CHECK(a.contains("answer"));
  CHECK(a["forward_passes"].get<int>() == a["blocks_decoded"].get<int>() * 2);
}

TEST_CASE("bench-cache report") {
  Workspace w;
  const std::string schema = std::string(UNIDIFF_SCHEMA_DIR) + "/bench_cache_report.schema.json";
  const std::string base = "bench-cache --ckpt " + w.path("m.ckpt") + " --seeds 3 --steps 16";

  REQUIRE(w.run(base + " --cache-ratio 0 --report " + w.path("zero.json")) == 0);
  const std::string zero = read_file(w.path("zero.json"));
  CHECK(validation_errors(schema, zero) == "");
  const json z = json::parse(zero);
  CHECK(z["savings_fraction"] == 0.0);
  CHECK(z["final_agreement"] == 1.0);

  REQUIRE(w.run(base + " --cache-ratio 0.5 --warmup 0.25 --refresh 4 --report " + w.path("half.json")) == 0);
  const std::string half = read_file(w.path("half.json"));
  CHECK(validation_errors(schema, half) == "");
  const json h = json::parse(half);
  CHECK(h["accounting_holds"] == true);
  const long masked = h["masked_token_forwards"], reused = h["reused_token_forwards"],
             computed = h["computed_token_forwards"];
  CHECK(computed == masked - reused);
  CHECK(h["savings_fraction"].get<double>() == doctest::Approx(static_cast<double>(reused) / masked));
  CHECK(reused > 0);
  CHECK(h["per_step_similarity"].size() == 16);

  // the schema rejects a report with a broken field
  json broken = h;
  broken["savings_fraction"] = 1.5;
  CHECK(validation_errors(schema, broken.dump()) != "");
  broken = h;
  broken.erase("scatter");
  CHECK(validation_errors(schema, broken.dump()) != "");
}

TEST_CASE("grpo subcommand") {
  Workspace w;
  std::string prompts = "# captions\n";
  for (std::uint64_t s = 0; s < 3; ++s) prompts += w.corpus.lexicon().decode(w.corpus.generate_sample(s).caption) + "\n";
  write_file(w.path("prompts.txt"), prompts);
  const std::string cmd = "--seed 2 grpo --ckpt " + w.path("m.ckpt") + " --prompts " + w.path("prompts.txt") +
                          " --iters 2 --group 2 --steps 4";
  REQUIRE(w.run(cmd + " --out " + w.path("g1.ckpt") + " --log " + w.path("g.jsonl")) == 0);
  REQUIRE(w.run(cmd + " --out " + w.path("g2.ckpt")) == 0);
  CHECK(read_file(w.path("g1.ckpt")) == read_file(w.path("g2.ckpt")));
  CHECK(read_file(w.path("g1.ckpt")) != read_file(w.path("m.ckpt")));
  std::istringstream log(read_file(w.path("g.jsonl")));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    CHECK(j["iteration"] == lines++);
    CHECK(j.contains("kl"));
  }
  CHECK(lines == 2);
  CHECK(w.run("grpo --ckpt " + w.path("m.ckpt") + " --prompts " + w.path("prompts.txt") + " --out x --reward human") ==
        2);
}

}  // TEST_SUITE
