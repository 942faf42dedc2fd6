// Copyright 2026 The lexpyr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "cli.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lexpyr/image.h"
#include "lexpyr/prompts.h"
#include "lexpyr/trainer.h"
#include "support/fixture_codebook.h"

namespace lexpyr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "lexpyr_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    TrainConfig c;
    c.batch_size = 4;
    c.total_steps = 20;
    c.warmup_steps = 2;
    c.cooldown_steps = 2;
    c.base_lr = 1e-3;
    c.log_every = 2;
    c.checkpoint_every = 10;
    c.net.input_height = 16;
    c.net.input_width = 16;
    c.net.base_filters = 8;
    c.net.channel_multipliers = {1, 2};
    c.net.residual_blocks_per_scale = 1;
    c.net.mid_blocks = 1;
    c.net.latent_dim = 8;
    c.net.norm_groups = 4;
    c.spec = PyramidSpec::square({0, 1, 3}, 8, {0.9, 0.8});
    c.dataset.kind = "synthetic";
    c.dataset.synthetic_count = 80;
    c.codebook.size = 60;
    c.semantic.dim = 16;
    c.output_dir = dir_ / "run";
    json j = c;
    std::ofstream(dir_ / "tiny.json") << j.dump(2);
    const auto r = run({"train", "--config", (dir_ / "tiny.json").string(), "--steps", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    ckpt_ = (dir_ / "run" / "model.ckpt").string();
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
  static std::string ckpt_;
};

fs::path CliTest::dir_;
std::string CliTest::ckpt_;

void expect_json_error(const Outcome& r, const std::string& kind) {
  const auto j = json::parse(r.err);
  EXPECT_EQ(j.at("error"), kind);
  EXPECT_FALSE(j.at("message").get<std::string>().empty());
}

TEST_F(CliTest, BadInvocationsExitTwo) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  expect_json_error(r, "usage");
  r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  r = run({"tokenize", "--ckpt", ckpt_, "--index", "0", "--out", path("t.json"), "--bogus"});
  EXPECT_EQ(r.code, 2);
  expect_json_error(r, "usage");
  r = run({"decode", "--ckpt", ckpt_, "--out", path("d"), "--llm", "gpt"});
  EXPECT_EQ(r.code, 2);
  r = run({"tokenize", "--ckpt", ckpt_, "--out", path("t.json")});
  EXPECT_EQ(r.code, 2);
  r = run({"tokenize", "--ckpt", ckpt_, "--index", "0", "--layers", "9", "--out", path("t.json")});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, HelpExitsZero) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("decode"), std::string::npos);
  r = run({"decode", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--llm"), std::string::npos);
}

TEST_F(CliTest, RuntimeFailureExitsOne) {
  std::ofstream(path("bad.json")) << R"({"pyramid": {"spec": 3}})";
  const auto r = run({"reconstruct", "--ckpt", ckpt_, "--tokens", path("bad.json"), "--out",
                      path("bad.pgm")});
  EXPECT_EQ(r.code, 1);
  expect_json_error(r, "runtime");
}

TEST_F(CliTest, TrainWritesSnapshot) {
  EXPECT_TRUE(fs::exists(dir_ / "run" / "config.resolved.json"));
  const auto snap = json::parse(testing::read_file((dir_ / "run" / "run.json").string()));
  EXPECT_EQ(snap.at("verb"), "train");
  EXPECT_EQ(snap.at("flags").at("steps"), "4");
}

TEST_F(CliTest, TokenizeReconstructCorrupt) {
  auto r = run({"tokenize", "--ckpt", ckpt_, "--index", "2", "--layers", "2", "--out",
                path("tok.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tok = json::parse(testing::read_file(path("tok.json")));
  const auto pyramid = tok.at("pyramid").get<TokenPyramid>();
  EXPECT_EQ(pyramid.flat().size(), 69u);
  EXPECT_EQ(tok.at("layers"), 2);
  EXPECT_EQ(tok.at("spae").get<std::string>() + "\n", r.out);
  EXPECT_TRUE(fs::exists(path("tok.json.run.json")));

  r = run({"reconstruct", "--ckpt", ckpt_, "--tokens", path("tok.json"), "--out",
           path("rec.pgm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto image = read_netpbm(path("rec.pgm"));
  EXPECT_EQ(image.height, 16);

  r = run({"--seed", "5", "corrupt", "--ckpt", ckpt_, "--tokens", path("tok.json"), "--rate",
           "0.5", "--out", path("noisy.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto noisy = json::parse(testing::read_file(path("noisy.json")));
  EXPECT_EQ(noisy.at("replaced"), 35);
}

TEST_F(CliTest, PromptMatchesLibrary) {
  const json spec = {{"kind", "classify"},
                     {"style", "thisis"},
                     {"what_is_this", true},
                     {"classes", {"cat", "dog"}},
                     {"examples", {{{"spae", "ab"}, {"label", "cat"}}}},
                     {"query", "cd"}};
  std::ofstream(path("prompt.json")) << spec.dump();
  const auto r = run({"prompt", "--input", path("prompt.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, build_classification_prompt(ClassifyStyle::kThisIs, {"cat", "dog"},
                                               {{"ab", "cat"}}, "cd", {.what_is_this = true}));
  std::ofstream(path("ar.json")) << R"({"kind": "ar", "stride": 4, "examples": [], "condition": "x", "prefix": []})";
  EXPECT_EQ(run({"prompt", "--input", path("ar.json")}).code, 2);
}

TEST_F(CliTest, DecodeOracleInpaintEndToEnd) {
  const auto r = run({"decode", "--plan", "default", "--llm", "oracle", "--task",
                      "inpaint_center", "--ckpt", ckpt_, "--context", "4", "--out",
                      path("dec")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto decoded = json::parse(testing::read_file(path("dec/decoded.json")));
  const auto pyramid = decoded.at("pyramid").get<TokenPyramid>();
  EXPECT_NO_THROW(pyramid.validate(60));
  EXPECT_EQ(decoded.at("token_accuracy"), 1.0);
  const auto image = read_netpbm(path("dec/decoded.pgm"));
  for (float p : image.pixels) {
    EXPECT_GE(p, 0.0f);
    EXPECT_LE(p, 1.0f);
  }
  std::ifstream trace(path("dec/trace.jsonl"));
  int records = 0;
  int accepted_tokens = 0;
  for (std::string line; std::getline(trace, line); ++records) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j.contains("prompt"));
    EXPECT_TRUE(j.contains("completions"));
    if (j.contains("accepted") && j.at("accepted").is_number_integer() &&
        j.at("accepted").get<int>() >= 0) {
      accepted_tokens += j.at("end").get<int>() - j.at("begin").get<int>();
    }
  }
  EXPECT_GT(records, 0);
  EXPECT_EQ(accepted_tokens, 69);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  for (const char* name : {"a", "b"}) {
    const auto r = run({"--seed", "3", "decode", "--ckpt", ckpt_, "--task", "outpaint_bottom",
                        "--context", "3", "--oracle-noise", "0.1", "--out", path(name)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* file : {"trace.jsonl", "decoded.json", "decoded.pgm"}) {
    EXPECT_EQ(testing::read_file(path(std::string("a/") + file)),
              testing::read_file(path(std::string("b/") + file)))
        << file;
  }
  for (const char* name : {"cb1", "cb2"}) {
    ASSERT_EQ(run({"--seed", "7", "codebook", "--size", "30", "--dim", "8", "--semantic-dim",
                   "8", "--out", path(name)})
                  .code,
              0);
  }
  for (const char* file : {"vocab.txt", "embeddings.f32", "text_features.f32", "meta.json"}) {
    EXPECT_EQ(testing::read_file(path(std::string("cb1/") + file)),
              testing::read_file(path(std::string("cb2/") + file)))
        << file;
  }
}

TEST_F(CliTest, ClassifyEvalViz) {
  auto r = run({"classify", "--ckpt", ckpt_, "--episodes", "10", "--style", "thisis",
                "--what-is-this", "--split", "train", "--out", path("cls")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(testing::read_file(path("cls/summary.json")));
  EXPECT_EQ(summary.at("valid").get<int>() + summary.at("invalid").get<int>(), 10);
  r = run({"eval", "--ckpt", ckpt_, "--out", path("eval.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(testing::read_file(path("eval.json")));
  EXPECT_EQ(report.at("depths").size(), 3u);
  r = run({"viz", "--ckpt", ckpt_, "--index", "0", "--out", path("p.svg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(testing::read_file(path("p.svg")).rfind("<svg", 0), 0u);
}

}  // namespace
}  // namespace lexpyr
