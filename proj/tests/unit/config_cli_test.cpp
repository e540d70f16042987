// Copyright (c) 2026 The disn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "disn/commands.hpp"
#include "disn/config.hpp"

namespace disn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, DefaultsResolve) {
  const auto rc = parse_run_config(merge_config(json()));
  EXPECT_EQ(rc.world.n_speakers, 50u);
  EXPECT_EQ(rc.world.sessions_per_speaker, 8u);
  EXPECT_EQ(rc.world.utterances_per_session, 4u);
  EXPECT_EQ(rc.world.embedding_dim, 64u);
  EXPECT_EQ(rc.code_dim, 32u);
  EXPECT_EQ(rc.train.weights, LossWeights{});
  EXPECT_EQ(rc.eval.dcf.p_target, 0.05);
  EXPECT_EQ(rc.world.seed, splitmix64(0 ^ fnv1a64("world")));
}

TEST(Config, OverridesAndTypeChecks) {
  json cfg = merge_config(json{{"train", {{"epochs", 7}}}});
  apply_override(cfg, "train.weights.adv=0.25");
  apply_override(cfg, "paths.dataset=/tmp/some dir");
  apply_override(cfg, "train.precision=\"float64\"");
  const auto rc = parse_run_config(cfg);
  EXPECT_EQ(rc.train.epochs, 7u);
  EXPECT_EQ(rc.train.weights.adv, 0.25);
  EXPECT_EQ(rc.paths.dataset, "/tmp/some dir");
  EXPECT_EQ(rc.train.precision, Precision::float64);

  EXPECT_THROW(merge_config(json{{"trian", {{"epochs", 1}}}}), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.epochs=2.5"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.epochs=-3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.epochs"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train=5"), ConfigError);
  apply_override(cfg, "train.precision=float16");
  EXPECT_THROW(parse_run_config(cfg), ConfigError);
}

TEST(Config, SeedFlowsIntoSubstreams) {
  const auto a = resolve_config("", {}, 5);
  const auto b = resolve_config("", {"seed=5"}, std::nullopt);
  EXPECT_EQ(a.seed, 5u);
  EXPECT_EQ(a.world.seed, b.world.seed);
  EXPECT_EQ(a.train.seed, 5u);
  EXPECT_NE(a.world.seed, resolve_config("", {}, 6).world.seed);
}

TEST(Config, ExitCodeClasses) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), 1);
  EXPECT_EQ(exit_code_for(TruncatedError("x", 0)), 1);
  EXPECT_EQ(exit_code_for(NumericError("x")), 2);
  EXPECT_EQ(exit_code_for(IoError("x")), 2);
}

// ---------------------------------------------------------------------------
// Command-line tool
// ---------------------------------------------------------------------------

struct RunResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() /
           ("disn_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  RunResult run(const std::string& args) {
    const fs::path log = root / "stdout.txt";
    const std::string cmd = std::string(DISN_CLI_PATH) + " " + args + " > '" + log.string() +
                            "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  std::string p(const std::string& name) const { return (root / name).string(); }

  static std::string slurp(const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path root;
};

TEST_F(Cli, SynthWritesArtifactsDeterministically) {
  ASSERT_EQ(run("synth --out " + p("a")).code, 0);
  ASSERT_EQ(run("synth --out " + p("b")).code, 0);
  for (const char* f : {"embeddings.emb", "metadata.jsonl", "ground_truth.json", "config.json"}) {
    ASSERT_TRUE(fs::exists(root / "a" / f)) << f;
    EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f;
  }
  const auto store = load_embeddings(root / "a" / "embeddings.emb");
  EXPECT_EQ(store.size(), 50u * 8u * 4u);
  EXPECT_EQ(store.dim(), 64u);
  ASSERT_EQ(run("synth --seed 1 --out " + p("c")).code, 0);
  EXPECT_NE(slurp(root / "a" / "embeddings.emb"), slurp(root / "c" / "embeddings.emb"));
}

TEST_F(Cli, SynthOutputDirectoryPolicy) {
  const auto r = run("synth --no-create --out " + p("missing"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("does not exist"), std::string::npos) << r.out;
  EXPECT_EQ(run("synth --out " + p("nested/deeper")).code, 0);
  EXPECT_TRUE(fs::exists(root / "nested" / "deeper" / "metadata.jsonl"));
}

TEST_F(Cli, TrainEvalPipeline) {
  ASSERT_EQ(run("synth --out " + p("data")).code, 0);
  const auto start = std::chrono::steady_clock::now();
  const auto tr = run("train --set train.epochs=5 --set paths.dataset=" + p("data") + " --out " +
                      p("run"));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(tr.code, 0) << tr.out;
  EXPECT_LT(secs, 60.0);

  const auto csv = slurp(root / "run" / "loss_history.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "epoch,L_spk,L_recons,L_env_env,L_env_spk,L_corr,L_total,lr");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7) << line;
  }
  EXPECT_EQ(rows, 5u);
  const json report = json::parse(slurp(root / "run" / "train_report.json"));
  EXPECT_EQ(report.at("weights").at("adv"), 0.5);
  EXPECT_TRUE(fs::exists(root / "run" / "config.json"));

  const std::string eval_args = "eval --set paths.dataset=" + p("data") +
                                " --set paths.checkpoint=" + p("run/checkpoint.disn") +
                                " --set eval.det_csv=true --out ";
  ASSERT_EQ(run(eval_args + p("e1")).code, 0);
  ASSERT_EQ(run(eval_args + p("e2")).code, 0);
  const auto m1 = slurp(root / "e1" / "metrics.json");
  EXPECT_EQ(m1, slurp(root / "e2" / "metrics.json"));
  const json m = json::parse(m1);
  for (const char* block : {"raw", "disentangled"}) {
    ASSERT_TRUE(m.contains(block)) << block;
    for (const char* k : {"eer", "min_dcf", "eer_threshold", "dcf_threshold"}) {
      EXPECT_TRUE(m[block].contains(k)) << block << "." << k;
    }
  }
  EXPECT_EQ(m.at("checkpoint_epoch"), 5);
  EXPECT_TRUE(m.contains("probe"));
  EXPECT_TRUE(fs::exists(root / "e1" / "det_raw.csv"));
  EXPECT_TRUE(fs::exists(root / "e1" / "det_disentangled.csv"));

  const auto rep = run("report --out " + p("run"));
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("epochs logged"), std::string::npos) << rep.out;
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  const std::string world =
      " --set world.n_speakers=10 --set world.sessions_per_speaker=4 --set world.embedding_dim=16"
      " --set model.input_dim=16 --set model.code_dim=8 ";
  ASSERT_EQ(run("synth" + world + "--out " + p("data")).code, 0);
  const std::string train = "train" + world + "--set train.batch_size=8 --set paths.dataset=" +
                            p("data");
  ASSERT_EQ(run(train + " --set train.epochs=4 --out " + p("full")).code, 0);
  ASSERT_EQ(run(train + " --set train.epochs=2 --out " + p("half")).code, 0);
  const auto r = run(train + " --set train.epochs=4 --set paths.resume=" +
                     p("half/checkpoint.disn") + " --out " + p("rest"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(root / "rest" / "checkpoint.disn").substr(0, 200),
            slurp(root / "full" / "checkpoint.disn").substr(0, 200));
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(root / "rest" / "checkpoint.disn")),
            serialize_checkpoint(load_checkpoint(root / "full" / "checkpoint.disn")));
  // The resumed log covers epochs 2 and 3 of the full log.
  auto tail = [](const std::string& csv, std::size_t skip) {
    std::istringstream in(csv);
    std::string line, out;
    for (std::size_t i = 0; std::getline(in, line); ++i) {
      if (i == 0 || i > skip) out += line + "\n";
    }
    return out;
  };
  EXPECT_EQ(slurp(root / "rest" / "loss_history.csv"),
            tail(slurp(root / "full" / "loss_history.csv"), 2));
}

TEST_F(Cli, GradcheckExitCodes) {
  const auto ok = run("gradcheck --out " + p("g"));
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("max_rel_error"), std::string::npos);
  EXPECT_NE(ok.out.find("full_step"), std::string::npos);
  EXPECT_TRUE(fs::exists(root / "g" / "gradcheck.json"));
  const auto bad = run("gradcheck --inject-bug");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, ValidationErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("synth --out " + p("x") + " --set world.bogus=1").code, 1);
  EXPECT_EQ(run("synth --out " + p("x") + " --set world.n_speakers=0").code, 1);
  EXPECT_EQ(run("train --out " + p("t")).code, 1);  // no dataset configured
  ASSERT_EQ(run("synth --out " + p("data")).code, 0);
  const auto mismatch =
      run("train --set model.input_dim=128 --set paths.dataset=" + p("data") + " --out " + p("t"));
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.out.find("mismatch on D"), std::string::npos) << mismatch.out;
  const auto no_ckpt = run("eval --set paths.dataset=" + p("data") + " --set paths.checkpoint=" +
                           p("none.disn") + " --out " + p("e"));
  EXPECT_EQ(no_ckpt.code, 1);
  EXPECT_NE(no_ckpt.out.find("none.disn"), std::string::npos);
  std::ofstream(root / "bad.json") << "{ not json";
  EXPECT_EQ(run("synth --config " + p("bad.json") + " --out " + p("x")).code, 1);
}

TEST_F(Cli, NonFiniteInputExitsTwo) {
  ASSERT_EQ(run("synth --set world.n_speakers=4 --out " + p("data")).code, 0);
  auto store = load_embeddings(root / "data" / "embeddings.emb");
  EmbeddingStore poisoned(store.dim());
  for (std::size_t i = 0; i < store.size(); ++i) {
    std::vector<float> v(store.at(i).begin(), store.at(i).end());
    if (i == 3) v[0] = std::numeric_limits<float>::quiet_NaN();
    poisoned.add(store.ids()[i], v);
  }
  save_embeddings(root / "data" / "embeddings.emb", poisoned);
  const auto r = run("train --set train.epochs=1 --set paths.dataset=" + p("data") + " --out " +
                     p("t"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("non-finite"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace disn
