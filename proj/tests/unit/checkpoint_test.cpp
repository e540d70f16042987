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

#include <filesystem>

#include <gtest/gtest.h>

#include "disn/checkpoint.hpp"
#include "test_world.hpp"

namespace disn {
namespace {

using namespace testing_util;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    world = tiny_world();
    data = synth_generate(world);
    model = tiny_model(world);
  }

  TrainerState<float> trained(std::size_t epochs) {
    auto st = make_trainer<float>(model, 11);
    fit(st, data.dataset, tiny_train(epochs, 11));
    return st;
  }

  SynthWorld world;
  SynthData data;
  ModelConfig model;
};

TEST_F(CheckpointTest, RoundTripIsByteIdentical) {
  auto st = trained(2);
  const std::string a = serialize_checkpoint(capture(st, {{"note", "x"}}));
  const auto cd = parse_checkpoint(a, model);
  EXPECT_EQ(cd.epoch, 2u);
  EXPECT_EQ(cd.main_opt.step, st.main_opt.step);
  EXPECT_EQ(cd.train["note"], "x");
  auto back = restore_trainer<float>(cd);
  EXPECT_EQ(serialize_checkpoint(capture(back, {{"note", "x"}})), a);
  EXPECT_EQ(back.model.ae.dec_fc.weight.value, st.model.ae.dec_fc.weight.value);
  EXPECT_EQ(back.model.env_spk.bn2.running_var, st.model.env_spk.bn2.running_var);
  EXPECT_EQ(rng_state(back.sampler_rng), rng_state(st.sampler_rng));
}

TEST_F(CheckpointTest, ResumeReproducesUninterruptedRun) {
  auto straight = make_trainer<float>(model, 11);
  const auto full = fit(straight, data.dataset, tiny_train(4, 11));

  auto first = make_trainer<float>(model, 11);
  auto head = fit(first, data.dataset, tiny_train(2, 11));
  auto resumed = restore_trainer<float>(parse_checkpoint(serialize_checkpoint(capture(first))));
  const auto tail = fit(resumed, data.dataset, tiny_train(4, 11));
  head.insert(head.end(), tail.begin(), tail.end());
  EXPECT_EQ(loss_history_csv(head), loss_history_csv(full));
  EXPECT_EQ(serialize_checkpoint(capture(resumed)), serialize_checkpoint(capture(straight)));
}

TEST_F(CheckpointTest, FileRoundTrip) {
  auto st = trained(1);
  const auto path = std::filesystem::temp_directory_path() / "disn_ckpt_test.disn";
  save_checkpoint(path, capture(st));
  EXPECT_EQ(load_checkpoint(path).epoch, 1u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST_F(CheckpointTest, HeaderErrors) {
  auto st = trained(1);
  std::string buf = serialize_checkpoint(capture(st));
  EXPECT_THROW(parse_checkpoint("DIS"), HeaderError);
  std::string bad = buf;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), HeaderError);
  bad = buf;
  bad[4] = 9;
  EXPECT_THROW(parse_checkpoint(bad), VersionError);
  bad = buf;
  bad[12] = '#';
  EXPECT_THROW(parse_checkpoint(bad), HeaderError);
}

TEST_F(CheckpointTest, ModelMismatch) {
  auto st = trained(1);
  const std::string buf = serialize_checkpoint(capture(st));
  auto other = model;
  other.env_out_dim = 5;
  EXPECT_THROW(parse_checkpoint(buf, other), ConfigMismatchError);

  // Consistent header but tensors of the wrong shape.
  auto cd = parse_checkpoint(buf);
  cd.model = other;
  EXPECT_THROW(restore_trainer<float>(cd), ConfigMismatchError);
}

TEST_F(CheckpointTest, MissingTensor) {
  auto st = trained(1);
  auto cd = capture(st);
  cd.tensors.erase("env_env.fc1.weight.m2");
  try {
    restore_trainer<float>(parse_checkpoint(serialize_checkpoint(cd)));
    FAIL() << "expected MissingTensorError";
  } catch (const MissingTensorError& e) {
    EXPECT_NE(std::string(e.what()).find("env_env.fc1.weight.m2"), std::string::npos);
  }
}

TEST_F(CheckpointTest, CorruptAndTruncatedBlocks) {
  auto st = trained(1);
  const std::string buf = serialize_checkpoint(capture(st));
  std::string bad = buf;
  bad[bad.size() - 3] ^= 0x5A;
  EXPECT_THROW(parse_checkpoint(bad), CorruptTensorError);
  EXPECT_THROW(parse_checkpoint(buf.substr(0, buf.size() - 8)), TruncatedError);
  EXPECT_THROW(parse_checkpoint(buf.substr(0, 40)), TruncatedError);
}

}  // namespace
}  // namespace disn
