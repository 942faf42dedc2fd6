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

#include "lexpyr/autoencoder.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

NetConfig tiny_config() {
  NetConfig c;
  c.input_height = 16;
  c.input_width = 16;
  c.in_channels = 1;
  c.base_filters = 8;
  c.channel_multipliers = {1, 2};
  c.residual_blocks_per_scale = 1;
  c.mid_blocks = 1;
  c.latent_dim = 4;
  c.norm_groups = 4;
  return c;
}

template <typename T>
nn::Tensor<T> random_tensor(int c, int n, int h, int w, unsigned seed, double lo = 0.0,
                            double hi = 1.0) {
  nn::Tensor<T> t(c, n, h, w);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

// Scalar probe: sum of weights * decode(encode(x)).
double probe(Autoencoder<double>& model, const nn::Tensor<double>& x,
             const std::vector<double>& weights) {
  const auto y = model.decode(model.encode(x));
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y.data[i];
  return s;
}

TEST(NetConfig, ShapeLaw) {
  NetConfig large;
  large.input_height = large.input_width = 128;
  large.in_channels = 3;
  large.base_filters = 128;
  EXPECT_EQ(large.downsample_factor(), 8);
  EXPECT_EQ(large.latent_height(), 16);
  NetConfig mnist;
  EXPECT_EQ(mnist.latent_height(), 4);
  EXPECT_EQ(mnist.latent_width(), 4);
  NetConfig bad = mnist;
  bad.input_height = 30;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = mnist;
  bad.base_filters = 12;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Autoencoder, MnistShapesAndRange) {
  NetConfig c;
  c.base_filters = 8;
  c.residual_blocks_per_scale = 1;
  c.latent_dim = 6;
  Autoencoder<float> model(c, 1);
  Image zero(32, 32, 1);
  const auto z = encode_image(model, zero);
  EXPECT_EQ(z.rows, 4);
  EXPECT_EQ(z.cols, 4);
  EXPECT_EQ(z.dim, 6);
  for (double v : z.values) EXPECT_TRUE(std::isfinite(v));
  const auto img = decode_embeddings(model, z);
  EXPECT_EQ(img.height, 32);
  EXPECT_EQ(img.channels, 1);
  for (float v : img.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(encode_image(model, Image(28, 28, 1)), InvalidArgument);
  EXPECT_THROW(decode_embeddings(model, LatentGrid(2, 2, 6)), InvalidArgument);
}

TEST(Autoencoder, DecodeBoundedForExtremeInputs) {
  Autoencoder<float> model(tiny_config(), 2);
  auto z = random_tensor<float>(4, 3, 8, 8, 3, -50.0, 50.0);
  const auto y = model.decode(z);
  EXPECT_EQ(y.h, 16);
  for (float v : y.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Autoencoder, RgbLargeShape) {
  NetConfig c;
  c.input_height = c.input_width = 128;
  c.in_channels = 3;
  c.base_filters = 8;
  c.residual_blocks_per_scale = 1;
  c.mid_blocks = 1;
  c.latent_dim = 4;
  Autoencoder<float> model(c, 0);
  const auto z = model.encode(random_tensor<float>(3, 1, 128, 128, 0));
  EXPECT_EQ(z.h, 16);
  EXPECT_EQ(z.w, 16);
  EXPECT_EQ(model.decode(z).c, 3);
}

TEST(Autoencoder, FiniteDifferenceGradients) {
  Autoencoder<double> model(tiny_config(), 7);
  const auto x = random_tensor<double>(1, 2, 16, 16, 8);
  std::vector<double> weights(x.size());
  std::mt19937 rng(9);
  std::normal_distribution<double> n;
  for (double& w : weights) w = n(rng);

  const auto params = model.parameters();
  nn::zero_grad(params);
  const auto y = model.decode(model.encode(x));
  nn::Tensor<double> gy(y.c, y.n, y.h, y.w);
  gy.data = weights;
  const auto gz = model.decode_backward(gy);
  const auto gx = model.encode_backward(gz);

  const double eps = 1e-6;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::uniform_int_distribution<std::size_t> pick;
  for (auto* p : params) {
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = pick(rng) % p->value.size();
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = probe(model, x, weights);
      p->value[i] = orig - eps;
      const double down = probe(model, x, weights);
      p->value[i] = orig;
      analytic.push_back(p->grad[i]);
      numeric.push_back((up - down) / (2 * eps));
    }
  }
  auto xp = x;
  for (int s = 0; s < 20; ++s) {
    const std::size_t i = pick(rng) % xp.size();
    const double orig = xp.data[i];
    xp.data[i] = orig + eps;
    const double up = probe(model, xp, weights);
    xp.data[i] = orig - eps;
    const double down = probe(model, xp, weights);
    xp.data[i] = orig;
    analytic.push_back(gx.data[i]);
    numeric.push_back((up - down) / (2 * eps));
  }
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += std::pow(analytic[i] - numeric[i], 2);
    scale = std::max(scale, std::abs(analytic[i]));
  }
  double na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  const double rel = std::sqrt(diff) / std::max(std::sqrt(na), std::sqrt(nn_));
  EXPECT_LT(rel, 1e-4) << "over " << analytic.size() << " coordinates";
  EXPECT_GT(scale, 0.0);
}

TEST(Adam, MatchesHandComputedFirstStep) {
  nn::Param<double> p{"p", {1.0, -2.0}, {0.5, -0.25}};
  nn::Adam<double> adam;
  adam.step({&p}, 0.1);
  // First step moves each coordinate by lr * sign(g) (up to eps).
  EXPECT_NEAR(p.value[0], 0.9, 1e-7);
  EXPECT_NEAR(p.value[1], -1.9, 1e-7);
  EXPECT_EQ(adam.steps(), 1);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir_ = std::filesystem::temp_directory_path() / "lexpyr_ckpt";
  void SetUp() override {
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  Autoencoder<float> model(tiny_config(), 11);
  nn::Adam<float> adam;
  auto params = model.parameters();
  for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.01f);
  adam.step(params, 1e-3);
  auto ckpt = make_checkpoint(model, &adam, 42);
  ckpt.extra = {{"note", "x"}};
  save_checkpoint(ckpt, dir_ / "a.ckpt");
  const auto back = load_checkpoint(dir_ / "a.ckpt");
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.net, tiny_config());
  EXPECT_EQ(back.params, ckpt.params);
  EXPECT_EQ(back.adam_m, ckpt.adam_m);
  EXPECT_EQ(back.adam_v, ckpt.adam_v);
  EXPECT_EQ(back.adam_steps, 1);
  EXPECT_EQ(back.extra["note"], "x");

  Autoencoder<float> other(tiny_config(), 99);
  nn::Adam<float> other_adam;
  restore_checkpoint(back, other, &other_adam);
  const auto a = model.parameters();
  const auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
  EXPECT_EQ(other_adam.steps(), 1);
}

TEST_F(CheckpointTest, RejectsWrongVersionAndCorruption) {
  Autoencoder<float> model(tiny_config(), 11);
  save_checkpoint(make_checkpoint(model, nullptr, 0), dir_ / "a.ckpt");
  std::string bytes;
  {
    std::ifstream in(dir_ / "a.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir_ / name, std::ios::binary) << content;
    return dir_ / name;
  };
  std::string wrong_version = bytes;
  const auto pos = wrong_version.find("\"format_version\":1");
  ASSERT_NE(pos, std::string::npos);
  wrong_version[pos + 17] = '7';
  EXPECT_THROW(load_checkpoint(write("v.ckpt", wrong_version)), FormatError);
  std::string flipped = bytes;
  flipped[flipped.size() - 20] ^= 0x40;
  EXPECT_THROW(load_checkpoint(write("f.ckpt", flipped)), FormatError);
  EXPECT_THROW(load_checkpoint(write("t.ckpt", bytes.substr(0, bytes.size() / 2))),
               FormatError);
  EXPECT_THROW(load_checkpoint(write("m.ckpt", "garbage")), FormatError);

  NetConfig different = tiny_config();
  different.latent_dim = 8;
  Autoencoder<float> mismatched(different, 0);
  EXPECT_THROW(restore_checkpoint(load_checkpoint(dir_ / "a.ckpt"), mismatched, nullptr),
               InvalidArgument);
}

}  // namespace
}  // namespace lexpyr
