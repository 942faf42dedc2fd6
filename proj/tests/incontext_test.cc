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


#include "lexpyr/incontext.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "lexpyr/prompts.h"

namespace lexpyr {
namespace {

TEST(CorruptionSchedule, TenExamplesLadder) {
  const std::vector<double> expect = {0.5, 0.47, 0.44, 0.41, 0.38, 0.35, 0.32, 0.29, 0.26, 0.23};
  EXPECT_EQ(corruption_schedule(10).rates, expect);
  EXPECT_EQ(corruption_schedule(1).rates, std::vector<double>{0.5});
  EXPECT_THROW(corruption_schedule(0), InvalidArgument);
}

TEST(CorruptionSchedule, FloorHolds) {
  for (bool cosine : {false, true}) {
    for (int k = 1; k <= 100; ++k) {
      const auto s = corruption_schedule(k, cosine);
      ASSERT_EQ(static_cast<int>(s.rates.size()), k);
      for (double r : s.rates) EXPECT_GE(r, 0.2);
      EXPECT_NO_THROW(s.validate());
    }
  }
  const auto c = corruption_schedule(10, true);
  EXPECT_DOUBLE_EQ(c.rates.front(), 0.5);
  EXPECT_DOUBLE_EQ(c.rates.back(), 0.23);
  EXPECT_TRUE(std::is_sorted(c.rates.rbegin(), c.rates.rend()));
}

// Independent re-run of the sampling procedure: partial Fisher-Yates for
// positions, then a uniform shift in [1, V-1] per chosen position.
std::vector<TokenId> corrupt_oracle(const std::vector<TokenId>& ids, double rate, int vocab,
                                    std::uint64_t seed, std::set<std::size_t>* chosen) {
  const std::size_t n = ids.size();
  const auto count = static_cast<std::size_t>(std::llround(rate * n));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  auto out = ids;
  std::uniform_int_distribution<TokenId> shift(1, vocab - 1);
  for (std::size_t i = 0; i < count; ++i) {
    chosen->insert(order[i]);
    out[order[i]] = (out[order[i]] + shift(rng)) % vocab;
  }
  return out;
}

TEST(CorruptTokens, Examples) {
  const std::vector<TokenId> four = {1, 2, 3, 4};
  EXPECT_EQ(corrupt_tokens(four, 0.0, 10, 1), four);
  const auto all = corrupt_tokens(four, 1.0, 10, 1);
  for (int i = 0; i < 4; ++i) EXPECT_NE(all[i], four[i]);

  std::vector<TokenId> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 0);
  const auto half = corrupt_tokens(hundred, 0.5, 1000, 77);
  std::set<std::size_t> chosen;
  EXPECT_EQ(half, corrupt_oracle(hundred, 0.5, 1000, 77, &chosen));
  std::set<std::size_t> changed;
  for (std::size_t i = 0; i < 100; ++i) {
    if (half[i] != hundred[i]) changed.insert(i);
  }
  EXPECT_EQ(changed.size(), 50u);
  EXPECT_EQ(changed, chosen);
}

TEST(CorruptTokens, Errors) {
  const std::vector<TokenId> ids = {0, 1};
  EXPECT_THROW(corrupt_tokens(ids, 1.5, 10, 0), InvalidArgument);
  EXPECT_THROW(corrupt_tokens(ids, 0.5, 1, 0), InvalidArgument);
  EXPECT_NO_THROW(corrupt_tokens(ids, 0.0, 1, 0));
  EXPECT_THROW(corrupt_tokens(std::vector<TokenId>{12}, 1.0, 10, 0), InvalidArgument);
}

TEST(CorruptTokens, ExactCountNeverPreserves) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(1, 64);
  std::uniform_real_distribution<double> rate(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int vocab = 2 + trial % 50;
    std::vector<TokenId> ids(len(rng));
    for (auto& t : ids) t = static_cast<TokenId>(rng() % vocab);
    const double r = rate(rng);
    std::set<std::size_t> chosen;
    const auto out = corrupt_tokens(ids, r, vocab, trial);
    ASSERT_EQ(out, corrupt_oracle(ids, r, vocab, trial, &chosen));
    std::size_t replaced = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) replaced += out[i] != ids[i];
    EXPECT_EQ(replaced, static_cast<std::size_t>(std::llround(r * ids.size())));
  }
}

Image ramp(int h, int w, int c) {
  Image im(h, w, c);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) {
    im.pixels[i] = static_cast<float>(i % 97) / 96.0f;
  }
  return im;
}

TEST(MaskImage, OutpaintBottomHalf) {
  const auto out = mask_image(Image(4, 4, 1, 1.0f), MaskTask::kOutpaintBottom);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(out.at(y, x, 0), y < 2 ? 1.0f : 0.0f);
  }
}

TEST(MaskImage, InpaintBox) {
  const auto out = mask_image(Image(128, 128, 3, 1.0f), MaskTask::kInpaintCenter);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const bool inside = y >= 32 && y < 96 && x >= 32 && x < 96;
      EXPECT_EQ(out.at(y, x, 1), inside ? 0.0f : 1.0f);
    }
  }
}

TEST(MaskImage, RotateTwiceIsHalfTurn) {
  const auto im = ramp(6, 4, 2);
  const auto once = mask_image(im, MaskTask::kRotateCw90);
  EXPECT_EQ(once.height, 4);
  EXPECT_EQ(once.width, 6);
  EXPECT_EQ(once.at(0, 0, 1), im.at(5, 0, 1));
  const auto twice = mask_image(once, MaskTask::kRotateCw90);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 2; ++c) EXPECT_EQ(twice.at(y, x, c), im.at(5 - y, 3 - x, c));
    }
  }
  auto four = twice;
  for (int i = 0; i < 2; ++i) four = mask_image(four, MaskTask::kRotateCw90);
  EXPECT_EQ(four, im);
}

TEST(MaskImage, TranslateAndBlur) {
  const auto im = ramp(8, 8, 1);
  const auto t = mask_image(im, MaskTask::kTranslateRight);
  for (int y = 0; y < 8; ++y) {
    EXPECT_EQ(t.at(y, 1, 0), 0.0f);
    EXPECT_EQ(t.at(y, 5, 0), im.at(y, 3, 0));
  }
  const auto flat = mask_image(Image(9, 9, 1, 0.4f), MaskTask::kBlur);
  for (float v : flat.pixels) EXPECT_NEAR(v, 0.4f, 1e-6);
  EXPECT_EQ(parse_mask_task("inpaint_center"), MaskTask::kInpaintCenter);
  EXPECT_THROW(parse_mask_task("paint"), InvalidArgument);
}

TEST(PixelTransform, Examples) {
  const auto dark = pixel_transform(Image(2, 2, 3, 0.5f), PixelTransformKind::kBrightness, 1);
  for (float v : dark.pixels) EXPECT_EQ(v, 0.0f);
  const auto col = pixel_transform(Image(1, 1, 3, 0.5f), PixelTransformKind::kColor, 6);
  EXPECT_FLOAT_EQ(col.at(0, 0, 0), 0.55f);
  EXPECT_FLOAT_EQ(col.at(0, 0, 1), 0.45f);
  EXPECT_FLOAT_EQ(col.at(0, 0, 2), 0.5f);
  const auto bright = pixel_transform(Image(1, 1, 1, 0.5f), PixelTransformKind::kBrightness, 7);
  EXPECT_FLOAT_EQ(bright.pixels[0], 0.9f);
  EXPECT_THROW(pixel_transform(dark, PixelTransformKind::kColor, 5), InvalidArgument);
  EXPECT_THROW(pixel_transform(dark, PixelTransformKind::kColor, 0), InvalidArgument);
  EXPECT_THROW(pixel_transform(dark, PixelTransformKind::kColor, 10), InvalidArgument);
}

TEST(PixelTransform, StaysInRange) {
  const auto im = ramp(5, 7, 3);
  for (auto kind : {PixelTransformKind::kBrightness, PixelTransformKind::kContrast,
                    PixelTransformKind::kSaturation, PixelTransformKind::kColor}) {
    for (int level : {1, 2, 3, 4, 6, 7, 8, 9}) {
      for (float v : pixel_transform(im, kind, level).pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(PixelTransform, ContrastAndSaturationOracles) {
  Image im(1, 2, 3);
  im.pixels = {0.2f, 0.4f, 0.6f, 0.6f, 0.4f, 0.2f};
  const auto c = pixel_transform(im, PixelTransformKind::kContrast, 8);  // +0.6
  EXPECT_NEAR(c.at(0, 0, 0), 0.4 + (0.2 - 0.4) * 1.6, 1e-6);
  const auto s = pixel_transform(im, PixelTransformKind::kSaturation, 1);  // -0.4
  const double gray = 0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6;
  EXPECT_NEAR(s.at(0, 0, 0), gray + (0.2 - gray) * 0.6, 1e-6);
}

TEST(RetryTemperature, Ladder) {
  EXPECT_EQ(retry_temperature(0, 0.01), 0.0);
  EXPECT_DOUBLE_EQ(retry_temperature(1, 0.01), 0.02);
  EXPECT_DOUBLE_EQ(retry_temperature(2, 0.01), 0.06);
  EXPECT_DOUBLE_EQ(retry_temperature(3, 0.01), 0.14);
  for (int i = 0; i < 10; ++i) {
    double sum = 0.0;
    for (int j = 1; j <= i; ++j) sum += std::pow(2.0, j);
    EXPECT_DOUBLE_EQ(retry_temperature(i, 0.5), 0.5 * sum);
  }
  EXPECT_THROW(retry_temperature(-1, 0.01), InvalidArgument);
}

TEST(DecodingPlan, Standard) {
  const auto big = DecodingPlan::standard(PyramidSpec::square({0, 1, 2, 3, 4, 4}, 4, {}));
  EXPECT_EQ(big.total_tokens, 597);
  EXPECT_EQ(big.ar_end, 341);
  EXPECT_EQ(big.nar_segments(), 16);
  const auto mnist = DecodingPlan::standard(PyramidSpec::square({0, 1, 2, 2}, 4, {}));
  EXPECT_EQ(mnist.total_tokens, 37);
  EXPECT_EQ(mnist.ar_end, 21);
  EXPECT_EQ(mnist.nar_segments(), 1);
  auto bad = mnist;
  bad.nar_order = {1};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = mnist;
  bad.ar_stride = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  const nlohmann::json j = big;
  EXPECT_EQ(nlohmann::json(j.get<DecodingPlan>()), j);
}

// Tokenizer stand-in: one id per pixel from quantized intensity.
std::vector<TokenId> pixel_tokens(const Image& im) {
  std::vector<TokenId> out;
  for (float v : im.pixels) out.push_back(static_cast<TokenId>(std::lround(v * 9)));
  return out;
}

std::vector<ImageSample> random_images(int count, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 9);
  std::vector<ImageSample> out;
  for (int i = 0; i < count; ++i) {
    ImageSample s;
    s.index = i;
    s.image = Image(size, size, 1);
    for (auto& p : s.image.pixels) p = level(rng) / 9.0f;
    out.push_back(std::move(s));
  }
  return out;
}

TEST(DenoisingContext, CorruptsExactCounts) {
  const auto images = random_images(2, 3, 1);  // 9 tokens; use 10 via padding below
  auto tokenize10 = [](const Image& im) {
    auto t = pixel_tokens(im);
    t.push_back(0);
    return t;
  };
  CorruptionSchedule sched{{0.2}, 0.2};
  const auto ctx = build_denoising_context({images[0]}, images[1], [](const Image& im) {
    return mask_image(im, MaskTask::kOutpaintBottom);
  }, tokenize10, sched, 10, 3);
  ASSERT_EQ(ctx.examples.size(), 1u);
  const auto u0 = tokenize10(mask_image(images[0].image, MaskTask::kOutpaintBottom));
  const auto v0 = tokenize10(images[0].image);
  int du = 0, dv = 0;
  for (int i = 0; i < 10; ++i) {
    du += ctx.examples[0].u[i] != u0[i];
    dv += ctx.examples[0].v[i] != v0[i];
  }
  EXPECT_EQ(du, 2);
  EXPECT_EQ(dv, 2);
  EXPECT_EQ(ctx.query, tokenize10(mask_image(images[1].image, MaskTask::kOutpaintBottom)));
  EXPECT_EQ(ctx.examples[0].source, 0);
  EXPECT_DOUBLE_EQ(ctx.examples[0].rate, 0.2);
}

TEST(DenoisingContext, TargetsNeverLeak) {
  const auto images = random_images(1, 4, 9);
  const auto identity = [](const Image& im) { return im; };
  for (int trial = 0; trial < 1000; ++trial) {
    // The query is the context image itself, the hardest case for leakage.
    const auto ctx = build_denoising_context({images[0], images[0]}, images[0], identity,
                                             pixel_tokens, CorruptionSchedule{{0.2, 0.2}, 0.2},
                                             10, trial);
    for (const auto& e : ctx.examples) EXPECT_NE(e.v, pixel_tokens(images[0].image));
  }
}

TEST(DenoisingContext, Errors) {
  const auto images = random_images(3, 2, 1);
  const auto identity = [](const Image& im) { return im; };
  EXPECT_THROW(build_denoising_context({images[0]}, images[1], identity, pixel_tokens,
                                       corruption_schedule(2), 10, 0),
               InvalidArgument);
  EXPECT_THROW(build_denoising_context({images[0]}, images[1], identity, pixel_tokens,
                                       CorruptionSchedule{{0.1}, 0.2}, 10, 0),
               InvalidArgument);
}

struct DecodeFixture {
  LexicalCodebook cb = generate_synthetic_codebook(300, 4, 21);
  PyramidSpec spec = PyramidSpec::square({0, 1, 2, 2}, 4, {});
  DecodingPlan plan = DecodingPlan::standard(spec);
  std::mt19937_64 rng{99};

  std::vector<TokenId> draw(int n) {
    std::uniform_int_distribution<TokenId> id(0, static_cast<TokenId>(cb.size()) - 1);
    std::vector<TokenId> v(n);
    for (auto& t : v) t = id(rng);
    return v;
  }
  DenoisingContext context(int k) {
    DenoisingContext c;
    for (int i = 0; i < k; ++i) c.examples.push_back({draw(37), draw(37), i, 0.3});
    c.query = draw(37);
    return c;
  }
};

TEST(ProgressiveDecode, OracleRecoversTargets) {
  DecodeFixture f;
  for (int trial = 0; trial < 100; ++trial) {
    const auto ctx = f.context(3);
    const auto target = f.draw(37);
    OracleLLM oracle(f.cb);
    teach_oracle(oracle, ctx, f.cb, target);
    const auto out = progressive_decode_pyramid(f.plan, oracle, ctx, f.spec, f.cb);
    EXPECT_EQ(out, TokenPyramid::from_flat(f.spec, target));
  }
}

TEST(ProgressiveDecode, NarOrderDoesNotMatter) {
  DecodeFixture f;
  f.spec = PyramidSpec::square({0, 1, 3, 3}, 4, {});  // 133 tokens, 4 NAR segments
  f.plan = DecodingPlan::standard(f.spec);
  ASSERT_EQ(f.plan.nar_segments(), 4);
  DenoisingContext ctx;
  for (int i = 0; i < 2; ++i) ctx.examples.push_back({f.draw(133), f.draw(133), i, 0.3});
  ctx.query = f.draw(133);
  const auto target = f.draw(133);
  OracleLLM oracle(f.cb);
  teach_oracle(oracle, ctx, f.cb, target);
  const auto base = progressive_decode(f.plan, oracle, ctx, f.cb);
  EXPECT_EQ(base, target);
  auto shuffled = f.plan;
  shuffled.nar_order = {2, 0, 3, 1};
  EXPECT_EQ(progressive_decode(shuffled, oracle, ctx, f.cb), base);
}

TEST(ProgressiveDecode, TruncationWalksTheTemperatureLadder) {
  DecodeFixture f;
  const auto ctx = f.context(2);
  OracleLLM oracle(f.cb, {.truncate_prob = 1.0});
  teach_oracle(oracle, ctx, f.cb, f.draw(37));
  std::vector<double> temps;
  const TraceFn trace = [&](const nlohmann::json& r) { temps.push_back(r["temperature"]); };
  try {
    progressive_decode(f.plan, oracle, ctx, f.cb, trace);
    FAIL() << "expected a decoding failure";
  } catch (const DecodingError& e) {
    EXPECT_EQ(e.partial().size(), 37u);
    EXPECT_EQ(e.partial()[0], -1);
  }
  ASSERT_EQ(temps.size(), 4u);
  EXPECT_EQ(temps[0], 0.0);
  EXPECT_DOUBLE_EQ(temps[1], 0.02);
  EXPECT_DOUBLE_EQ(temps[2], 0.06);
  EXPECT_DOUBLE_EQ(temps[3], 0.14);
}

TEST(ProgressiveDecode, TracedPromptsRoundTrip) {
  DecodeFixture f;
  const auto ctx = f.context(3);
  const auto target = f.draw(37);
  OracleLLM oracle(f.cb);
  teach_oracle(oracle, ctx, f.cb, target);
  std::vector<nlohmann::json> records;
  progressive_decode(f.plan, oracle, ctx, f.cb,
                     [&](const nlohmann::json& r) { records.push_back(r); });
  ASSERT_EQ(records.size(), 7u);  // 6 AR steps (5x4 + 1) and 1 NAR step
  for (const auto& r : records) {
    const std::string prompt = r["prompt"];
    const int begin = r["begin"], end = r["end"];
    std::size_t pos = 0;
    for (const auto& e : ctx.examples) {
      pos = prompt.find("\nA:", pos) + 3;
      const auto line = prompt.substr(pos, prompt.find('\n', pos) - pos);
      EXPECT_EQ(segment_tokens(line, f.cb).ids,
                std::vector<TokenId>(e.v.begin() + begin, e.v.begin() + end));
    }
    EXPECT_EQ(r["accepted"], 0);
    EXPECT_EQ(r["completions"].size(), 8u);
  }
  EXPECT_EQ(records.back()["stage"], "nar");
}

TEST(ProgressiveDecode, SingleStepPlanUsesSameGrammar) {
  DecodeFixture f;
  const auto ctx = f.context(2);
  const auto target = f.draw(37);
  OracleLLM oracle(f.cb);
  teach_oracle(oracle, ctx, f.cb, target);
  auto plan = f.plan;
  plan.ar_end = 37;
  plan.ar_stride = 37;
  std::vector<std::string> prompts;
  const auto out = progressive_decode(plan, oracle, ctx, f.cb,
                                      [&](const nlohmann::json& r) { prompts.push_back(r["prompt"]); });
  EXPECT_EQ(out, target);
  ASSERT_EQ(prompts.size(), 1u);
  EXPECT_EQ(prompts[0].rfind("Learn a new language and predict the 37 tokens", 0), 0u);
}

TEST(ProgressiveDecode, RejectsMismatchedContext) {
  DecodeFixture f;
  auto ctx = f.context(1);
  ctx.examples[0].v.pop_back();
  OracleLLM oracle(f.cb);
  EXPECT_THROW(progressive_decode(f.plan, oracle, ctx, f.cb), InvalidArgument);
}

}  // namespace
}  // namespace lexpyr
