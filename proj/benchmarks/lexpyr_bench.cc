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


#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lexpyr/autoencoder.h"
#include "lexpyr/codebook.h"
#include "lexpyr/incontext.h"
#include "lexpyr/llm.h"
#include "lexpyr/objectives.h"
#include "lexpyr/prompts.h"
#include "lexpyr/pyramid.h"

namespace lexpyr {
namespace {

const LexicalCodebook& bench_codebook(int dim) {
  static const LexicalCodebook cb32 = generate_synthetic_codebook(1000, 32, 0);
  static const LexicalCodebook cb256 = generate_synthetic_codebook(1000, 256, 0);
  return dim == 32 ? cb32 : cb256;
}

LatentGrid random_grid(int rows, int cols, int dim, std::uint64_t seed) {
  LatentGrid z(rows, cols, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (double& v : z.values) v = g(rng);
  return z;
}

void BM_NearestToken(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto& cb = bench_codebook(dim);
  const auto z = random_grid(1, 1, dim, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_token(z.values, cb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cb.size()));
}
BENCHMARK(BM_NearestToken)->Arg(32)->Arg(256);

void BM_Encode(benchmark::State& state, QuantizerKind kind, std::vector<int> log2_sizes) {
  const auto& cb = bench_codebook(32);
  const auto spec = PyramidSpec::square(log2_sizes, 32);
  const auto z = random_grid(spec.grid_rows(), spec.grid_cols(), 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(encode_pyramid(z, cb, spec, kind));
  state.SetItemsProcessed(state.iterations() * token_counts(spec).cumulative.back());
}
BENCHMARK_CAPTURE(BM_Encode, saq_mnist, QuantizerKind::kStreamingAverage,
                  std::vector<int>{0, 1, 2, 2});
BENCHMARK_CAPTURE(BM_Encode, rq_mnist, QuantizerKind::kResidual, std::vector<int>{0, 1, 2, 2});
BENCHMARK_CAPTURE(BM_Encode, saq_six_layer, QuantizerKind::kStreamingAverage,
                  std::vector<int>{0, 1, 2, 3, 4, 4});

void BM_ReconstructAll(benchmark::State& state) {
  const auto& cb = bench_codebook(32);
  const auto spec = PyramidSpec::square({0, 1, 2, 3, 4, 4}, 32);
  const auto q = saq_encode(random_grid(16, 16, 32, 3), cb, spec);
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct_all(q.pyramid, cb));
}
BENCHMARK(BM_ReconstructAll);

void BM_SemanticLoss(benchmark::State& state) {
  auto cb = bench_codebook(32);
  FloatMatrix feats(cb.size(), 8);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g;
  for (std::size_t i = 0; i < cb.size(); ++i) {
    double sq = 0.0;
    for (auto& v : feats.row(i)) {
      v = g(rng);
      sq += v * v;
    }
    for (auto& v : feats.row(i)) v = static_cast<float>(v / std::sqrt(sq));
  }
  cb = cb.with_text_features(feats);
  const auto spec = PyramidSpec::square({0, 1, 2, 2}, 32, {0.98, 0.95});
  const auto q = saq_encode(random_grid(4, 4, 32, 5), cb, spec);
  const std::vector<double> image_feature = {1, 0, 0, 0, 0, 0, 0, 0};
  const auto pools = semantic_pools(similarity_profile(image_feature, cb), spec);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(semantic_loss(q.remainders, pools, cb, ++seed));
  }
}
BENCHMARK(BM_SemanticLoss);

void BM_Autoencoder(benchmark::State& state) {
  NetConfig c;
  c.base_filters = 16;
  c.residual_blocks_per_scale = 1;
  Autoencoder<float> model(c, 0);
  const int batch = static_cast<int>(state.range(0));
  nn::Tensor<float> images(1, batch, 32, 32);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : images.data) v = u(rng);
  for (auto _ : state) {
    auto z = model.encode(images);
    auto out = model.decode(z);
    model.decode_backward(out);
    model.encode_backward(z);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Autoencoder)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ParseString(benchmark::State& state) {
  const auto& cb = bench_codebook(32);
  const auto spec = PyramidSpec::square({0, 1, 2, 3, 4, 4}, 32);
  const auto q = saq_encode(random_grid(16, 16, 32, 7), cb, spec);
  const auto text = flatten(q.pyramid, cb, spec.depth());
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_string(text, spec, cb, spec.depth()));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ParseString);

void BM_CorruptTokens(benchmark::State& state) {
  std::vector<TokenId> ids(597);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i % 1000);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(corrupt_tokens(ids, 0.5, 1000, ++seed));
}
BENCHMARK(BM_CorruptTokens);

void BM_ArPrompt(benchmark::State& state) {
  const auto& cb = bench_codebook(32);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<TokenId> pick(0, 999);
  auto draw = [&](int n) {
    std::vector<TokenId> v(n);
    for (auto& t : v) t = pick(rng);
    return v;
  };
  std::vector<ArExample> examples;
  for (int i = 0; i < 10; ++i) examples.push_back({flatten_ids(draw(341), cb), draw(100), draw(4)});
  const auto condition = flatten_ids(draw(341), cb);
  const auto prefix = draw(100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_ar_prompt(examples, condition, prefix, 4, cb));
  }
}
BENCHMARK(BM_ArPrompt);

void BM_OracleDecode(benchmark::State& state) {
  const auto& cb = bench_codebook(32);
  const auto spec = PyramidSpec::square({0, 1, 2, 2}, 32);
  const auto plan = DecodingPlan::standard(spec);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<TokenId> pick(0, 999);
  auto draw = [&] {
    std::vector<TokenId> v(37);
    for (auto& t : v) t = pick(rng);
    return v;
  };
  DenoisingContext ctx;
  for (int i = 0; i < 4; ++i) ctx.examples.push_back({draw(), draw(), i, 0.3});
  ctx.query = draw();
  OracleLLM oracle(cb);
  teach_oracle(oracle, ctx, cb, draw());
  for (auto _ : state) benchmark::DoNotOptimize(progressive_decode(plan, oracle, ctx, cb));
}
BENCHMARK(BM_OracleDecode)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace lexpyr

BENCHMARK_MAIN();
