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


#include "lexpyr/objectives.h"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "lexpyr/autoencoder.h"
#include "lexpyr/error.h"
#include "lexpyr/nn.h"

namespace lexpyr {

void LossWeights::validate() const {
  for (double v : {alpha, beta, lambda, eta, phi}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("loss weights must be finite and non-negative");
    }
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha", w.alpha}, {"beta", w.beta}, {"lambda", w.lambda},
       {"eta", w.eta}, {"phi", w.phi}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.alpha = j.value("alpha", d.alpha);
  w.beta = j.value("beta", d.beta);
  w.lambda = j.value("lambda", d.lambda);
  w.eta = j.value("eta", d.eta);
  w.phi = j.value("phi", d.phi);
  w.validate();
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"appearance", b.appearance},
       {"semantic", b.semantic},
       {"w", b.dynamic_weight},
       {"total", b.total},
       {"pixel", b.pixel},
       {"commitment", b.commitment},
       {"commitment_per_layer", b.commitment_per_layer},
       {"plugins", b.plugin_terms}};
}

std::vector<std::vector<TokenId>> semantic_pools(const SimilarityProfile& profile,
                                                 const PyramidSpec& spec) {
  std::vector<std::vector<TokenId>> pools;
  for (int l = 0; l < spec.semantic_depth; ++l) {
    auto pool = candidate_pool(profile, spec.thresholds[l]);
    if (pool.empty()) {
      throw InvalidArgument("empty candidate pool for layer " + std::to_string(l + 1));
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

SemanticLoss semantic_loss(std::span<const Remainder> remainders,
                           const std::vector<std::vector<TokenId>>& pools,
                           const LexicalCodebook& codebook, std::uint64_t seed,
                           bool pool_average) {
  SemanticLoss out;
  out.grad.resize(remainders.size());
  out.targets.assign(remainders.size(), -1);
  const int depth = static_cast<int>(pools.size());
  if (depth == 0) return out;
  for (int l = 0; l < depth; ++l) {
    if (pools[l].empty()) {
      throw InvalidArgument("empty candidate pool for layer " + std::to_string(l + 1));
    }
  }
  std::vector<int> per_layer(depth, 0);
  for (const auto& r : remainders) {
    if (r.layer < depth) ++per_layer[r.layer];
  }

  std::mt19937_64 rng(seed);
  const std::size_t vocab = codebook.size();
  const int dim = codebook.dim();
  std::vector<double> dist(vocab);
  std::vector<double> layer_sum(depth, 0.0);
  for (std::size_t i = 0; i < remainders.size(); ++i) {
    const auto& r = remainders[i];
    if (r.layer >= depth) continue;
    const auto& pool = pools[r.layer];
    squared_distances(r.value, codebook, dist);
    double min_d = dist[0];
    for (double d : dist) min_d = std::min(min_d, d);
    double z = 0.0;
    for (double d : dist) z += std::exp(min_d - d);
    const double lse = -min_d + std::log(z);

    // Expected codeword under the softmax.
    std::vector<double> expected(dim, 0.0);
    for (std::size_t k = 0; k < vocab; ++k) {
      const double p = std::exp(-dist[k] - lse);
      const auto e = codebook.embedding(static_cast<TokenId>(k));
      for (int j = 0; j < dim; ++j) expected[j] += p * e[j];
    }
    std::vector<double> target(dim, 0.0);
    double target_d = 0.0;
    if (pool_average) {
      for (TokenId c : pool) {
        const auto e = codebook.embedding(c);
        for (int j = 0; j < dim; ++j) target[j] += e[j];
        target_d += dist[c];
      }
      for (double& t : target) t /= static_cast<double>(pool.size());
      target_d /= static_cast<double>(pool.size());
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const TokenId c = pool[pick(rng)];
      out.targets[i] = c;
      const auto e = codebook.embedding(c);
      for (int j = 0; j < dim; ++j) target[j] = e[j];
      target_d = dist[c];
    }
    layer_sum[r.layer] += target_d + lse;
    const double scale = 1.0 / (static_cast<double>(depth) * per_layer[r.layer]);
    auto& g = out.grad[i];
    g.resize(dim);
    for (int j = 0; j < dim; ++j) g[j] = scale * 2.0 * (expected[j] - target[j]);
  }
  for (int l = 0; l < depth; ++l) {
    if (per_layer[l] > 0) out.value += layer_sum[l] / per_layer[l];
  }
  out.value /= depth;
  return out;
}

CommitmentLoss commitment_loss(const LatentGrid& z,
                               std::span<const LatentGrid> reconstructions) {
  CommitmentLoss out;
  out.grad = LatentGrid(z.rows, z.cols, z.dim);
  const double n = static_cast<double>(z.values.size());
  for (const auto& rec : reconstructions) {
    if (rec.rows != z.rows || rec.cols != z.cols || rec.dim != z.dim) {
      throw InvalidArgument("commitment: reconstruction shape differs from Z");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < z.values.size(); ++i) {
      const double d = z.values[i] - rec.values[i];
      sq += d * d;
      out.grad.values[i] += 2.0 * d / n;
    }
    out.per_layer.push_back(sq / n);
    out.value += sq / n;
  }
  return out;
}

double plugin_weight(const LossWeights& w, AppearancePlugin::Weight key) {
  switch (key) {
    case AppearancePlugin::Weight::kLambda: return w.lambda;
    case AppearancePlugin::Weight::kEta: return w.eta;
    case AppearancePlugin::Weight::kPhi: return w.phi;
  }
  return 0.0;
}

AppearanceLoss appearance_loss(const Image& real, const Image& reconstruction,
                               const LatentGrid& z,
                               std::span<const LatentGrid> reconstructions,
                               const LossWeights& weights,
                               std::span<const std::shared_ptr<AppearancePlugin>> plugins) {
  if (!real.same_shape(reconstruction)) {
    throw InvalidArgument("appearance: image shapes differ");
  }
  AppearanceLoss out;
  const double n = static_cast<double>(real.pixels.size());
  out.grad_reconstruction = Image(real.height, real.width, real.channels);
  for (std::size_t i = 0; i < real.pixels.size(); ++i) {
    const double d = static_cast<double>(reconstruction.pixels[i]) - real.pixels[i];
    out.pixel += d * d;
    out.grad_reconstruction.pixels[i] = static_cast<float>(2.0 * d / n);
  }
  out.pixel /= n;
  out.commitment = commitment_loss(z, reconstructions);
  out.value = out.pixel + weights.beta * out.commitment.value;
  for (const auto& plugin : plugins) {
    AppearancePlugin::Result r;
    try {
      r = plugin->evaluate(real, reconstruction);
    } catch (const std::exception& e) {
      throw Error("appearance plug-in '" + plugin->name() + "' failed: " + e.what());
    }
    const double w = plugin_weight(weights, plugin->weight());
    out.plugin_terms[plugin->name()] = r.value;
    out.value += w * r.value;
    if (!r.grad.pixels.empty()) {
      if (!r.grad.same_shape(real)) {
        throw Error("appearance plug-in '" + plugin->name() + "' returned a bad gradient");
      }
      for (std::size_t i = 0; i < r.grad.pixels.size(); ++i) {
        out.grad_reconstruction.pixels[i] += static_cast<float>(w * r.grad.pixels[i]);
      }
    }
  }
  return out;
}

double dynamic_weight(double appearance, double semantic) {
  return semantic > 0.0 ? appearance / semantic : 0.0;
}

LossBreakdown total_loss(double appearance, double semantic, const LossWeights& weights) {
  LossBreakdown b;
  b.appearance = appearance;
  b.semantic = semantic;
  b.dynamic_weight = dynamic_weight(appearance, semantic);
  b.total = appearance + weights.alpha * b.dynamic_weight * semantic;
  return b;
}

ImageObjective image_objective(const Image& real, const Image& reconstruction,
                               const LatentGrid& z, const Quantization& quantization,
                               std::span<const LatentGrid> reconstructions,
                               const std::vector<std::vector<TokenId>>& pools,
                               const LexicalCodebook& codebook, QuantizerKind kind,
                               const LossWeights& weights, std::uint64_t seed,
                               bool pool_average,
                               std::span<const std::shared_ptr<AppearancePlugin>> plugins) {
  ImageObjective out;
  out.appearance =
      appearance_loss(real, reconstruction, z, reconstructions, weights, plugins);
  out.semantic = semantic_loss(quantization.remainders, pools, codebook, seed, pool_average);
  out.grad_z_appearance = LatentGrid(z.rows, z.cols, z.dim);
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    out.grad_z_appearance.values[i] = weights.beta * out.appearance.commitment.grad.values[i];
  }
  out.grad_z_semantic = LatentGrid(z.rows, z.cols, z.dim);
  for (std::size_t i = 0; i < quantization.remainders.size(); ++i) {
    const auto& g = out.semantic.grad[i];
    if (g.empty()) continue;
    const auto& r = quantization.remainders[i];
    const double s = remainder_scale(kind, r.prior);
    auto dst = out.grad_z_semantic.at(r.row, r.col);
    for (int j = 0; j < z.dim; ++j) dst[j] += s * g[j];
  }
  return out;
}

BatchLoss combine_batch(std::span<const ImageObjective> items, const LossWeights& weights) {
  if (items.empty()) throw InvalidArgument("empty batch");
  const double b = static_cast<double>(items.size());
  double app = 0.0;
  double sem = 0.0;
  LossBreakdown acc;
  for (const auto& it : items) {
    app += it.appearance.value;
    sem += it.semantic.value;
    acc.pixel += it.appearance.pixel;
    acc.commitment += it.appearance.commitment.value;
    acc.commitment_per_layer.resize(it.appearance.commitment.per_layer.size(), 0.0);
    for (std::size_t l = 0; l < it.appearance.commitment.per_layer.size(); ++l) {
      acc.commitment_per_layer[l] += it.appearance.commitment.per_layer[l] / b;
    }
    for (const auto& [k, v] : it.appearance.plugin_terms) acc.plugin_terms[k] += v / b;
  }
  BatchLoss out;
  out.breakdown = total_loss(app / b, sem / b, weights);
  out.breakdown.pixel = acc.pixel / b;
  out.breakdown.commitment = acc.commitment / b;
  out.breakdown.commitment_per_layer = std::move(acc.commitment_per_layer);
  out.breakdown.plugin_terms = std::move(acc.plugin_terms);
  out.appearance_scale = 1.0 / b;
  out.semantic_scale = weights.alpha * out.breakdown.dynamic_weight / b;
  return out;
}

struct PatchDiscriminator::Impl {
  nn::Sequential<float> net;
  nn::Adam<float> adam{nn::AdamConfig{0.5, 0.999, 1e-8, 0.0}};
  double lr;
  std::vector<nn::Param<float>*> params;
};

PatchDiscriminator::PatchDiscriminator(int channels, int filters, double learning_rate,
                                       std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  std::mt19937_64 rng(seed);
  impl_->lr = learning_rate;
  impl_->net.add("conv0", std::make_unique<nn::Conv2d<float>>(channels, filters, 3, 2, 1, rng));
  impl_->net.add("act0", std::make_unique<nn::SiLU<float>>());
  impl_->net.add("conv1",
                 std::make_unique<nn::Conv2d<float>>(filters, 2 * filters, 3, 2, 1, rng));
  impl_->net.add("act1", std::make_unique<nn::SiLU<float>>());
  impl_->net.add("conv2", std::make_unique<nn::Conv2d<float>>(2 * filters, 1, 3, 1, 1, rng));
  impl_->net.collect("disc", impl_->params);
}

PatchDiscriminator::~PatchDiscriminator() = default;

AppearancePlugin::Result PatchDiscriminator::evaluate(const Image& real,
                                                      const Image& reconstruction) {
  auto& net = impl_->net;
  const auto fake = images_to_tensor<float>(std::span(&reconstruction, 1));
  const auto truth = images_to_tensor<float>(std::span(&real, 1));

  Result out;
  auto logits = net.forward(fake);
  const double n = static_cast<double>(logits.size());
  double mean = 0.0;
  for (float v : logits.data) mean += v;
  out.value = -mean / n;
  nn::Tensor<float> g(logits.c, logits.n, logits.h, logits.w);
  for (float& v : g.data) v = static_cast<float>(-1.0 / n);
  out.grad = tensor_to_images(net.backward(g)).front();
  nn::zero_grad(impl_->params);

  // Hinge update: relu(1 - D(real)) + relu(1 + D(fake)).
  auto step = [&](const nn::Tensor<float>& x, double sign) {
    auto y = net.forward(x);
    nn::Tensor<float> gy(y.c, y.n, y.h, y.w);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool active = 1.0 - sign * y.data[i] > 0.0;
      gy.data[i] = active ? static_cast<float>(-sign / n) : 0.0f;
    }
    net.backward(gy);
  };
  step(truth, 1.0);
  step(fake, -1.0);
  impl_->adam.step(impl_->params, impl_->lr);
  nn::zero_grad(impl_->params);
  return out;
}

}  // namespace lexpyr
