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


#ifndef LEXPYR_OBJECTIVES_H_
#define LEXPYR_OBJECTIVES_H_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lexpyr/codebook.h"
#include "lexpyr/image.h"
#include "lexpyr/pyramid.h"

namespace lexpyr {

struct LossWeights {
  double alpha = 1.0;    // semantic
  double beta = 0.33;    // commitment
  double lambda = 0.1;   // adversarial plug-in
  double eta = 0.1;      // perceptual plug-in
  double phi = 1e-4;     // LeCAM plug-in
  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct LossBreakdown {
  double appearance = 0.0;
  double semantic = 0.0;
  double dynamic_weight = 0.0;
  double total = 0.0;
  double pixel = 0.0;
  double commitment = 0.0;
  std::vector<double> commitment_per_layer;
  std::map<std::string, double> plugin_terms;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);

// Per-layer candidate pools for the semantic layers; throws InvalidArgument
// naming the first layer whose pool is empty.
std::vector<std::vector<TokenId>> semantic_pools(const SimilarityProfile& profile,
                                                 const PyramidSpec& spec);

struct SemanticLoss {
  double value = 0.0;
  // d value / d remainder, aligned with the remainders passed in. Entries for
  // layers outside the semantic range are empty.
  std::vector<std::vector<double>> grad;
  std::vector<TokenId> targets;  // sampled target per remainder, -1 if unused
};

// Cross entropy of a softmax over negative squared distances, with one
// target drawn uniformly from the layer's pool per remainder (or the
// average over the pool when `pool_average`). Averaged over positions
// within each layer, then over layers. The codebook is a constant.
SemanticLoss semantic_loss(std::span<const Remainder> remainders,
                           const std::vector<std::vector<TokenId>>& pools,
                           const LexicalCodebook& codebook, std::uint64_t seed,
                           bool pool_average = false);

struct CommitmentLoss {
  double value = 0.0;
  std::vector<double> per_layer;
  LatentGrid grad;  // d value / dZ; reconstructions are constants
};

CommitmentLoss commitment_loss(const LatentGrid& z,
                               std::span<const LatentGrid> reconstructions);

// Optional appearance term evaluated on one image pair.
class AppearancePlugin {
 public:
  enum class Weight { kLambda, kEta, kPhi };
  struct Result {
    double value = 0.0;
    Image grad;  // d value / d reconstruction; empty when not differentiable
  };
  virtual ~AppearancePlugin() = default;
  virtual std::string name() const = 0;
  virtual Weight weight() const = 0;
  virtual Result evaluate(const Image& real, const Image& reconstruction) = 0;
};

double plugin_weight(const LossWeights& w, AppearancePlugin::Weight key);

struct AppearanceLoss {
  double value = 0.0;
  double pixel = 0.0;
  CommitmentLoss commitment;
  std::map<std::string, double> plugin_terms;
  Image grad_reconstruction;  // d value / d reconstruction
};

// Mean squared pixel error + beta * commitment + weighted plug-in terms.
AppearanceLoss appearance_loss(const Image& real, const Image& reconstruction,
                               const LatentGrid& z,
                               std::span<const LatentGrid> reconstructions,
                               const LossWeights& weights,
                               std::span<const std::shared_ptr<AppearancePlugin>> plugins = {});

// L_app / L_sem, or 0 when L_sem is 0. Treated as a constant.
double dynamic_weight(double appearance, double semantic);

LossBreakdown total_loss(double appearance, double semantic, const LossWeights& weights);

// Everything the trainer needs for one image: the loss pieces, the true
// gradient with respect to Z (quantization is piecewise constant, so the
// pixel term contributes nothing here), and the pixel-space gradient for
// the decoder.
struct ImageObjective {
  AppearanceLoss appearance;
  SemanticLoss semantic;
  LatentGrid grad_z_appearance;  // beta * d commitment / dZ
  LatentGrid grad_z_semantic;    // d semantic / dZ
};

ImageObjective image_objective(const Image& real, const Image& reconstruction,
                               const LatentGrid& z, const Quantization& quantization,
                               std::span<const LatentGrid> reconstructions,
                               const std::vector<std::vector<TokenId>>& pools,
                               const LexicalCodebook& codebook, QuantizerKind kind,
                               const LossWeights& weights, std::uint64_t seed,
                               bool pool_average = false,
                               std::span<const std::shared_ptr<AppearancePlugin>> plugins = {});

// Batch combination: appearance and semantic are batch means, the dynamic
// weight is computed once per batch, and per-image gradient scales are
// returned as (appearance scale, semantic scale) = (1/B, alpha*w/B).
struct BatchLoss {
  LossBreakdown breakdown;
  double appearance_scale = 0.0;
  double semantic_scale = 0.0;
};
BatchLoss combine_batch(std::span<const ImageObjective> items, const LossWeights& weights);

// Minimal hinge-loss patch discriminator. The generator term is
// -mean(D(reconstruction)); each evaluate() also takes one discriminator
// step on the pair.
class PatchDiscriminator : public AppearancePlugin {
 public:
  PatchDiscriminator(int channels, int filters, double learning_rate, std::uint64_t seed);
  ~PatchDiscriminator() override;
  std::string name() const override { return "patch_gan"; }
  Weight weight() const override { return Weight::kLambda; }
  Result evaluate(const Image& real, const Image& reconstruction) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lexpyr

#endif  // LEXPYR_OBJECTIVES_H_
