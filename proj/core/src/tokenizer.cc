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


#include "lexpyr/tokenizer.h"

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

constexpr int kBatch = 64;

}  // namespace

Tokenizer::Tokenizer(std::unique_ptr<Autoencoder<float>> model, LexicalCodebook codebook,
                     PyramidSpec spec, QuantizerKind kind)
    : model_(std::move(model)), codebook_(std::move(codebook)), spec_(std::move(spec)),
      kind_(kind) {
  spec_.validate();
  const auto& net = model_->config();
  if (net.latent_dim != spec_.latent_dim || codebook_.dim() != spec_.latent_dim) {
    throw InvalidArgument("model, codebook and pyramid disagree on latent_dim");
  }
  if (net.latent_height() != spec_.grid_rows() || net.latent_width() != spec_.grid_cols()) {
    throw InvalidArgument("pyramid grid does not match the encoder output");
  }
}

std::vector<LatentGrid> Tokenizer::latents(std::span<const Image> images) {
  std::vector<LatentGrid> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); i += kBatch) {
    const auto n = std::min<std::size_t>(kBatch, images.size() - i);
    for (std::size_t k = i; k < i + n; ++k) {
      const auto& net = model_->config();
      if (images[k].height != net.input_height || images[k].width != net.input_width ||
          images[k].channels != net.in_channels) {
        throw InvalidArgument("image shape does not match the model input");
      }
    }
    auto z = tensor_to_latents(model_->encode(images_to_tensor<float>(images.subspan(i, n))));
    for (auto& g : z) out.push_back(std::move(g));
  }
  return out;
}

TokenPyramid Tokenizer::encode(const Image& image) {
  return encode_batch(std::span<const Image>(&image, 1)).front();
}

std::vector<TokenPyramid> Tokenizer::encode_batch(std::span<const Image> images) {
  std::vector<TokenPyramid> out;
  out.reserve(images.size());
  for (const auto& z : latents(images)) {
    out.push_back(encode_pyramid(z, codebook_, spec_, kind_).pyramid);
  }
  return out;
}

Image Tokenizer::decode(const TokenPyramid& pyramid, int depth) {
  if (depth < 1 || depth > spec_.depth()) {
    throw InvalidArgument("decode depth " + std::to_string(depth) + " outside [1, " +
                          std::to_string(spec_.depth()) + "]");
  }
  pyramid.validate(codebook_.size());
  const auto layers = reconstruct_layers(pyramid, codebook_, kind_);
  return decode_embeddings(*model_, layers[depth - 1]);
}

std::vector<Image> Tokenizer::decode_depths(const TokenPyramid& pyramid) {
  pyramid.validate(codebook_.size());
  const auto layers = reconstruct_layers(pyramid, codebook_, kind_);
  return tensor_to_images(model_->decode(latents_to_tensor<float>(layers)));
}

std::string Tokenizer::to_string(const TokenPyramid& pyramid, int up_to_layer) const {
  return flatten(pyramid, codebook_, up_to_layer > 0 ? up_to_layer : spec_.depth());
}

TrainConfig checkpoint_train_config(const Checkpoint& ckpt) {
  if (!ckpt.extra.contains("train_config")) {
    throw FormatError("checkpoint carries no training config");
  }
  return train_config_from_json(ckpt.extra.at("train_config"));
}

Tokenizer load_tokenizer(const std::filesystem::path& checkpoint) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto config = checkpoint_train_config(ckpt);
  auto codebook = build_codebook(config.codebook, config.net.latent_dim, config.semantic);
  if (ckpt.extra.contains("codebook_checksum") &&
      ckpt.extra.at("codebook_checksum").get<std::uint64_t>() != codebook.embedding_checksum()) {
    throw FormatError("codebook does not match the one used for training");
  }
  auto model = std::make_unique<Autoencoder<float>>(ckpt.net, 0);
  restore_checkpoint(ckpt, *model, nullptr);
  return Tokenizer(std::move(model), std::move(codebook), config.spec, config.quantizer);
}

}  // namespace lexpyr
