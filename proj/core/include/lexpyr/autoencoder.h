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


#ifndef LEXPYR_AUTOENCODER_H_
#define LEXPYR_AUTOENCODER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexpyr/image.h"
#include "lexpyr/nn.h"
#include "lexpyr/pyramid.h"

namespace lexpyr {

struct NetConfig {
  int input_height = 32;
  int input_width = 32;
  int in_channels = 1;
  int base_filters = 64;
  std::vector<int> channel_multipliers = {1, 2, 2, 4};
  int residual_blocks_per_scale = 2;
  int mid_blocks = 2;
  int latent_dim = 32;
  int norm_groups = 8;
  std::string norm = "group";
  std::string activation = "silu";

  // Throws InvalidArgument on a non-positive size or an input that does not
  // divide by the downsampling factor.
  void validate() const;
  int downsample_factor() const { return 1 << (channel_multipliers.size() - 1); }
  int latent_height() const { return input_height / downsample_factor(); }
  int latent_width() const { return input_width / downsample_factor(); }
  bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

// Strided conv encoder and mirrored nearest-upsampling decoder with
// residual blocks per scale and a sigmoid output.
template <typename T>
class Autoencoder {
 public:
  Autoencoder(const NetConfig& config, std::uint64_t seed);
  Autoencoder(const Autoencoder&) = delete;
  Autoencoder& operator=(const Autoencoder&) = delete;

  const NetConfig& config() const { return config_; }

  // [in_channels][N][H][W] -> [latent_dim][N][h][w]. Caches activations for
  // encode_backward.
  nn::Tensor<T> encode(const nn::Tensor<T>& images);
  nn::Tensor<T> encode_backward(const nn::Tensor<T>& grad_latent);
  nn::Tensor<T> decode(const nn::Tensor<T>& latent);
  nn::Tensor<T> decode_backward(const nn::Tensor<T>& grad_images);

  std::vector<nn::Param<T>*> parameters();
  std::vector<nn::Param<T>*> encoder_parameters();
  std::vector<nn::Param<T>*> decoder_parameters();
  std::size_t parameter_count();

 private:
  NetConfig config_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> decoder_;
};

extern template class Autoencoder<float>;
extern template class Autoencoder<double>;

template <typename T>
nn::Tensor<T> images_to_tensor(std::span<const Image> images);
template <typename T>
std::vector<Image> tensor_to_images(const nn::Tensor<T>& t);
template <typename T>
nn::Tensor<T> latents_to_tensor(std::span<const LatentGrid> latents);
template <typename T>
std::vector<LatentGrid> tensor_to_latents(const nn::Tensor<T>& t);

// Single-image inference helpers. Throw InvalidArgument on shape mismatch
// or non-finite values.
LatentGrid encode_image(Autoencoder<float>& model, const Image& image);
Image decode_embeddings(Autoencoder<float>& model, const LatentGrid& z);

struct Checkpoint {
  NetConfig net;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<float>> params;
  std::int64_t adam_steps = 0;
  std::vector<std::vector<float>> adam_m;  // empty when not saved
  std::vector<std::vector<float>> adam_v;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr int kCheckpointVersion = 1;

// Binary layout: 8-byte magic "LEXPYRCK", u32 header length, JSON header,
// float32 blob (params, then Adam moments), u64 FNV-1a of the blob.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(Autoencoder<float>& model, const nn::Adam<float>* adam,
                           std::int64_t step);
// Copies parameters (and Adam state when given and present) into the model.
void restore_checkpoint(const Checkpoint& ckpt, Autoencoder<float>& model,
                        nn::Adam<float>* adam);

}  // namespace lexpyr

#endif  // LEXPYR_AUTOENCODER_H_
