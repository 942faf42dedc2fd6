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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order");

constexpr char kMagic[8] = {'L', 'E', 'X', 'P', 'Y', 'R', 'C', 'K'};

template <typename T>
std::unique_ptr<nn::Module<T>> res(int in, int out, int groups, std::mt19937_64& rng) {
  return std::make_unique<nn::ResBlock<T>>(in, out, groups, rng);
}

template <typename T>
std::unique_ptr<nn::Module<T>> conv(int in, int out, int k, int s, int p,
                                    std::mt19937_64& rng) {
  return std::make_unique<nn::Conv2d<T>>(in, out, k, s, p, rng);
}

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void NetConfig::validate() const {
  if (input_height < 1 || input_width < 1 || in_channels < 1 || base_filters < 1 ||
      residual_blocks_per_scale < 0 || mid_blocks < 0 || latent_dim < 1 ||
      norm_groups < 1 || channel_multipliers.empty()) {
    throw InvalidArgument("network config values must be positive");
  }
  for (int m : channel_multipliers) {
    if (m < 1) throw InvalidArgument("channel multipliers must be positive");
    if ((base_filters * m) % norm_groups != 0) {
      throw InvalidArgument("channel count " + std::to_string(base_filters * m) +
                            " not divisible by norm_groups");
    }
  }
  const int f = downsample_factor();
  if (input_height % f != 0 || input_width % f != 0) {
    throw InvalidArgument("input " + std::to_string(input_height) + "x" +
                          std::to_string(input_width) + " not divisible by " +
                          std::to_string(f));
  }
  if (norm != "group") throw InvalidArgument("unsupported norm '" + norm + "'");
  if (activation != "silu") {
    throw InvalidArgument("unsupported activation '" + activation + "'");
  }
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"input_height", c.input_height},
       {"input_width", c.input_width},
       {"in_channels", c.in_channels},
       {"base_filters", c.base_filters},
       {"channel_multipliers", c.channel_multipliers},
       {"residual_blocks_per_scale", c.residual_blocks_per_scale},
       {"mid_blocks", c.mid_blocks},
       {"latent_dim", c.latent_dim},
       {"norm_groups", c.norm_groups},
       {"norm", c.norm},
       {"activation", c.activation}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  NetConfig d;
  c.input_height = j.value("input_height", d.input_height);
  c.input_width = j.value("input_width", d.input_width);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.base_filters = j.value("base_filters", d.base_filters);
  c.channel_multipliers = j.value("channel_multipliers", d.channel_multipliers);
  c.residual_blocks_per_scale = j.value("residual_blocks_per_scale", d.residual_blocks_per_scale);
  c.mid_blocks = j.value("mid_blocks", d.mid_blocks);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
  c.norm = j.value("norm", d.norm);
  c.activation = j.value("activation", d.activation);
}

template <typename T>
Autoencoder<T>::Autoencoder(const NetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& mult = config_.channel_multipliers;
  const int levels = static_cast<int>(mult.size());
  const int g = config_.norm_groups;
  const int nres = config_.residual_blocks_per_scale;

  int ch = config_.base_filters * mult[0];
  encoder_.add("conv_in", conv<T>(config_.in_channels, ch, 3, 1, 1, rng));
  for (int i = 0; i < levels; ++i) {
    const int out = config_.base_filters * mult[i];
    for (int r = 0; r < nres; ++r) {
      encoder_.add("down" + std::to_string(i) + ".block" + std::to_string(r),
                   res<T>(ch, out, g, rng));
      ch = out;
    }
    if (i + 1 < levels) {
      encoder_.add("down" + std::to_string(i) + ".downsample", conv<T>(ch, ch, 3, 2, 1, rng));
    }
  }
  for (int r = 0; r < config_.mid_blocks; ++r) {
    encoder_.add("mid.block" + std::to_string(r), res<T>(ch, ch, g, rng));
  }
  encoder_.add("norm_out", std::make_unique<nn::GroupNorm<T>>(g, ch));
  encoder_.add("act_out", std::make_unique<nn::SiLU<T>>());
  encoder_.add("conv_out", conv<T>(ch, config_.latent_dim, 3, 1, 1, rng));

  ch = config_.base_filters * mult[levels - 1];
  decoder_.add("conv_in", conv<T>(config_.latent_dim, ch, 3, 1, 1, rng));
  for (int r = 0; r < config_.mid_blocks; ++r) {
    decoder_.add("mid.block" + std::to_string(r), res<T>(ch, ch, g, rng));
  }
  for (int i = levels - 1; i >= 0; --i) {
    const int out = config_.base_filters * mult[i];
    for (int r = 0; r < nres; ++r) {
      decoder_.add("up" + std::to_string(i) + ".block" + std::to_string(r),
                   res<T>(ch, out, g, rng));
      ch = out;
    }
    if (i > 0) {
      decoder_.add("up" + std::to_string(i) + ".upsample",
                   std::make_unique<nn::Upsample2x<T>>());
      decoder_.add("up" + std::to_string(i) + ".conv", conv<T>(ch, ch, 3, 1, 1, rng));
    }
  }
  decoder_.add("norm_out", std::make_unique<nn::GroupNorm<T>>(g, ch));
  decoder_.add("act_out", std::make_unique<nn::SiLU<T>>());
  decoder_.add("conv_out", conv<T>(ch, config_.in_channels, 3, 1, 1, rng));
  decoder_.add("squash", std::make_unique<nn::Sigmoid<T>>());
}

template <typename T>
nn::Tensor<T> Autoencoder<T>::encode(const nn::Tensor<T>& images) {
  if (images.c != config_.in_channels || images.h != config_.input_height ||
      images.w != config_.input_width) {
    throw InvalidArgument("encoder input shape mismatch");
  }
  return encoder_.forward(images);
}

template <typename T>
nn::Tensor<T> Autoencoder<T>::encode_backward(const nn::Tensor<T>& g) {
  return encoder_.backward(g);
}

template <typename T>
nn::Tensor<T> Autoencoder<T>::decode(const nn::Tensor<T>& latent) {
  if (latent.c != config_.latent_dim || latent.h != config_.latent_height() ||
      latent.w != config_.latent_width()) {
    throw InvalidArgument("decoder input shape mismatch");
  }
  return decoder_.forward(latent);
}

template <typename T>
nn::Tensor<T> Autoencoder<T>::decode_backward(const nn::Tensor<T>& g) {
  return decoder_.backward(g);
}

template <typename T>
std::vector<nn::Param<T>*> Autoencoder<T>::encoder_parameters() {
  std::vector<nn::Param<T>*> out;
  encoder_.collect("encoder", out);
  return out;
}

template <typename T>
std::vector<nn::Param<T>*> Autoencoder<T>::decoder_parameters() {
  std::vector<nn::Param<T>*> out;
  decoder_.collect("decoder", out);
  return out;
}

template <typename T>
std::vector<nn::Param<T>*> Autoencoder<T>::parameters() {
  auto out = encoder_parameters();
  const auto dec = decoder_parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

template <typename T>
std::size_t Autoencoder<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template class Autoencoder<float>;
template class Autoencoder<double>;

template <typename T>
nn::Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("empty image batch");
  const Image& first = images.front();
  nn::Tensor<T> t(first.channels, static_cast<int>(images.size()), first.height, first.width);
  for (int b = 0; b < t.n; ++b) {
    const Image& img = images[b];
    if (!img.same_shape(first)) throw InvalidArgument("image batch has mixed shapes");
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        for (int ch = 0; ch < t.c; ++ch) t.at(ch, b, y, x) = static_cast<T>(img.at(y, x, ch));
      }
    }
  }
  return t;
}

template <typename T>
std::vector<Image> tensor_to_images(const nn::Tensor<T>& t) {
  std::vector<Image> out;
  out.reserve(t.n);
  for (int b = 0; b < t.n; ++b) {
    Image img(t.h, t.w, t.c);
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        for (int ch = 0; ch < t.c; ++ch) img.at(y, x, ch) = static_cast<float>(t.at(ch, b, y, x));
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

template <typename T>
nn::Tensor<T> latents_to_tensor(std::span<const LatentGrid> latents) {
  if (latents.empty()) throw InvalidArgument("empty latent batch");
  const LatentGrid& first = latents.front();
  nn::Tensor<T> t(first.dim, static_cast<int>(latents.size()), first.rows, first.cols);
  for (int b = 0; b < t.n; ++b) {
    const LatentGrid& z = latents[b];
    if (z.rows != first.rows || z.cols != first.cols || z.dim != first.dim) {
      throw InvalidArgument("latent batch has mixed shapes");
    }
    for (int r = 0; r < t.h; ++r) {
      for (int c = 0; c < t.w; ++c) {
        const auto v = z.at(r, c);
        for (int d = 0; d < t.c; ++d) t.at(d, b, r, c) = static_cast<T>(v[d]);
      }
    }
  }
  return t;
}

template <typename T>
std::vector<LatentGrid> tensor_to_latents(const nn::Tensor<T>& t) {
  std::vector<LatentGrid> out;
  out.reserve(t.n);
  for (int b = 0; b < t.n; ++b) {
    LatentGrid z(t.h, t.w, t.c);
    for (int r = 0; r < t.h; ++r) {
      for (int c = 0; c < t.w; ++c) {
        auto v = z.at(r, c);
        for (int d = 0; d < t.c; ++d) v[d] = static_cast<double>(t.at(d, b, r, c));
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

#define LEXPYR_AE_INSTANTIATE(T)                                                   \
  template nn::Tensor<T> images_to_tensor<T>(std::span<const Image>);              \
  template std::vector<Image> tensor_to_images<T>(const nn::Tensor<T>&);           \
  template nn::Tensor<T> latents_to_tensor<T>(std::span<const LatentGrid>);        \
  template std::vector<LatentGrid> tensor_to_latents<T>(const nn::Tensor<T>&);

LEXPYR_AE_INSTANTIATE(float)
LEXPYR_AE_INSTANTIATE(double)

LatentGrid encode_image(Autoencoder<float>& model, const Image& image) {
  const auto& cfg = model.config();
  if (image.height != cfg.input_height || image.width != cfg.input_width ||
      image.channels != cfg.in_channels) {
    throw InvalidArgument("image is " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + "x" + std::to_string(image.channels) +
                          ", model expects " + std::to_string(cfg.input_height) + "x" +
                          std::to_string(cfg.input_width) + "x" +
                          std::to_string(cfg.in_channels));
  }
  auto z = tensor_to_latents(model.encode(images_to_tensor<float>(std::span(&image, 1))));
  for (double v : z.front().values) {
    if (!std::isfinite(v)) throw InvalidArgument("encoder produced non-finite activations");
  }
  return std::move(z.front());
}

Image decode_embeddings(Autoencoder<float>& model, const LatentGrid& z) {
  for (double v : z.values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite embedding");
  }
  auto images = tensor_to_images(model.decode(latents_to_tensor<float>(std::span(&z, 1))));
  return std::move(images.front());
}

Checkpoint make_checkpoint(Autoencoder<float>& model, const nn::Adam<float>* adam,
                           std::int64_t step) {
  Checkpoint c;
  c.net = model.config();
  c.step = step;
  for (const auto* p : model.parameters()) {
    c.names.push_back(p->name);
    c.params.push_back(p->value);
  }
  if (adam != nullptr && !adam->first_moment().empty()) {
    c.adam_steps = adam->steps();
    c.adam_m = adam->first_moment();
    c.adam_v = adam->second_moment();
  }
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, Autoencoder<float>& model,
                        nn::Adam<float>* adam) {
  if (!(ckpt.net == model.config())) {
    throw InvalidArgument("checkpoint network config differs from the model");
  }
  const auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.size() != ckpt.params[i].size() || params[i]->name != ckpt.names[i]) {
      throw FormatError("checkpoint tensor " + ckpt.names[i] + " does not match the model");
    }
    params[i]->value = ckpt.params[i];
  }
  if (adam != nullptr && !ckpt.adam_m.empty()) {
    adam->first_moment() = ckpt.adam_m;
    adam->second_moment() = ckpt.adam_v;
    adam->set_steps(ckpt.adam_steps);
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["net"] = ckpt.net;
  header["step"] = ckpt.step;
  header["adam_steps"] = ckpt.adam_steps;
  header["has_adam"] = !ckpt.adam_m.empty();
  header["extra"] = ckpt.extra;
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    tensors.push_back({{"name", ckpt.names[i]}, {"size", ckpt.params[i].size()}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::uint64_t h = 1469598103934665603ull;
    auto put = [&](const std::vector<float>& v) {
      const auto* bytes = reinterpret_cast<const char*>(v.data());
      const std::size_t n = v.size() * sizeof(float);
      out.write(bytes, static_cast<std::streamsize>(n));
      h = fnv1a(bytes, n, h);
    };
    for (const auto& v : ckpt.params) put(v);
    for (const auto& v : ckpt.adam_m) put(v);
    for (const auto& v : ckpt.adam_v) put(v);
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t len = 0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
    throw FormatError("truncated checkpoint header");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw FormatError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.net = header.at("net").get<NetConfig>();
  c.step = header.at("step").get<std::int64_t>();
  c.adam_steps = header.value("adam_steps", std::int64_t{0});
  c.extra = header.value("extra", nlohmann::json::object());
  std::uint64_t h = 1469598103934665603ull;
  auto take = [&](std::size_t n) {
    std::vector<float> v(n);
    const std::size_t bytes = n * sizeof(float);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes))) {
      throw FormatError("truncated checkpoint blob");
    }
    h = fnv1a(reinterpret_cast<const char*>(v.data()), bytes, h);
    return v;
  };
  std::vector<std::size_t> sizes;
  for (const auto& t : header.at("tensors")) {
    c.names.push_back(t.at("name").get<std::string>());
    sizes.push_back(t.at("size").get<std::size_t>());
  }
  for (std::size_t n : sizes) c.params.push_back(take(n));
  if (header.value("has_adam", false)) {
    for (std::size_t n : sizes) c.adam_m.push_back(take(n));
    for (std::size_t n : sizes) c.adam_v.push_back(take(n));
  }
  std::uint64_t stored = 0;
  if (!in.read(reinterpret_cast<char*>(&stored), sizeof(stored)) || stored != h) {
    throw FormatError("checkpoint checksum mismatch");
  }
  return c;
}

}  // namespace lexpyr
