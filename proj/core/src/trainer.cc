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


#include "lexpyr/trainer.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace lexpyr {
namespace fs = std::filesystem;
namespace {

std::vector<unsigned char> read_maybe_gzip(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt compressed file " + path.string());
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || base.empty()) return p;
  return fs::weakly_canonical(fs::absolute(base / p));
}

std::vector<int> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> u(0, i - 1);
    std::swap(p[i - 1], p[u(rng)]);
  }
  return p;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the three words.
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

Dataset load_mnist(const fs::path& images, const fs::path& labels) {
  const auto img = read_maybe_gzip(images);
  const auto lab = read_maybe_gzip(labels);
  if (img.size() < 16 || be32(img, 0) != 0x00000803) {
    throw FormatError(images.string() + ": bad IDX image magic");
  }
  if (lab.size() < 8 || be32(lab, 0) != 0x00000801) {
    throw FormatError(labels.string() + ": bad IDX label magic");
  }
  const std::size_t count = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  if (img.size() != 16 + count * rows * cols) {
    throw FormatError(images.string() + ": truncated image data");
  }
  const std::size_t label_count = be32(lab, 4);
  if (label_count != count || lab.size() != 8 + label_count) {
    throw FormatError("label count " + std::to_string(label_count) +
                      " does not match image count " + std::to_string(count));
  }
  const int padded_h = 32 > static_cast<int>(rows) ? 32 : static_cast<int>(rows);
  const int padded_w = 32 > static_cast<int>(cols) ? 32 : static_cast<int>(cols);
  const int top = (padded_h - static_cast<int>(rows)) / 2;
  const int left = (padded_w - static_cast<int>(cols)) / 2;
  Dataset ds;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ImageSample s;
    s.image = Image(padded_h, padded_w, 1);
    const unsigned char* src = img.data() + 16 + i * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        s.image.at(top + static_cast<int>(r), left + static_cast<int>(c), 0) =
            src[r * cols + c] / 255.0f;
      }
    }
    s.label = lab[8 + i];
    s.index = static_cast<std::int64_t>(i);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_mnist_dir(const fs::path& dir) {
  auto find = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) {
      if (fs::exists(dir / n)) return dir / n;
    }
    throw FormatError("no MNIST file like " + std::string(*names.begin()) + " in " +
                      dir.string());
  };
  return load_mnist(find({"images-idx3-ubyte.gz", "images-idx3-ubyte",
                          "train-images-idx3-ubyte.gz", "train-images-idx3-ubyte"}),
                    find({"labels-idx1-ubyte.gz", "labels-idx1-ubyte",
                          "train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte"}));
}

Dataset synthetic_dataset(int count, int size, int channels, int classes, std::uint64_t seed) {
  if (count < 1 || size < 1 || channels < 1 || classes < 1) {
    throw InvalidArgument("bad synthetic dataset parameters");
  }
  Dataset ds;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  for (int i = 0; i < count; ++i) {
    ImageSample s;
    s.label = i % classes;
    s.index = i;
    s.image = Image(size, size, channels);
    const double angle = 2.0 * 3.14159265358979 * s.label / classes;
    const double cy = 0.5 + 0.25 * std::sin(angle) + jitter(rng);
    const double cx = 0.5 + 0.25 * std::cos(angle) + jitter(rng);
    const double sigma = 0.12 + 0.5 * std::abs(jitter(rng));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = (y + 0.5) / size - cy;
        const double dx = (x + 0.5) / size - cx;
        const double v = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
        for (int c = 0; c < channels; ++c) {
          s.image.at(y, x, c) = static_cast<float>(v * (1.0 - 0.2 * c));
        }
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_train_validation(const Dataset& all, int modulo) {
  if (modulo < 2) throw InvalidArgument("validation modulo must be >= 2");
  Dataset train, val;
  for (const auto& s : all.samples) {
    (s.index % modulo == 0 ? val : train).samples.push_back(s);
  }
  return {std::move(train), std::move(val)};
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (total_steps < 1) throw InvalidArgument("total_steps must be >= 1");
  if (warmup_steps < 0 || cooldown_steps < 0 || warmup_steps + cooldown_steps > total_steps) {
    throw InvalidArgument("warmup + cooldown must fit within total_steps");
  }
  if (!(base_lr > 0.0)) throw InvalidArgument("base_lr must be positive");
  if (log_every < 1 || checkpoint_every < 1) {
    throw InvalidArgument("log_every and checkpoint_every must be >= 1");
  }
  weights.validate();
  spec.validate();
  net.validate();
  if (spec.latent_dim != net.latent_dim) {
    throw InvalidArgument("pyramid latent_dim differs from the network latent_dim");
  }
  if (spec.grid_rows() != net.latent_height() || spec.grid_cols() != net.latent_width()) {
    throw InvalidArgument("pyramid grid does not match the encoder output grid");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"total_steps", c.total_steps},
       {"base_lr", c.base_lr},
       {"warmup_steps", c.warmup_steps},
       {"cooldown_steps", c.cooldown_steps},
       {"seed", c.seed},
       {"log_every", c.log_every},
       {"checkpoint_every", c.checkpoint_every},
       {"grad_clip", c.grad_clip},
       {"weights", c.weights},
       {"spec", c.spec},
       {"net", c.net},
       {"quantizer", std::string(quantizer_name(c.quantizer))},
       {"multi_depth", c.multi_depth},
       {"pool_average", c.pool_average},
       {"dataset",
        {{"kind", c.dataset.kind},
         {"path", c.dataset.path.string()},
         {"validation_modulo", c.dataset.validation_modulo},
         {"synthetic_count", c.dataset.synthetic_count},
         {"synthetic_classes", c.dataset.synthetic_classes}}},
       {"codebook",
        {{"kind", c.codebook.kind},
         {"size", c.codebook.size},
         {"seed", c.codebook.seed},
         {"path", c.codebook.path.string()}}},
       {"semantic",
        {{"provider", c.semantic.provider},
         {"dim", c.semantic.dim},
         {"ngram", c.semantic.ngram},
         {"seed", c.semantic.seed},
         {"templates_path", c.semantic.templates_path.string()},
         {"templates", c.semantic.templates},
         {"label_template", c.semantic.label_template},
         {"class_names", c.semantic.class_names},
         {"features_path", c.semantic.features_path.string()},
         {"url", c.semantic.url},
         {"token_env", c.semantic.token_env}}},
       {"output_dir", c.output_dir.string()}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const fs::path& base) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.cooldown_steps = j.value("cooldown_steps", c.cooldown_steps);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
    if (j.contains("spec")) c.spec = j.at("spec").get<PyramidSpec>();
    if (j.contains("net")) c.net = j.at("net").get<NetConfig>();
    c.quantizer = parse_quantizer(j.value("quantizer", std::string("saq")));
    c.multi_depth = j.value("multi_depth", c.multi_depth);
    c.pool_average = j.value("pool_average", c.pool_average);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.kind = d.value("kind", c.dataset.kind);
      c.dataset.path = resolve(base, d.value("path", std::string()));
      c.dataset.validation_modulo = d.value("validation_modulo", c.dataset.validation_modulo);
      c.dataset.synthetic_count = d.value("synthetic_count", c.dataset.synthetic_count);
      c.dataset.synthetic_classes = d.value("synthetic_classes", c.dataset.synthetic_classes);
    }
    if (j.contains("codebook")) {
      const auto& d = j.at("codebook");
      c.codebook.kind = d.value("kind", c.codebook.kind);
      c.codebook.size = d.value("size", c.codebook.size);
      c.codebook.seed = d.value("seed", c.codebook.seed);
      c.codebook.path = resolve(base, d.value("path", std::string()));
    }
    if (j.contains("semantic")) {
      const auto& d = j.at("semantic");
      c.semantic.provider = d.value("provider", c.semantic.provider);
      c.semantic.dim = d.value("dim", c.semantic.dim);
      c.semantic.ngram = d.value("ngram", c.semantic.ngram);
      c.semantic.seed = d.value("seed", c.semantic.seed);
      c.semantic.templates_path = resolve(base, d.value("templates_path", std::string()));
      c.semantic.templates = d.value("templates", c.semantic.templates);
      c.semantic.label_template = d.value("label_template", c.semantic.label_template);
      c.semantic.class_names = d.value("class_names", c.semantic.class_names);
      c.semantic.features_path = resolve(base, d.value("features_path", std::string()));
      c.semantic.url = d.value("url", c.semantic.url);
      c.semantic.token_env = d.value("token_env", c.semantic.token_env);
    }
    c.output_dir = resolve(base, j.value("output_dir", c.output_dir.string()));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return train_config_from_json(j, path.parent_path());
}

double lr_schedule(int step, const TrainConfig& c) {
  if (step < 0 || step > c.total_steps) {
    throw InvalidArgument("step " + std::to_string(step) + " outside [0, total_steps]");
  }
  const double warm = std::max(c.warmup_steps, 1);
  auto decayed = [&](int s) {
    if (s < c.warmup_steps) return c.base_lr * s / warm;
    return c.base_lr * std::sqrt(warm / std::max(s, 1));
  };
  const int cool_start = c.total_steps - c.cooldown_steps;
  if (c.cooldown_steps > 0 && step > cool_start) {
    return decayed(cool_start) * (c.total_steps - step) / c.cooldown_steps;
  }
  return decayed(step);
}

std::vector<std::string> load_templates(const SemanticConfig& config) {
  if (config.templates_path.empty()) {
    if (config.templates.empty()) return {"{}"};
    return config.templates;
  }
  std::ifstream in(config.templates_path);
  if (!in) throw InvalidArgument("cannot open templates " + config.templates_path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  if (out.empty()) throw InvalidArgument("template file is empty");
  return out;
}

std::shared_ptr<const SemanticProvider> build_provider(const SemanticConfig& config) {
  if (config.provider == "label_text") {
    auto text = std::make_shared<HashedNgramProvider>(config.dim, config.ngram, config.seed);
    auto names = config.class_names.empty() ? mnist_class_names() : config.class_names;
    return std::make_shared<LabelTextProvider>(text, names, config.label_template);
  }
  if (config.provider == "precomputed") {
    return std::make_shared<PrecomputedFeatureProvider>(config.features_path);
  }
  if (config.provider == "remote") {
    HttpEndpoint endpoint;
    endpoint.url = config.url;
    endpoint.auth_token_env = config.token_env;
    auto text = std::make_shared<RemoteEmbeddingProvider>(endpoint, config.dim);
    auto names = config.class_names.empty() ? mnist_class_names() : config.class_names;
    return std::make_shared<LabelTextProvider>(text, names, config.label_template);
  }
  throw InvalidArgument("unknown semantic provider '" + config.provider + "'");
}

LexicalCodebook build_codebook(const CodebookConfig& config, int latent_dim,
                               const SemanticConfig& semantic) {
  LexicalCodebook cb = [&] {
    if (config.kind == "synthetic") {
      return generate_synthetic_codebook(config.size, latent_dim, config.seed);
    }
    if (config.kind == "dir") return load_codebook(config.path);
    throw InvalidArgument("unknown codebook kind '" + config.kind + "'");
  }();
  if (cb.dim() != latent_dim) {
    throw InvalidArgument("codebook dim " + std::to_string(cb.dim()) +
                          " differs from latent_dim " + std::to_string(latent_dim));
  }
  if (!cb.has_text_features()) {
    const auto provider = build_provider(semantic);
    cb = cb.with_text_features(precompute_text_features(cb, load_templates(semantic), *provider));
  }
  return cb;
}

std::pair<Dataset, Dataset> build_splits(const TrainConfig& config) {
  Dataset all;
  if (config.dataset.kind == "mnist") {
    all = load_mnist_dir(config.dataset.path);
  } else if (config.dataset.kind == "synthetic") {
    all = synthetic_dataset(config.dataset.synthetic_count, config.net.input_height,
                            config.net.in_channels, config.dataset.synthetic_classes,
                            mix_seed(config.seed, 0xDA7A));
  } else {
    throw InvalidArgument("unknown dataset kind '" + config.dataset.kind + "'");
  }
  auto splits = split_train_validation(all, config.dataset.validation_modulo);
  if (splits.first.size() == 0) throw InvalidArgument("training split is empty");
  return splits;
}

Assets build_assets(const TrainConfig& config) {
  Assets a{build_codebook(config.codebook, config.net.latent_dim, config.semantic),
           build_provider(config.semantic), {}, {}};
  std::tie(a.train, a.validation) = build_splits(config);
  return a;
}

std::vector<std::vector<TokenId>> pools_for(const ImageSample& sample,
                                            const SemanticProvider& provider,
                                            const LexicalCodebook& codebook,
                                            const PyramidSpec& spec) {
  if (spec.semantic_depth == 0) return {};
  const auto feature = provider.image_embed(sample);
  return semantic_pools(similarity_profile(feature, codebook), spec);
}

void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = {{"step", m.step},
       {"total", m.loss.total},
       {"appearance", m.loss.appearance},
       {"semantic", m.loss.semantic},
       {"w", m.loss.dynamic_weight},
       {"util", m.utilization},
       {"pixel", m.loss.pixel},
       {"commitment", m.loss.commitment},
       {"lr", m.lr},
       {"grad_norm", m.grad_norm}};
}

Trainer::Trainer(TrainConfig config, Assets assets)
    : config_(std::move(config)), assets_(std::move(assets)),
      adam_(nn::AdamConfig{0.9, 0.999, 1e-8, config_.grad_clip}) {
  config_.validate();
  if (assets_.codebook.dim() != config_.net.latent_dim) {
    throw InvalidArgument("codebook dim does not match latent_dim");
  }
  model_ = std::make_unique<Autoencoder<float>>(config_.net, mix_seed(config_.seed, 0x5EED));
  usage_.assign(assets_.codebook.size(), 0);
}

std::vector<const ImageSample*> Trainer::batch_for(int step_index) const {
  const std::size_t n = assets_.train.size();
  std::vector<const ImageSample*> out;
  std::int64_t cached_epoch = -1;
  std::vector<int> perm;
  for (int k = 0; k < config_.batch_size; ++k) {
    const std::int64_t pos = static_cast<std::int64_t>(step_index) * config_.batch_size + k;
    const std::int64_t epoch = pos / static_cast<std::int64_t>(n);
    if (epoch != cached_epoch) {
      perm = permutation(n, mix_seed(config_.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
      cached_epoch = epoch;
    }
    out.push_back(&assets_.train.samples[perm[pos % static_cast<std::int64_t>(n)]]);
  }
  return out;
}

StepMetrics Trainer::step(int step_index, const std::vector<const ImageSample*>& batch) {
  const auto params = model_->parameters();
  nn::zero_grad(params);
  const auto& cb = assets_.codebook;
  const auto& spec = config_.spec;
  const int depth = spec.depth();

  std::vector<Image> images;
  images.reserve(batch.size());
  for (const auto* s : batch) images.push_back(s->image);
  const auto latents = tensor_to_latents(model_->encode(images_to_tensor<float>(images)));

  std::mt19937_64 depth_rng(mix_seed(config_.seed, static_cast<std::uint64_t>(step_index), 1));
  std::vector<Quantization> quant;
  std::vector<std::vector<LatentGrid>> recon;
  std::vector<LatentGrid> decoder_input;
  for (const auto& z : latents) {
    quant.push_back(encode_pyramid(z, cb, spec, config_.quantizer));
    recon.push_back(reconstruct_layers(quant.back().pyramid, cb, config_.quantizer));
    int d = depth;
    if (config_.multi_depth && depth > 1) {
      std::uniform_int_distribution<int> coin(0, 1);
      std::uniform_int_distribution<int> partial(1, depth - 1);
      if (coin(depth_rng) == 0) d = partial(depth_rng);
    }
    decoder_input.push_back(recon.back()[d - 1]);
  }
  const auto decoded_t = model_->decode(latents_to_tensor<float>(decoder_input));
  const auto decoded = tensor_to_images(decoded_t);

  std::vector<ImageObjective> objectives;
  objectives.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto pools = pools_for(*batch[b], *assets_.provider, cb, spec);
    objectives.push_back(image_objective(
        images[b], decoded[b], latents[b], quant[b], recon[b], pools, cb, config_.quantizer,
        config_.weights, mix_seed(config_.seed, static_cast<std::uint64_t>(step_index), b + 2),
        config_.pool_average));
  }
  const auto combined = combine_batch(objectives, config_.weights);

  StepMetrics m;
  m.step = step_index + 1;
  m.loss = combined.breakdown;
  if (!std::isfinite(m.loss.total)) return m;

  nn::Tensor<float> grad_pixels(decoded_t.c, decoded_t.n, decoded_t.h, decoded_t.w);
  for (int b = 0; b < grad_pixels.n; ++b) {
    const auto& g = objectives[b].appearance.grad_reconstruction;
    for (int y = 0; y < grad_pixels.h; ++y) {
      for (int x = 0; x < grad_pixels.w; ++x) {
        for (int c = 0; c < grad_pixels.c; ++c) {
          grad_pixels.at(c, b, y, x) =
              static_cast<float>(combined.appearance_scale * g.at(y, x, c));
        }
      }
    }
  }
  // Straight-through: the decoder-input gradient is passed to Z unchanged.
  auto grad_z = model_->decode_backward(grad_pixels);
  for (int b = 0; b < grad_z.n; ++b) {
    const auto& ga = objectives[b].grad_z_appearance;
    const auto& gs = objectives[b].grad_z_semantic;
    for (int r = 0; r < grad_z.h; ++r) {
      for (int c = 0; c < grad_z.w; ++c) {
        const auto a = ga.at(r, c);
        const auto s = gs.at(r, c);
        for (int d = 0; d < grad_z.c; ++d) {
          grad_z.at(d, b, r, c) += static_cast<float>(combined.appearance_scale * a[d] +
                                                      combined.semantic_scale * s[d]);
        }
      }
    }
  }
  model_->encode_backward(grad_z);
  m.lr = lr_schedule(step_index + 1, config_);
  m.grad_norm = adam_.step(params, m.lr);

  for (const auto& q : quant) {
    for (const auto& layer : q.pyramid.layers) {
      for (TokenId t : layer) ++usage_[t];
    }
  }
  const auto used = std::ranges::count_if(usage_, [](int c) { return c > 0; });
  m.utilization = static_cast<double>(used) / static_cast<double>(usage_.size());
  return m;
}

TrainResult Trainer::run(const TrainOptions& options) {
  TrainResult result;
  result.codebook_checksum_before = assets_.codebook.embedding_checksum();
  fs::create_directories(config_.output_dir);
  {
    std::ofstream snap(config_.output_dir / "config.resolved.json");
    snap << nlohmann::json(config_).dump(2) << '\n';
  }
  int start = 0;
  fs::path last_good;
  if (options.resume) {
    const auto ckpt = load_checkpoint(*options.resume);
    restore_checkpoint(ckpt, *model_, &adam_);
    start = static_cast<int>(ckpt.step);
    last_good = *options.resume;
  }
  result.metrics_log = config_.output_dir / "metrics.jsonl";
  std::ofstream log(result.metrics_log, options.resume ? std::ios::app : std::ios::trunc);
  const int end = std::min(config_.total_steps, options.stop_after.value_or(config_.total_steps));

  auto save = [&](int completed) {
    auto ckpt = make_checkpoint(*model_, &adam_, completed);
    ckpt.extra = {{"train_config", config_},
                  {"codebook_checksum", assets_.codebook.embedding_checksum()},
                  {"codebook_size", assets_.codebook.size()}};
    const auto path = config_.output_dir / ("ckpt-" + std::to_string(completed) + ".ckpt");
    save_checkpoint(ckpt, path);
    return path;
  };

  std::fill(usage_.begin(), usage_.end(), 0);
  for (int s = start; s < end; ++s) {
    StepMetrics m;
    try {
      m = step(s, batch_for(s));
    } catch (const InvalidArgument& e) {
      throw TrainingError("step " + std::to_string(s + 1) + " failed: " + e.what(), last_good);
    }
    if (!std::isfinite(m.loss.total)) {
      throw TrainingError("non-finite loss at step " + std::to_string(s + 1), last_good);
    }
    if (options.on_step) options.on_step(m.step, m.loss);
    if (m.step % config_.log_every == 0 || m.step == end) {
      log << nlohmann::json(m).dump() << '\n';
      log.flush();
      result.history.push_back(m);
      if (options.on_log) options.on_log(m);
      std::fill(usage_.begin(), usage_.end(), 0);
    }
    if (m.step % config_.checkpoint_every == 0 || m.step == end) last_good = save(m.step);
  }
  if (end == start) last_good = save(start);
  result.checkpoint = config_.output_dir / "model.ckpt";
  fs::copy_file(last_good, result.checkpoint, fs::copy_options::overwrite_existing);
  result.codebook_checksum_after = assets_.codebook.embedding_checksum();
  return result;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  Trainer t(config, build_assets(config));
  return t.run(options);
}

}  // namespace lexpyr
