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


#ifndef LEXPYR_TRAINER_H_
#define LEXPYR_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexpyr/autoencoder.h"
#include "lexpyr/codebook.h"
#include "lexpyr/error.h"
#include "lexpyr/objectives.h"
#include "lexpyr/pyramid.h"
#include "lexpyr/semantic_provider.h"

namespace lexpyr {

struct Dataset {
  std::vector<ImageSample> samples;
  std::size_t size() const { return samples.size(); }
};

// Reads IDX image and label files (optionally gzip-compressed), scales
// pixels to [0,1] and zero-pads each 28x28 digit to 32x32.
Dataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);
// Looks for images-idx3-ubyte[.gz] / labels-idx1-ubyte[.gz] (or the
// train-* names) inside `dir`.
Dataset load_mnist_dir(const std::filesystem::path& dir);

// Deterministic smooth blob images, labels cycling through `classes`.
Dataset synthetic_dataset(int count, int size, int channels, int classes, std::uint64_t seed);

// Splits by sample index: index % modulo == 0 goes to validation.
std::pair<Dataset, Dataset> split_train_validation(const Dataset& all, int modulo);

struct CodebookConfig {
  std::string kind = "synthetic";  // synthetic | dir
  int size = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path path;
};

struct SemanticConfig {
  std::string provider = "label_text";  // label_text | precomputed | remote
  int dim = 64;
  int ngram = 3;
  std::uint64_t seed = 0;
  std::filesystem::path templates_path;
  std::vector<std::string> templates;  // used when templates_path is empty
  std::string label_template = std::string(kMnistLabelTemplate);
  std::vector<std::string> class_names;  // defaults to the MNIST digit names
  std::filesystem::path features_path;   // for "precomputed"
  std::string url;                       // for "remote"
  std::string token_env;                 // bearer token env var for "remote"
};

struct DatasetConfig {
  std::string kind = "mnist";  // mnist | synthetic
  std::filesystem::path path;
  int validation_modulo = 10;
  int synthetic_count = 64;
  int synthetic_classes = 10;
};

struct TrainConfig {
  int batch_size = 64;
  int total_steps = 5000;
  double base_lr = 1e-4;
  int warmup_steps = 250;
  int cooldown_steps = 250;
  std::uint64_t seed = 0;
  int log_every = 50;
  int checkpoint_every = 1000;
  double grad_clip = 0.0;
  LossWeights weights;
  PyramidSpec spec;
  NetConfig net;
  QuantizerKind quantizer = QuantizerKind::kStreamingAverage;
  // Decode from a random depth instead of always the full pyramid.
  bool multi_depth = false;
  bool pool_average = false;
  DatasetConfig dataset;
  CodebookConfig codebook;
  SemanticConfig semantic;
  std::filesystem::path output_dir = "runs/default";

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults. Relative paths resolve against
// `base_dir` to absolute canonical paths; with no `base_dir` they are kept.
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);

// Linear warmup to base_lr, inverse square root decay base_lr*sqrt(w/step),
// then a linear ramp to zero over the last cooldown_steps.
double lr_schedule(int step, const TrainConfig& config);

// Codebook, semantic provider and dataset assembled from a config.
struct Assets {
  LexicalCodebook codebook;
  std::shared_ptr<const SemanticProvider> provider;
  Dataset train;
  Dataset validation;
};

LexicalCodebook build_codebook(const CodebookConfig& config, int latent_dim,
                               const SemanticConfig& semantic);
std::shared_ptr<const SemanticProvider> build_provider(const SemanticConfig& config);
std::vector<std::string> load_templates(const SemanticConfig& config);
// Train and validation splits of the configured dataset.
std::pair<Dataset, Dataset> build_splits(const TrainConfig& config);
Assets build_assets(const TrainConfig& config);

// Per-image candidate pools for the semantic layers.
std::vector<std::vector<TokenId>> pools_for(const ImageSample& sample,
                                            const SemanticProvider& provider,
                                            const LexicalCodebook& codebook,
                                            const PyramidSpec& spec);

struct StepMetrics {
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  double utilization = 0.0;
  double grad_norm = 0.0;
};

void to_json(nlohmann::json& j, const StepMetrics& m);

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::filesystem::path last_good)
      : Error(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good_checkpoint() const { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::vector<StepMetrics> history;  // one entry per logged step
  std::uint64_t codebook_checksum_before = 0;
  std::uint64_t codebook_checksum_after = 0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  // Stop after this step (exclusive upper bound), leaving the schedule
  // computed for total_steps. Used to cut runs short for resumption checks.
  std::optional<int> stop_after;
  std::function<void(const StepMetrics&)> on_log;
  // Called with every step's loss (not just logged ones).
  std::function<void(int, const LossBreakdown&)> on_step;
};

class Trainer {
 public:
  Trainer(TrainConfig config, Assets assets);
  TrainResult run(const TrainOptions& options = {});

  // One optimisation step on the given batch; exposed for tests.
  StepMetrics step(int step_index, const std::vector<const ImageSample*>& batch);
  std::vector<const ImageSample*> batch_for(int step_index) const;

  Autoencoder<float>& model() { return *model_; }
  nn::Adam<float>& optimizer() { return adam_; }
  const Assets& assets() const { return assets_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  Assets assets_;
  std::unique_ptr<Autoencoder<float>> model_;
  nn::Adam<float> adam_;
  std::vector<int> usage_;  // token counts over the current log window
};

// Convenience wrapper: build assets and run.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

// Stable 64-bit key for a (seed, a, b) triple; used to derive per-step and
// per-image random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace lexpyr

#endif  // LEXPYR_TRAINER_H_
