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


#ifndef LEXPYR_EVAL_H_
#define LEXPYR_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexpyr/codebook.h"
#include "lexpyr/image.h"
#include "lexpyr/llm.h"
#include "lexpyr/prompts.h"
#include "lexpyr/pyramid.h"
#include "lexpyr/semantic_provider.h"
#include "lexpyr/tokenizer.h"
#include "lexpyr/trainer.h"

namespace lexpyr {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

struct ReconstructionMetrics {
  double mse = 0.0;
  double psnr = kPsnrInfinity;
};
ReconstructionMetrics reconstruction_metrics(const Image& real, const Image& reconstructed);
double psnr_from_mse(double mse);

struct SemanticScores {
  double mean_similarity = 0.0;           // raw dot similarity
  double mean_relative_similarity = 0.0;  // min-max normalized
};

// Averages over the tokens of layers 1..up_to_layer.
SemanticScores semantic_scores(const TokenPyramid& pyramid, const SimilarityProfile& profile,
                               int up_to_layer);
SemanticScores semantic_scores(const TokenPyramid& pyramid, std::span<const double> image_feature,
                               const LexicalCodebook& codebook, int up_to_layer);
// The same averages taken over the whole vocabulary.
SemanticScores vocabulary_scores(const SimilarityProfile& profile);

void to_json(nlohmann::json& j, const SemanticScores& s);

struct Utilization {
  double fraction_used = 0.0;
  double perplexity = 0.0;
  std::size_t distinct = 0;
  std::size_t total = 0;
};
Utilization utilization(std::span<const TokenPyramid> corpus, std::size_t vocab_size,
                        int up_to_layer = 0);
Utilization utilization_of_ids(std::span<const std::vector<TokenId>> corpus,
                               std::size_t vocab_size);

void to_json(nlohmann::json& j, const Utilization& u);

struct FewShotConfig {
  int ways = 2;
  int inner_shots = 1;
  int repeats = 1;
  bool task_induction = true;
  ClassifyStyle style = ClassifyStyle::kListForm;
  bool what_is_this = false;
  int episodes = 200;
  std::uint64_t seed = 0;
  int max_tokens = 0;  // 0 picks the style default
};

struct EpisodeRecord {
  int episode = 0;
  std::vector<std::string> classes;
  std::string expected;
  std::string answer;
  bool valid = true;
  bool correct = false;
  std::string error;
  std::string prompt;
};
void to_json(nlohmann::json& j, const EpisodeRecord& r);

struct FewShotResult {
  double accuracy = 0.0;  // over valid episodes
  int valid = 0;
  int invalid = 0;
  std::vector<EpisodeRecord> episodes;
};

using SpaeFn = std::function<std::string(const ImageSample&)>;

// Episodes draw `ways` classes, `inner_shots` support images per class and
// one query, all from fixed per-episode seeds. Support items appear in
// shot-major order, each repeated `repeats` times in a row.
FewShotResult few_shot_classify(const FewShotConfig& config, const Dataset& data,
                                const std::vector<std::string>& class_names,
                                const LLMClient& llm, const SpaeFn& spae);

// Per-layer grid cells labeled with token strings and shaded darker for
// higher normalized similarity.
std::string render_pyramid_svg(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                               const SimilarityProfile& profile);
void visualize_pyramid(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                       const SimilarityProfile& profile, const std::filesystem::path& out);
int cell_gray_level(double normalized_similarity);

struct DepthMetrics {
  int depth = 0;
  double mse = 0.0;
  double psnr = 0.0;
  SemanticScores semantic;
};

struct EvalReport {
  int images = 0;
  std::string quantizer;
  std::vector<DepthMetrics> depths;
  SemanticScores vocabulary;          // image-averaged whole-vocabulary scores
  int beat_layers = 0;
  double semantic_beat_fraction = 0.0;  // images whose early tokens beat the vocabulary mean
  Utilization utilization;
  std::map<std::string, double> task_accuracies;
  nlohmann::json external = {{"fid", nullptr}, {"is", nullptr}, {"lpips", nullptr}};
};
void to_json(nlohmann::json& j, const EvalReport& r);

bool mse_non_increasing(const EvalReport& report);

// Reconstruction, semantic and utilization metrics on `data`.
EvalReport evaluate_tokenizer(Tokenizer& tokenizer, const Dataset& data,
                              const SemanticProvider& provider, int beat_layers = 2);

}  // namespace lexpyr

#endif  // LEXPYR_EVAL_H_
