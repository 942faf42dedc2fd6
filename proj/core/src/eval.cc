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


#include "lexpyr/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

nlohmann::json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

}  // namespace

void to_json(nlohmann::json& j, const SemanticScores& s) {
  j = {{"mean_similarity", s.mean_similarity},
       {"mean_relative_similarity", s.mean_relative_similarity}};
}

void to_json(nlohmann::json& j, const Utilization& u) {
  j = {{"fraction_used", u.fraction_used},
       {"perplexity", u.perplexity},
       {"distinct", u.distinct},
       {"total", u.total}};
}

double psnr_from_mse(double mse) {
  if (mse < 0.0 || !std::isfinite(mse)) throw InvalidArgument("MSE must be finite and >= 0");
  return mse == 0.0 ? kPsnrInfinity : 10.0 * std::log10(1.0 / mse);
}

ReconstructionMetrics reconstruction_metrics(const Image& real, const Image& reconstructed) {
  if (!real.same_shape(reconstructed)) throw InvalidArgument("image shapes differ");
  if (real.pixels.empty()) throw InvalidArgument("empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < real.pixels.size(); ++i) {
    const double d = static_cast<double>(real.pixels[i]) - reconstructed.pixels[i];
    sum += d * d;
  }
  ReconstructionMetrics m;
  m.mse = sum / static_cast<double>(real.pixels.size());
  m.psnr = psnr_from_mse(m.mse);
  return m;
}

SemanticScores semantic_scores(const TokenPyramid& pyramid, const SimilarityProfile& profile,
                               int up_to_layer) {
  if (up_to_layer < 1 || up_to_layer > static_cast<int>(pyramid.layers.size())) {
    throw InvalidArgument("up_to_layer outside the pyramid");
  }
  SemanticScores s;
  std::size_t n = 0;
  for (int l = 0; l < up_to_layer; ++l) {
    for (TokenId t : pyramid.layers[l]) {
      s.mean_similarity += profile.raw.at(static_cast<std::size_t>(t));
      s.mean_relative_similarity += profile.normalized.at(static_cast<std::size_t>(t));
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("no tokens to score");
  s.mean_similarity /= static_cast<double>(n);
  s.mean_relative_similarity /= static_cast<double>(n);
  return s;
}

SemanticScores semantic_scores(const TokenPyramid& pyramid, std::span<const double> image_feature,
                               const LexicalCodebook& codebook, int up_to_layer) {
  if (!codebook.has_text_features()) throw InvalidArgument("codebook has no text features");
  return semantic_scores(pyramid, similarity_profile(image_feature, codebook), up_to_layer);
}

SemanticScores vocabulary_scores(const SimilarityProfile& profile) {
  SemanticScores s;
  for (std::size_t i = 0; i < profile.raw.size(); ++i) {
    s.mean_similarity += profile.raw[i];
    s.mean_relative_similarity += profile.normalized[i];
  }
  s.mean_similarity /= static_cast<double>(profile.raw.size());
  s.mean_relative_similarity /= static_cast<double>(profile.raw.size());
  return s;
}

Utilization utilization_of_ids(std::span<const std::vector<TokenId>> corpus,
                               std::size_t vocab_size) {
  if (corpus.empty()) throw InvalidArgument("utilization needs a nonempty corpus");
  std::vector<std::size_t> counts(vocab_size, 0);
  Utilization u;
  for (const auto& ids : corpus) {
    for (TokenId t : ids) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
        throw InvalidArgument("token id outside the vocabulary");
      }
      ++counts[static_cast<std::size_t>(t)];
      ++u.total;
    }
  }
  if (u.total == 0) throw InvalidArgument("utilization corpus holds no tokens");
  double entropy = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    ++u.distinct;
    const double p = static_cast<double>(c) / static_cast<double>(u.total);
    entropy -= p * std::log(p);
  }
  u.fraction_used = static_cast<double>(u.distinct) / static_cast<double>(vocab_size);
  u.perplexity = std::exp(entropy);
  return u;
}

Utilization utilization(std::span<const TokenPyramid> corpus, std::size_t vocab_size,
                        int up_to_layer) {
  std::vector<std::vector<TokenId>> ids;
  for (const auto& p : corpus) {
    const int depth = up_to_layer > 0 ? std::min<int>(up_to_layer, p.layers.size())
                                      : static_cast<int>(p.layers.size());
    std::vector<TokenId> flat;
    for (int l = 0; l < depth; ++l) flat.insert(flat.end(), p.layers[l].begin(), p.layers[l].end());
    ids.push_back(std::move(flat));
  }
  return utilization_of_ids(ids, vocab_size);
}

void to_json(nlohmann::json& j, const EpisodeRecord& r) {
  j = {{"episode", r.episode}, {"classes", r.classes}, {"expected", r.expected},
       {"answer", r.answer},   {"valid", r.valid},     {"correct", r.correct}};
  if (!r.error.empty()) j["error"] = r.error;
  j["prompt"] = r.prompt;
}

FewShotResult few_shot_classify(const FewShotConfig& config, const Dataset& data,
                                const std::vector<std::string>& class_names,
                                const LLMClient& llm, const SpaeFn& spae) {
  if (config.ways < 1 || config.inner_shots < 1 || config.repeats < 1 || config.episodes < 1) {
    throw InvalidArgument("few-shot settings must be >= 1");
  }
  std::map<int, std::vector<const ImageSample*>> by_label;
  for (const auto& s : data.samples) {
    if (s.label >= 0 && s.label < static_cast<int>(class_names.size())) {
      by_label[s.label].push_back(&s);
    }
  }
  std::vector<int> labels;
  for (const auto& [label, items] : by_label) {
    if (static_cast<int>(items.size()) >= config.inner_shots + 1) labels.push_back(label);
  }
  if (static_cast<int>(labels.size()) < config.ways) {
    throw InvalidArgument("dataset has fewer than " + std::to_string(config.ways) +
                          " classes with enough images");
  }
  const int max_tokens = config.max_tokens > 0 ? config.max_tokens
                         : config.style == ClassifyStyle::kListForm ? kListFormMaxTokens
                                                                    : kThisIsMaxTokens;
  FewShotResult result;
  int correct = 0;
  for (int e = 0; e < config.episodes; ++e) {
    std::mt19937_64 rng(hash_text("episode", config.seed) ^ static_cast<std::uint64_t>(e));
    auto pool = labels;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(config.ways));
    std::uniform_int_distribution<int> pick_class(0, config.ways - 1);
    const int query_class = pool[pick_class(rng)];

    EpisodeRecord rec;
    rec.episode = e;
    for (int l : pool) rec.classes.push_back(class_names[l]);
    rec.expected = class_names[query_class];

    std::map<int, std::vector<const ImageSample*>> support;
    const ImageSample* query = nullptr;
    for (int l : pool) {
      auto items = by_label[l];
      std::shuffle(items.begin(), items.end(), rng);
      const int need = config.inner_shots + (l == query_class ? 1 : 0);
      support[l].assign(items.begin(), items.begin() + need);
      if (l == query_class) {
        query = support[l].back();
        support[l].pop_back();
      }
    }
    std::vector<LabeledExample> examples;
    for (int shot = 0; shot < config.inner_shots; ++shot) {
      for (int l : pool) {
        const LabeledExample ex{spae(*support[l][shot]), class_names[l]};
        for (int r = 0; r < config.repeats; ++r) examples.push_back(ex);
      }
    }
    ClassifyOptions options;
    options.what_is_this = config.what_is_this;
    options.task_induction = config.task_induction;
    rec.prompt =
        build_classification_prompt(config.style, rec.classes, examples, spae(*query), options);
    try {
      const auto completion = llm.complete(rec.prompt, max_tokens, 0.0, 1).front();
      const auto answer = parse_answer(completion, AnswerMode::kWord);
      if (!answer) {
        rec.valid = false;
        rec.error = "empty answer";
      } else {
        rec.answer = *answer;
        rec.correct = rec.answer == rec.expected;
      }
    } catch (const LLMError& err) {
      rec.valid = false;
      rec.error = err.what();
    }
    if (rec.valid) {
      ++result.valid;
      correct += rec.correct ? 1 : 0;
    } else {
      ++result.invalid;
    }
    result.episodes.push_back(std::move(rec));
  }
  result.accuracy = result.valid > 0 ? static_cast<double>(correct) / result.valid : 0.0;
  return result;
}

int cell_gray_level(double s) {
  return static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(s, 0.0, 1.0))));
}

std::string render_pyramid_svg(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                               const SimilarityProfile& profile) {
  constexpr int kCell = 56;
  constexpr int kGap = 16;
  constexpr int kLabel = 20;
  int width = 0;
  int height = kGap;
  for (const auto& shape : pyramid.spec.layers) {
    width = std::max(width, shape.cols * kCell);
    height += kLabel + shape.rows * kCell + kGap;
  }
  width += 2 * kGap;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"monospace\" font-size=\"10\">\n";
  int y0 = kGap;
  for (std::size_t l = 0; l < pyramid.layers.size(); ++l) {
    const auto& shape = pyramid.spec.layers[l];
    svg << "<text x=\"" << kGap << "\" y=\"" << y0 + 14 << "\">layer " << l + 1 << "</text>\n";
    y0 += kLabel;
    for (int r = 0; r < shape.rows; ++r) {
      for (int c = 0; c < shape.cols; ++c) {
        const TokenId t = pyramid.layers[l][static_cast<std::size_t>(r * shape.cols + c)];
        const double s = profile.normalized.at(static_cast<std::size_t>(t));
        const int g = cell_gray_level(s);
        const int x = kGap + c * kCell;
        const int y = y0 + r * kCell;
        char fill[8];
        std::snprintf(fill, sizeof(fill), "#%02x%02x%02x", g, g, g);
        svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\""
            << kCell << "\" fill=\"" << fill << "\" stroke=\"#888888\"/>\n";
        svg << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
            << "\" text-anchor=\"middle\" fill=\"" << (g < 128 ? "#ffffff" : "#000000")
            << "\">" << xml_escape(codebook.token(t)) << "</text>\n";
      }
    }
    y0 += shape.rows * kCell + kGap;
  }
  svg << "</svg>\n";
  return svg.str();
}

void visualize_pyramid(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                       const SimilarityProfile& profile, const std::filesystem::path& out) {
  const auto svg = render_pyramid_svg(pyramid, codebook, profile);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot write " + out.string());
  f << svg;
  if (!f) throw Error("failed writing " + out.string());
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json depths = nlohmann::json::array();
  for (const auto& d : r.depths) {
    depths.push_back({{"depth", d.depth},
                      {"mse", d.mse},
                      {"psnr", finite_or_string(d.psnr)},
                      {"semantic", d.semantic}});
  }
  j = {{"images", r.images},
       {"quantizer", r.quantizer},
       {"depths", depths},
       {"vocabulary", r.vocabulary},
       {"beat_layers", r.beat_layers},
       {"semantic_beat_fraction", r.semantic_beat_fraction},
       {"utilization", r.utilization},
       {"task_accuracies", r.task_accuracies},
       {"external", r.external}};
}

bool mse_non_increasing(const EvalReport& report) {
  for (std::size_t i = 1; i < report.depths.size(); ++i) {
    if (report.depths[i].mse > report.depths[i - 1].mse) return false;
  }
  return true;
}

EvalReport evaluate_tokenizer(Tokenizer& tokenizer, const Dataset& data,
                              const SemanticProvider& provider, int beat_layers) {
  if (data.size() == 0) throw InvalidArgument("evaluation set is empty");
  const auto& spec = tokenizer.spec();
  const int depth = spec.depth();
  if (beat_layers < 1 || beat_layers > depth) throw InvalidArgument("bad beat_layers");
  EvalReport report;
  report.images = static_cast<int>(data.size());
  report.quantizer = std::string(quantizer_name(tokenizer.quantizer()));
  report.beat_layers = beat_layers;
  report.depths.resize(static_cast<std::size_t>(depth));
  for (int d = 0; d < depth; ++d) report.depths[d].depth = d + 1;

  std::vector<Image> images;
  for (const auto& s : data.samples) images.push_back(s.image);
  const auto pyramids = tokenizer.encode_batch(images);
  const bool semantic = tokenizer.codebook().has_text_features();
  int beat = 0;
  for (std::size_t i = 0; i < pyramids.size(); ++i) {
    const auto recons = tokenizer.decode_depths(pyramids[i]);
    for (int d = 0; d < depth; ++d) {
      report.depths[d].mse += reconstruction_metrics(images[i], recons[d]).mse;
    }
    if (!semantic) continue;
    const auto profile =
        similarity_profile(provider.image_embed(data.samples[i]), tokenizer.codebook());
    const auto vocab = vocabulary_scores(profile);
    report.vocabulary.mean_similarity += vocab.mean_similarity;
    report.vocabulary.mean_relative_similarity += vocab.mean_relative_similarity;
    for (int d = 0; d < depth; ++d) {
      const auto s = semantic_scores(pyramids[i], profile, d + 1);
      report.depths[d].semantic.mean_similarity += s.mean_similarity;
      report.depths[d].semantic.mean_relative_similarity += s.mean_relative_similarity;
      if (d + 1 == beat_layers && s.mean_relative_similarity > vocab.mean_relative_similarity) {
        ++beat;
      }
    }
  }
  const double n = static_cast<double>(data.size());
  for (auto& d : report.depths) {
    d.mse /= n;
    d.psnr = psnr_from_mse(d.mse);
    d.semantic.mean_similarity /= n;
    d.semantic.mean_relative_similarity /= n;
  }
  report.vocabulary.mean_similarity /= n;
  report.vocabulary.mean_relative_similarity /= n;
  report.semantic_beat_fraction = beat / n;
  report.utilization = utilization(pyramids, tokenizer.codebook().size());
  return report;
}

}  // namespace lexpyr
