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

#ifndef LEXPYR_SEMANTIC_PROVIDER_H_
#define LEXPYR_SEMANTIC_PROVIDER_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lexpyr/codebook.h"
#include "lexpyr/http.h"
#include "lexpyr/image.h"

namespace lexpyr {

struct ImageSample {
  Image image;
  int label = -1;
  std::int64_t index = -1;
};

// Image and text embedding functions sharing one feature space. Returned
// vectors always have dim() finite entries.
class SemanticProvider {
 public:
  virtual ~SemanticProvider() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> text_embed(std::string_view text) const = 0;
  virtual std::vector<std::vector<double>> text_embed_batch(
      const std::vector<std::string>& texts) const;
  virtual std::vector<double> image_embed(const ImageSample& sample) const = 0;
};

// Signed feature hashing of character n-grams, L2-normalized. A cheap,
// deterministic text encoder: strings sharing n-grams have positive cosine.
class HashedNgramProvider : public SemanticProvider {
 public:
  explicit HashedNgramProvider(int dim, int ngram = 3, std::uint64_t seed = 0);
  int dim() const override { return dim_; }
  std::vector<double> text_embed(std::string_view text) const override;
  // Text-only provider; throws.
  std::vector<double> image_embed(const ImageSample& sample) const override;

 private:
  int dim_;
  int ngram_;
  std::uint64_t seed_;
};

// Replaces the image encoder with the text embedding of the sample's class
// label rendered through a template, e.g. 'a photo of the number: "{}".'.
class LabelTextProvider : public SemanticProvider {
 public:
  LabelTextProvider(std::shared_ptr<const SemanticProvider> text,
                    std::vector<std::string> class_names,
                    std::string label_template);
  int dim() const override { return text_->dim(); }
  std::vector<double> text_embed(std::string_view text) const override {
    return text_->text_embed(text);
  }
  std::vector<double> image_embed(const ImageSample& sample) const override;
  const std::vector<std::string>& class_names() const { return class_names_; }

 private:
  std::shared_ptr<const SemanticProvider> text_;
  std::vector<std::string> class_names_;
  std::vector<std::vector<double>> label_features_;
};

std::vector<std::string> mnist_class_names();
inline constexpr std::string_view kMnistLabelTemplate =
    "a photo of the number: \"{}\".";

// Features computed offline by an external model. Directory layout:
// texts.txt + text_features.f32 (one row per text line) and
// image_features.f32 (one row per sample index). meta.json holds "d_sem".
class PrecomputedFeatureProvider : public SemanticProvider {
 public:
  explicit PrecomputedFeatureProvider(const std::filesystem::path& dir);
  int dim() const override { return dim_; }
  std::vector<double> text_embed(std::string_view text) const override;
  std::vector<double> image_embed(const ImageSample& sample) const override;

 private:
  int dim_ = 0;
  std::vector<std::string> texts_;
  FloatMatrix text_features_;
  FloatMatrix image_features_;
};

// Remote text embedding service speaking
//   POST {"texts": [...]} -> {"embeddings": [[...], ...]}
class RemoteEmbeddingProvider : public SemanticProvider {
 public:
  RemoteEmbeddingProvider(HttpEndpoint endpoint, int dim);
  int dim() const override { return dim_; }
  std::vector<double> text_embed(std::string_view text) const override;
  std::vector<std::vector<double>> text_embed_batch(
      const std::vector<std::string>& texts) const override;
  std::vector<double> image_embed(const ImageSample& sample) const override;

 private:
  HttpEndpoint endpoint_;
  int dim_;
};

}  // namespace lexpyr

#endif  // LEXPYR_SEMANTIC_PROVIDER_H_
