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

#include "lexpyr/semantic_provider.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  // Final avalanche so that low bits (used for the bucket) mix well.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

void normalize_in_place(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
  }
}

FloatMatrix read_matrix(const std::filesystem::path& path, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (cols == 0 || bytes % (cols * sizeof(float)) != 0) {
    throw FormatError(path.string() + ": size is not a multiple of the row width");
  }
  in.seekg(0);
  FloatMatrix m(bytes / (cols * sizeof(float)), cols);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(bytes));
  return m;
}

std::vector<double> to_double(std::span<const float> row) {
  return {row.begin(), row.end()};
}

}  // namespace

std::vector<std::vector<double>> SemanticProvider::text_embed_batch(
    const std::vector<std::string>& texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(text_embed(t));
  return out;
}

HashedNgramProvider::HashedNgramProvider(int dim, int ngram, std::uint64_t seed)
    : dim_(dim), ngram_(ngram), seed_(seed) {
  if (dim < 1 || ngram < 1) throw InvalidArgument("bad hashed n-gram settings");
}

std::vector<double> HashedNgramProvider::text_embed(std::string_view text) const {
  // Lowercase ASCII letters and digits survive; every other byte becomes a
  // space, then runs of spaces collapse. Boundary marks and punctuation thus
  // act as word separators.
  std::string norm = " ";
  for (unsigned char c : text) {
    const char mapped = std::isalnum(c) != 0 ? static_cast<char>(std::tolower(c)) : ' ';
    if (mapped == ' ' && norm.back() == ' ') continue;
    norm += mapped;
  }
  if (norm.back() != ' ') norm += ' ';

  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  if (norm.size() < static_cast<std::size_t>(ngram_)) return v;
  for (std::size_t i = 0; i + ngram_ <= norm.size(); ++i) {
    const std::uint64_t h = fnv1a(std::string_view(norm).substr(i, ngram_), seed_);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[h % static_cast<std::uint64_t>(dim_)] += sign;
  }
  if (std::ranges::all_of(v, [](double x) { return x == 0.0; })) {
    // Signed collisions cancelled out; fall back to unsigned counts.
    for (std::size_t i = 0; i + ngram_ <= norm.size(); ++i) {
      v[fnv1a(std::string_view(norm).substr(i, ngram_), seed_) %
        static_cast<std::uint64_t>(dim_)] += 1.0;
    }
  }
  normalize_in_place(v);
  return v;
}

std::vector<double> HashedNgramProvider::image_embed(const ImageSample&) const {
  throw InvalidArgument("HashedNgramProvider has no image encoder");
}

LabelTextProvider::LabelTextProvider(std::shared_ptr<const SemanticProvider> text,
                                     std::vector<std::string> class_names,
                                     std::string label_template)
    : text_(std::move(text)), class_names_(std::move(class_names)) {
  for (const auto& name : class_names_) {
    auto f = text_->text_embed(fill_template(label_template, name));
    normalize_in_place(f);
    label_features_.push_back(std::move(f));
  }
}

std::vector<double> LabelTextProvider::image_embed(const ImageSample& sample) const {
  if (sample.label < 0 || sample.label >= static_cast<int>(label_features_.size())) {
    throw InvalidArgument("sample label " + std::to_string(sample.label) +
                          " has no class name");
  }
  return label_features_[sample.label];
}

std::vector<std::string> mnist_class_names() {
  return {"zero", "one", "two", "three", "four",
          "five", "six", "seven", "eight", "nine"};
}

PrecomputedFeatureProvider::PrecomputedFeatureProvider(
    const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("missing " + (dir / "meta.json").string());
  const auto meta = nlohmann::json::parse(meta_in);
  dim_ = meta.at("d_sem").get<int>();
  if (std::filesystem::exists(dir / "texts.txt")) {
    std::ifstream in(dir / "texts.txt");
    for (std::string line; std::getline(in, line);) texts_.push_back(line);
    text_features_ = read_matrix(dir / "text_features.f32", dim_);
    if (text_features_.rows != texts_.size()) {
      throw FormatError("texts.txt and text_features.f32 row counts differ");
    }
  }
  if (std::filesystem::exists(dir / "image_features.f32")) {
    image_features_ = read_matrix(dir / "image_features.f32", dim_);
  }
}

std::vector<double> PrecomputedFeatureProvider::text_embed(std::string_view text) const {
  for (std::size_t i = 0; i < texts_.size(); ++i) {
    if (texts_[i] == text) return to_double(text_features_.row(i));
  }
  throw InvalidArgument("no precomputed feature for text '" + std::string(text) + "'");
}

std::vector<double> PrecomputedFeatureProvider::image_embed(
    const ImageSample& sample) const {
  if (sample.index < 0 ||
      static_cast<std::size_t>(sample.index) >= image_features_.rows) {
    throw InvalidArgument("no precomputed image feature for sample " +
                          std::to_string(sample.index));
  }
  return to_double(image_features_.row(static_cast<std::size_t>(sample.index)));
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(HttpEndpoint endpoint, int dim)
    : endpoint_(std::move(endpoint)), dim_(dim) {}

std::vector<double> RemoteEmbeddingProvider::text_embed(std::string_view text) const {
  return text_embed_batch({std::string(text)}).front();
}

std::vector<std::vector<double>> RemoteEmbeddingProvider::text_embed_batch(
    const std::vector<std::string>& texts) const {
  const auto response = post_json(endpoint_, {{"texts", texts}});
  std::vector<std::vector<double>> out;
  try {
    out = response.at("embeddings").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw FormatError("embedding response has " + std::to_string(out.size()) +
                      " rows for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& row : out) {
    if (static_cast<int>(row.size()) != dim_) {
      throw FormatError("embedding response has wrong dimension");
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw FormatError("non-finite embedding in response");
    }
  }
  return out;
}

std::vector<double> RemoteEmbeddingProvider::image_embed(const ImageSample&) const {
  throw InvalidArgument("RemoteEmbeddingProvider serves text embeddings only");
}

}  // namespace lexpyr
