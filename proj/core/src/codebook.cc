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

#include "lexpyr/codebook.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lexpyr/error.h"
#include "lexpyr/semantic_provider.h"

namespace lexpyr {
namespace {

namespace fs = std::filesystem;

void check_unit_rows(const FloatMatrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sq = 0.0;
    for (float v : m.row(i)) {
      if (!std::isfinite(v)) {
        throw FormatError(std::string(what) + ": non-finite value in row " +
                          std::to_string(i));
      }
      sq += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw FormatError(std::string(what) + ": row " + std::to_string(i) +
                        " is not unit norm");
    }
  }
}

FloatMatrix read_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != rows * cols * sizeof(float)) {
    throw FormatError(path.string() + ": expected " + std::to_string(rows) +
                      " rows of " + std::to_string(cols) + " floats, file has " +
                      std::to_string(bytes) + " bytes");
  }
  in.seekg(0);
  FloatMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : m.values) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      v = std::bit_cast<float>(u);
    }
  }
  return m;
}

void write_f32(const fs::path& path, const FloatMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float v : m.values) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      out.write(reinterpret_cast<const char*>(&u), sizeof(u));
    }
  } else {
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  }
}

}  // namespace

LexicalCodebook::LexicalCodebook(std::vector<std::string> tokens,
                                 FloatMatrix embeddings, std::string source)
    : source_(std::move(source)) {
  if (tokens.size() != embeddings.rows) {
    throw FormatError("codebook has " + std::to_string(tokens.size()) +
                      " tokens but " + std::to_string(embeddings.rows) +
                      " embedding rows");
  }
  if (tokens.empty() || embeddings.cols == 0) {
    throw FormatError("codebook is empty");
  }
  auto index = std::make_shared<TokenIndex>();
  index->reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) {
      throw FormatError("empty token string at id " + std::to_string(i));
    }
    if (!index->emplace(tokens[i], static_cast<TokenId>(i)).second) {
      throw FormatError("duplicate token '" + tokens[i] + "' at id " +
                        std::to_string(i));
    }
    max_token_bytes_ = std::max(max_token_bytes_, tokens[i].size());
  }
  for (float v : embeddings.values) {
    if (!std::isfinite(v)) throw FormatError("non-finite embedding value");
  }
  tokens_ = std::make_shared<const std::vector<std::string>>(std::move(tokens));
  embeddings_ = std::make_shared<const FloatMatrix>(std::move(embeddings));
  index_ = std::move(index);
}

std::optional<TokenId> LexicalCodebook::find(std::string_view token) const {
  auto it = index_->find(token);
  if (it == index_->end()) return std::nullopt;
  return it->second;
}

std::span<const float> LexicalCodebook::text_feature(TokenId id) const {
  return text_features().row(static_cast<std::size_t>(id));
}

const FloatMatrix& LexicalCodebook::text_features() const {
  if (!text_features_) throw InvalidArgument("codebook has no text features");
  return *text_features_;
}

LexicalCodebook LexicalCodebook::with_text_features(FloatMatrix features) const {
  if (features.rows != size()) {
    throw InvalidArgument("text feature rows " + std::to_string(features.rows) +
                          " != vocabulary size " + std::to_string(size()));
  }
  check_unit_rows(features, "text features");
  LexicalCodebook copy = *this;
  copy.text_features_ = std::make_shared<const FloatMatrix>(std::move(features));
  return copy;
}

LexicalCodebook LexicalCodebook::subset(std::span<const TokenId> keep) const {
  std::vector<std::string> tokens;
  FloatMatrix emb(keep.size(), embeddings_->cols);
  FloatMatrix feats;
  if (text_features_) feats = FloatMatrix(keep.size(), text_features_->cols);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const TokenId id = keep[i];
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw InvalidArgument("subset id out of range: " + std::to_string(id));
    }
    tokens.push_back(token(id));
    std::ranges::copy(embedding(id), emb.row(i).begin());
    if (text_features_) std::ranges::copy(text_feature(id), feats.row(i).begin());
  }
  LexicalCodebook out(std::move(tokens), std::move(emb), source_);
  if (text_features_) out = out.with_text_features(std::move(feats));
  return out;
}

std::uint64_t LexicalCodebook::embedding_checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(embeddings_->values.data());
  const std::size_t n = embeddings_->values.size() * sizeof(float);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

LexicalCodebook load_codebook(const fs::path& dir,
                              const std::vector<std::string>* keep) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("missing " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  const auto c = meta.at("c").get<std::size_t>();

  std::ifstream vocab_in(dir / "vocab.txt", std::ios::binary);
  if (!vocab_in) throw FormatError("missing " + (dir / "vocab.txt").string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(vocab_in, line);) tokens.push_back(line);

  FloatMatrix emb = read_f32(dir / "embeddings.f32", tokens.size(), c);
  const std::string source = meta.value("source", std::string());
  LexicalCodebook codebook(std::move(tokens), std::move(emb), source);

  if (fs::exists(dir / "text_features.f32")) {
    const auto d_sem = meta.at("d_sem").get<std::size_t>();
    codebook = codebook.with_text_features(
        read_f32(dir / "text_features.f32", codebook.size(), d_sem));
  }
  if (keep != nullptr) {
    std::vector<TokenId> ids;
    for (const auto& t : *keep) {
      auto id = codebook.find(t);
      if (!id) throw FormatError("subset token '" + t + "' not in vocabulary");
      ids.push_back(*id);
    }
    std::ranges::sort(ids);
    codebook = codebook.subset(ids);
  }
  return codebook;
}

void save_codebook(const LexicalCodebook& codebook, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream vocab(dir / "vocab.txt", std::ios::binary);
    for (const auto& t : codebook.tokens()) {
      if (t.find('\n') != std::string::npos) {
        throw FormatError("token contains a newline and cannot be saved");
      }
      vocab << t << '\n';
    }
  }
  write_f32(dir / "embeddings.f32", codebook.embeddings());
  nlohmann::json meta = {{"c", codebook.dim()},
                         {"d_sem", codebook.semantic_dim()},
                         {"source", codebook.source()}};
  if (codebook.has_text_features()) {
    write_f32(dir / "text_features.f32", codebook.text_features());
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

LexicalCodebook generate_synthetic_codebook(int vocab_size, int dim,
                                            std::uint64_t seed) {
  if (vocab_size < 2) throw InvalidArgument("vocab_size must be >= 2");
  if (dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> syllables(1, 3);
  std::uniform_int_distribution<std::size_t> onset(0, kOnsets.size() - 1);
  std::uniform_int_distribution<std::size_t> vowel(0, kVowels.size() - 1);

  std::vector<std::string> tokens;
  std::unordered_set<std::string> seen;
  tokens.reserve(vocab_size);
  while (static_cast<int>(tokens.size()) < vocab_size) {
    std::string t(kWordBoundary);
    const int n = syllables(rng);
    for (int s = 0; s < n; ++s) {
      t += kOnsets[onset(rng)];
      t += kVowels[vowel(rng)];
    }
    if (seen.insert(t).second) tokens.push_back(std::move(t));
  }

  FloatMatrix emb(static_cast<std::size_t>(vocab_size), static_cast<std::size_t>(dim));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < emb.rows; ++i) {
    double sq = 0.0;
    for (double& v : row) {
      v = normal(rng);
      sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (int k = 0; k < dim; ++k) emb.row(i)[k] = static_cast<float>(row[k] * inv);
  }
  return LexicalCodebook(std::move(tokens), std::move(emb),
                         "synthetic:seed=" + std::to_string(seed));
}

std::string fill_template(std::string_view templ, std::string_view value) {
  const auto slot = templ.find("{}");
  if (slot == std::string_view::npos) {
    throw InvalidArgument("template has no {} slot: " + std::string(templ));
  }
  std::string out(templ.substr(0, slot));
  out += value;
  out += templ.substr(slot + 2);
  return out;
}

FloatMatrix precompute_text_features(const LexicalCodebook& codebook,
                                     const std::vector<std::string>& templates,
                                     const SemanticProvider& provider) {
  if (templates.empty()) throw InvalidArgument("empty prompt template list");
  const auto d = static_cast<std::size_t>(provider.dim());
  FloatMatrix out(codebook.size(), d);
  std::vector<std::string> texts(templates.size());
  std::vector<double> mean(d);
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    for (std::size_t p = 0; p < templates.size(); ++p) {
      texts[p] = fill_template(templates[p], codebook.token(static_cast<TokenId>(k)));
    }
    std::vector<std::vector<double>> feats;
    try {
      feats = provider.text_embed_batch(texts);
    } catch (const std::exception& e) {
      throw Error("text embedding failed for token " + std::to_string(k) + ": " +
                  e.what());
    }
    std::ranges::fill(mean, 0.0);
    for (const auto& f : feats) {
      if (f.size() != d) throw Error("text embedding has wrong dimension");
      for (std::size_t j = 0; j < d; ++j) mean[j] += f[j];
    }
    double sq = 0.0;
    for (double& v : mean) {
      v /= static_cast<double>(feats.size());
      sq += v * v;
    }
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw Error("degenerate text feature for token " + std::to_string(k));
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out.row(k)[j] = static_cast<float>(mean[j] * inv);
  }
  return out;
}

std::vector<double> similarity_raw(std::span<const double> image_feature,
                                   const LexicalCodebook& codebook) {
  const auto& feats = codebook.text_features();
  if (image_feature.size() != feats.cols) {
    throw InvalidArgument("image feature dim " + std::to_string(image_feature.size()) +
                          " != text feature dim " + std::to_string(feats.cols));
  }
  std::vector<double> out(feats.rows);
  for (std::size_t k = 0; k < feats.rows; ++k) {
    const auto row = feats.row(k);
    double dot = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) dot += image_feature[j] * row[j];
    out[k] = dot;
  }
  return out;
}

std::vector<double> normalize_similarity(std::span<const double> raw) {
  if (raw.size() < 2) throw InvalidArgument("similarity vector needs >= 2 entries");
  const auto [lo, hi] = std::ranges::minmax_element(raw);
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out(raw.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - min) / range;
  }
  return out;
}

SimilarityProfile similarity_profile(std::span<const double> image_feature,
                                     const LexicalCodebook& codebook) {
  SimilarityProfile p;
  p.raw = similarity_raw(image_feature, codebook);
  p.normalized = normalize_similarity(p.raw);
  return p;
}

std::vector<TokenId> candidate_pool(const SimilarityProfile& profile, double rho) {
  std::vector<TokenId> pool;
  for (std::size_t k = 0; k < profile.normalized.size(); ++k) {
    if (profile.normalized[k] >= rho) pool.push_back(static_cast<TokenId>(k));
  }
  return pool;
}

void squared_distances(std::span<const double> z, const LexicalCodebook& codebook,
                       std::span<double> out) {
  const auto& emb = codebook.embeddings();
  if (z.size() != emb.cols) {
    throw InvalidArgument("embedding dim " + std::to_string(z.size()) +
                          " != codebook dim " + std::to_string(emb.cols));
  }
  const std::size_t c = emb.cols;
  const float* e = emb.values.data();
  for (std::size_t k = 0; k < emb.rows; ++k, e += c) {
    double d = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double diff = z[j] - static_cast<double>(e[j]);
      d += diff * diff;
    }
    out[k] = d;
  }
}

TokenId nearest_token(std::span<const double> z, const LexicalCodebook& codebook) {
  for (double v : z) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite embedding");
  }
  const auto& emb = codebook.embeddings();
  if (z.size() != emb.cols) {
    throw InvalidArgument("embedding dim " + std::to_string(z.size()) +
                          " != codebook dim " + std::to_string(emb.cols));
  }
  const std::size_t c = emb.cols;
  const float* e = emb.values.data();
  TokenId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < emb.rows; ++k, e += c) {
    double d = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double diff = z[j] - static_cast<double>(e[j]);
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the smaller id
      best_d = d;
      best = static_cast<TokenId>(k);
    }
  }
  return best;
}

}  // namespace lexpyr
