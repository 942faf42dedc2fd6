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

#ifndef LEXPYR_CODEBOOK_H_
#define LEXPYR_CODEBOOK_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexpyr {

using TokenId = std::int32_t;

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const {
    return std::hash<std::string_view>{}(s);
  }
};
using TokenIndex =
    std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>>;

// Dense row-major matrix of 32-bit floats, the on-disk element type.
struct FloatMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FloatMatrix() = default;
  FloatMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c) {}
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
};

// A frozen vocabulary of lexical tokens. Token id is the row index into the
// embedding matrix. Embeddings are shared and immutable, so copies are cheap
// and the codebook is safe to read from any number of threads.
class LexicalCodebook {
 public:
  LexicalCodebook(std::vector<std::string> tokens, FloatMatrix embeddings,
                  std::string source = "");

  std::size_t size() const { return tokens_->size(); }
  int dim() const { return static_cast<int>(embeddings_->cols); }
  const std::string& source() const { return source_; }

  const std::string& token(TokenId id) const { return (*tokens_)[id]; }
  const std::vector<std::string>& tokens() const { return *tokens_; }
  std::span<const float> embedding(TokenId id) const {
    return embeddings_->row(static_cast<std::size_t>(id));
  }
  const FloatMatrix& embeddings() const { return *embeddings_; }
  std::optional<TokenId> find(std::string_view token) const;
  std::size_t max_token_bytes() const { return max_token_bytes_; }

  bool has_text_features() const { return text_features_ != nullptr; }
  int semantic_dim() const {
    return text_features_ ? static_cast<int>(text_features_->cols) : 0;
  }
  std::span<const float> text_feature(TokenId id) const;
  const FloatMatrix& text_features() const;

  // Returns a copy carrying the given per-token text features. Rows must be
  // unit norm to 1e-6.
  LexicalCodebook with_text_features(FloatMatrix features) const;

  // Restricts the vocabulary to `keep` (in the given order), re-numbering ids.
  LexicalCodebook subset(std::span<const TokenId> keep) const;

  // FNV-1a over the raw embedding bytes, used to check the codebook stays frozen.
  std::uint64_t embedding_checksum() const;

 private:
  std::shared_ptr<const std::vector<std::string>> tokens_;
  std::shared_ptr<const FloatMatrix> embeddings_;
  std::shared_ptr<const FloatMatrix> text_features_;
  std::shared_ptr<const TokenIndex> index_;
  std::size_t max_token_bytes_ = 0;
  std::string source_;
};

// Directory layout: vocab.txt, embeddings.f32, optional text_features.f32,
// meta.json {"c", "d_sem", "source"}. An optional `keep` list restricts the
// loaded vocabulary to a subset of token strings.
LexicalCodebook load_codebook(const std::filesystem::path& dir,
                              const std::vector<std::string>* keep = nullptr);
void save_codebook(const LexicalCodebook& codebook,
                   const std::filesystem::path& dir);

// Deterministic stand-in for an LLM embedding table: distinct pronounceable
// tokens carrying a leading U+2581 boundary mark, i.i.d. normal embeddings
// with unit-norm rows.
LexicalCodebook generate_synthetic_codebook(int vocab_size, int dim,
                                            std::uint64_t seed);

// Boundary mark prefixed to every synthetic token ("▁" in UTF-8).
inline constexpr std::string_view kWordBoundary = "\xE2\x96\x81";

class SemanticProvider;

// Row k is the L2-normalized mean of text_embed(template(token k)) over all
// templates. Each template holds one "{}" slot.
FloatMatrix precompute_text_features(const LexicalCodebook& codebook,
                                     const std::vector<std::string>& templates,
                                     const SemanticProvider& provider);

std::string fill_template(std::string_view templ, std::string_view value);

// s'(I, k) = image_feature . text_feature(k) for every token.
std::vector<double> similarity_raw(std::span<const double> image_feature,
                                   const LexicalCodebook& codebook);

// Min-max normalization to [0,1]; a constant input maps to all zeros.
std::vector<double> normalize_similarity(std::span<const double> raw);

struct SimilarityProfile {
  std::vector<double> raw;
  std::vector<double> normalized;
};
SimilarityProfile similarity_profile(std::span<const double> image_feature,
                                     const LexicalCodebook& codebook);

// Ids with normalized similarity >= rho, ascending.
std::vector<TokenId> candidate_pool(const SimilarityProfile& profile, double rho);

// argmin_k ||z - e(k)||^2 with ties going to the smallest id.
TokenId nearest_token(std::span<const double> z, const LexicalCodebook& codebook);

// Squared distances from z to every codeword.
void squared_distances(std::span<const double> z, const LexicalCodebook& codebook,
                       std::span<double> out);

}  // namespace lexpyr

#endif  // LEXPYR_CODEBOOK_H_
