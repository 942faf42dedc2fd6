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

#ifndef LEXPYR_PYRAMID_H_
#define LEXPYR_PYRAMID_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lexpyr/codebook.h"

namespace lexpyr {

struct LayerShape {
  int rows = 0;
  int cols = 0;
  int count() const { return rows * cols; }
  bool operator==(const LayerShape&) const = default;
};

// Layer geometry of a token pyramid. Layers are ordered top (coarsest) to
// bottom; the last layer spans the full latent grid. Semantic guidance
// applies to the first `semantic_depth` layers with one threshold each.
struct PyramidSpec {
  std::vector<LayerShape> layers;
  int semantic_depth = 0;
  std::vector<double> thresholds;
  int latent_dim = 0;

  int depth() const { return static_cast<int>(layers.size()); }
  int grid_rows() const { return layers.back().rows; }
  int grid_cols() const { return layers.back().cols; }
  // Throws InvalidArgument when shapes do not nest or thresholds increase.
  void validate() const;
  bool operator==(const PyramidSpec&) const = default;

  // 2^k x 2^k layers for the given exponents.
  static PyramidSpec square(const std::vector<int>& log2_sizes, int latent_dim,
                            std::vector<double> thresholds = {});
};

void to_json(nlohmann::json& j, const PyramidSpec& spec);
void from_json(const nlohmann::json& j, PyramidSpec& spec);

// One-based grid coordinates, matching the dilation formula.
struct GridPos {
  int row = 0;
  int col = 0;
  bool operator==(const GridPos&) const = default;
};

// Positions selected at `layer` (1-based): row h'i - ceil(h'/2) + 1 for
// i in [1, h_l] with h' = h_D / h_l, and likewise for columns.
std::vector<GridPos> dilation_positions(const PyramidSpec& spec, int layer);

struct TokenCounts {
  std::vector<int> per_layer;
  std::vector<int> cumulative;
};
TokenCounts token_counts(const PyramidSpec& spec);

// Per-layer token grids, row-major.
struct TokenPyramid {
  PyramidSpec spec;
  std::vector<std::vector<TokenId>> layers;

  // Layer-by-layer raster-order id sequence for the first `up_to_layer` layers.
  std::vector<TokenId> flat(int up_to_layer) const;
  std::vector<TokenId> flat() const { return flat(spec.depth()); }
  static TokenPyramid from_flat(const PyramidSpec& spec,
                                std::span<const TokenId> ids);
  void validate(std::size_t vocab_size) const;
  bool operator==(const TokenPyramid&) const = default;
};

void to_json(nlohmann::json& j, const TokenPyramid& pyramid);
void from_json(const nlohmann::json& j, TokenPyramid& pyramid);

// Continuous embeddings on the h_D x w_D grid, row-major with the channel
// dimension innermost.
struct LatentGrid {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> values;

  LatentGrid() = default;
  LatentGrid(int r, int c, int d)
      : rows(r), cols(c), dim(d),
        values(static_cast<std::size_t>(r) * c * d, 0.0) {}
  std::span<double> at(int row, int col) {
    return {values.data() + (static_cast<std::size_t>(row) * cols + col) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> at(int row, int col) const {
    return {values.data() + (static_cast<std::size_t>(row) * cols + col) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Remainder embedding used to pick the token of `layer` at a grid position
// (0-based layer and coordinates). `prior` counts earlier layers that also
// selected the position.
struct Remainder {
  int layer = 0;
  int row = 0;
  int col = 0;
  int prior = 0;
  TokenId token = 0;
  std::vector<double> value;
};

struct Quantization {
  TokenPyramid pyramid;
  std::vector<Remainder> remainders;  // ordered by layer, then raster position
};

// Streaming average quantization: z_l = z + sum_{i<l, selected} (z - e(k_i)).
Quantization saq_encode(const LatentGrid& z, const LexicalCodebook& codebook,
                        const PyramidSpec& spec);

// Residual quantization baseline on the same position sets:
// r_1 = z, r_{l+1} = r_l - e(k_l) at selected positions.
Quantization rq_encode(const LatentGrid& z, const LexicalCodebook& codebook,
                       const PyramidSpec& spec);

enum class QuantizerKind { kStreamingAverage, kResidual };

std::string_view quantizer_name(QuantizerKind kind);  // "saq" or "rq"
QuantizerKind parse_quantizer(std::string_view name);

Quantization encode_pyramid(const LatentGrid& z, const LexicalCodebook& codebook,
                            const PyramidSpec& spec, QuantizerKind kind);

// d(remainder)/dz at a position with `prior` earlier selections.
inline double remainder_scale(QuantizerKind kind, int prior) {
  return kind == QuantizerKind::kStreamingAverage ? prior + 1.0 : 1.0;
}

// Exact mean of the selected codewords over layers 1..layer at each position;
// zero where no layer up to `layer` selected the position.
LatentGrid reconstruct_embeddings(const TokenPyramid& pyramid,
                                  const LexicalCodebook& codebook, int layer);

// All depths at once; element l-1 holds the reconstruction up to layer l.
std::vector<LatentGrid> reconstruct_all(const TokenPyramid& pyramid,
                                        const LexicalCodebook& codebook);

// Sum of residual codewords, the RQ reconstruction for comparison.
LatentGrid reconstruct_residual(const TokenPyramid& pyramid,
                                const LexicalCodebook& codebook, int layer);

// Per-depth reconstructions for either quantizer; element l-1 is depth l.
std::vector<LatentGrid> reconstruct_layers(const TokenPyramid& pyramid,
                                           const LexicalCodebook& codebook,
                                           QuantizerKind kind);

// Concatenates token strings of layers 1..up_to_layer in raster order.
std::string flatten(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                    int up_to_layer, std::string_view separator = "");
std::string flatten_ids(std::span<const TokenId> ids,
                        const LexicalCodebook& codebook,
                        std::string_view separator = "");

struct Segmentation {
  std::vector<TokenId> ids;
  std::size_t consumed = 0;     // bytes covered by ids (and separators)
  std::string unparsed;         // suffix that matched no token
};

// Greedy longest-match segmentation against the vocabulary. Stops at the
// first byte offset where no token matches and reports the remainder.
Segmentation segment_tokens(std::string_view text,
                            const LexicalCodebook& codebook,
                            std::string_view separator = "",
                            std::size_t max_tokens = static_cast<std::size_t>(-1));

struct ParsedPyramid {
  std::vector<std::vector<TokenId>> layers;  // last layer may be partial
  std::size_t token_count = 0;
  bool complete = false;
  TokenPyramid to_pyramid(const PyramidSpec& spec) const;
};

// Strict inverse of flatten: throws ParseError at the first unmatched byte
// or when the text holds more tokens than layers 1..up_to_layer.
ParsedPyramid parse_string(std::string_view text, const PyramidSpec& spec,
                           const LexicalCodebook& codebook, int up_to_layer,
                           std::string_view separator = "");

}  // namespace lexpyr

#endif  // LEXPYR_PYRAMID_H_
