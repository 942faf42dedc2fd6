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

#include "lexpyr/pyramid.h"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "lexpyr/error.h"

namespace lexpyr {
namespace {

// 1-based indices selected along one axis of extent `full` for a layer of
// extent `part`.
std::vector<int> dilation_axis(int full, int part) {
  const int stride = full / part;
  const int offset = (stride + 1) / 2;  // ceil(stride / 2)
  std::vector<int> out(static_cast<std::size_t>(part));
  for (int i = 1; i <= part; ++i) out[i - 1] = stride * i - offset + 1;
  return out;
}

// For each layer, the index of each grid cell within that layer's raster
// order, or -1 when the layer does not select the cell.
std::vector<std::vector<int>> layer_cell_maps(const PyramidSpec& spec) {
  const int rows = spec.grid_rows();
  const int cols = spec.grid_cols();
  std::vector<std::vector<int>> maps(spec.layers.size(),
                                     std::vector<int>(static_cast<std::size_t>(rows) * cols, -1));
  for (int l = 0; l < spec.depth(); ++l) {
    const auto& shape = spec.layers[l];
    const auto rs = dilation_axis(rows, shape.rows);
    const auto cs = dilation_axis(cols, shape.cols);
    for (int i = 0; i < shape.rows; ++i) {
      for (int j = 0; j < shape.cols; ++j) {
        maps[l][static_cast<std::size_t>(rs[i] - 1) * cols + (cs[j] - 1)] =
            i * shape.cols + j;
      }
    }
  }
  return maps;
}

void check_grid(const LatentGrid& z, const LexicalCodebook& codebook,
                const PyramidSpec& spec) {
  spec.validate();
  if (z.rows != spec.grid_rows() || z.cols != spec.grid_cols()) {
    throw InvalidArgument("latent grid " + std::to_string(z.rows) + "x" +
                          std::to_string(z.cols) + " does not match pyramid grid " +
                          std::to_string(spec.grid_rows()) + "x" +
                          std::to_string(spec.grid_cols()));
  }
  if (z.dim != codebook.dim()) {
    throw InvalidArgument("latent dim " + std::to_string(z.dim) +
                          " != codebook dim " + std::to_string(codebook.dim()));
  }
  for (double v : z.values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite latent value");
  }
}

enum class Update { kStreamingAverage, kResidual };

Quantization quantize(const LatentGrid& z, const LexicalCodebook& codebook,
                      const PyramidSpec& spec, Update update) {
  check_grid(z, codebook, spec);
  const auto maps = layer_cell_maps(spec);
  const std::size_t cells = static_cast<std::size_t>(z.rows) * z.cols;
  const auto dim = static_cast<std::size_t>(z.dim);

  // Running remainder per cell; starts at z for both schemes.
  std::vector<double> state = z.values;
  std::vector<int> prior(cells, 0);

  Quantization q;
  q.pyramid.spec = spec;
  q.pyramid.layers.resize(spec.layers.size());
  for (int l = 0; l < spec.depth(); ++l) {
    q.pyramid.layers[l].resize(static_cast<std::size_t>(spec.layers[l].count()));
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const int slot = maps[l][cell];
      if (slot < 0) continue;
      std::span<double> current(state.data() + cell * dim, dim);
      const TokenId k = nearest_token(current, codebook);
      q.pyramid.layers[l][slot] = k;

      Remainder r;
      r.layer = l;
      r.row = static_cast<int>(cell) / z.cols;
      r.col = static_cast<int>(cell) % z.cols;
      r.prior = prior[cell];
      r.token = k;
      r.value.assign(current.begin(), current.end());
      q.remainders.push_back(std::move(r));

      const auto e = codebook.embedding(k);
      const double* orig = z.values.data() + cell * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        if (update == Update::kStreamingAverage) {
          current[j] += orig[j] - static_cast<double>(e[j]);
        } else {
          current[j] -= static_cast<double>(e[j]);
        }
      }
      ++prior[cell];
    }
  }
  return q;
}

}  // namespace

void PyramidSpec::validate() const {
  if (layers.empty()) throw InvalidArgument("pyramid needs at least one layer");
  const LayerShape& last = layers.back();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    if (s.rows < 1 || s.cols < 1) throw InvalidArgument("layer shapes must be positive");
    if (l + 1 < layers.size() &&
        (s.rows > layers[l + 1].rows || s.cols > layers[l + 1].cols)) {
      throw InvalidArgument("layer " + std::to_string(l + 1) +
                            " is larger than the layer below it");
    }
    if (last.rows % s.rows != 0 || last.cols % s.cols != 0) {
      throw InvalidArgument("layer " + std::to_string(l + 1) +
                            " does not evenly divide the full grid");
    }
  }
  if (semantic_depth < 0 || semantic_depth > depth()) {
    throw InvalidArgument("semantic depth out of range");
  }
  if (static_cast<int>(thresholds.size()) != semantic_depth) {
    throw InvalidArgument("need one threshold per semantic layer");
  }
  for (std::size_t l = 0; l < thresholds.size(); ++l) {
    if (thresholds[l] < 0.0 || thresholds[l] > 1.0) {
      throw InvalidArgument("thresholds must lie in [0,1]");
    }
    if (l > 0 && thresholds[l] > thresholds[l - 1]) {
      throw InvalidArgument("thresholds must be non-increasing");
    }
  }
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be positive");
}

PyramidSpec PyramidSpec::square(const std::vector<int>& log2_sizes, int latent_dim,
                                std::vector<double> thresholds) {
  PyramidSpec spec;
  for (int k : log2_sizes) spec.layers.push_back({1 << k, 1 << k});
  spec.semantic_depth = static_cast<int>(thresholds.size());
  spec.thresholds = std::move(thresholds);
  spec.latent_dim = latent_dim;
  spec.validate();
  return spec;
}

void to_json(nlohmann::json& j, const PyramidSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : spec.layers) layers.push_back({s.rows, s.cols});
  j = {{"layers", layers},
       {"semantic_depth", spec.semantic_depth},
       {"thresholds", spec.thresholds},
       {"latent_dim", spec.latent_dim}};
}

void from_json(const nlohmann::json& j, PyramidSpec& spec) {
  spec.layers.clear();
  for (const auto& s : j.at("layers")) {
    spec.layers.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  }
  spec.thresholds = j.value("thresholds", std::vector<double>{});
  spec.semantic_depth = j.value("semantic_depth", static_cast<int>(spec.thresholds.size()));
  spec.latent_dim = j.at("latent_dim").get<int>();
  spec.validate();
}

std::vector<GridPos> dilation_positions(const PyramidSpec& spec, int layer) {
  if (layer < 1 || layer > spec.depth()) {
    throw InvalidArgument("layer index " + std::to_string(layer) + " out of range");
  }
  const auto& shape = spec.layers[layer - 1];
  const auto rs = dilation_axis(spec.grid_rows(), shape.rows);
  const auto cs = dilation_axis(spec.grid_cols(), shape.cols);
  std::vector<GridPos> out;
  out.reserve(static_cast<std::size_t>(shape.count()));
  for (int r : rs) {
    for (int c : cs) out.push_back({r, c});
  }
  return out;
}

TokenCounts token_counts(const PyramidSpec& spec) {
  TokenCounts t;
  int total = 0;
  for (const auto& s : spec.layers) {
    t.per_layer.push_back(s.count());
    total += s.count();
    t.cumulative.push_back(total);
  }
  return t;
}

std::vector<TokenId> TokenPyramid::flat(int up_to_layer) const {
  if (up_to_layer < 0 || up_to_layer > static_cast<int>(layers.size())) {
    throw InvalidArgument("layer count out of range");
  }
  std::vector<TokenId> out;
  for (int l = 0; l < up_to_layer; ++l) {
    out.insert(out.end(), layers[l].begin(), layers[l].end());
  }
  return out;
}

TokenPyramid TokenPyramid::from_flat(const PyramidSpec& spec,
                                     std::span<const TokenId> ids) {
  const auto counts = token_counts(spec);
  if (ids.size() != static_cast<std::size_t>(counts.cumulative.back())) {
    throw InvalidArgument("expected " + std::to_string(counts.cumulative.back()) +
                          " ids, got " + std::to_string(ids.size()));
  }
  TokenPyramid p;
  p.spec = spec;
  std::size_t at = 0;
  for (int n : counts.per_layer) {
    p.layers.emplace_back(ids.begin() + at, ids.begin() + at + n);
    at += n;
  }
  return p;
}

void TokenPyramid::validate(std::size_t vocab_size) const {
  if (layers.size() != spec.layers.size()) {
    throw InvalidArgument("pyramid layer count does not match its spec");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != static_cast<std::size_t>(spec.layers[l].count())) {
      throw InvalidArgument("layer " + std::to_string(l + 1) + " has wrong size");
    }
    for (TokenId id : layers[l]) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
        throw InvalidArgument("token id " + std::to_string(id) + " out of range");
      }
    }
  }
}

void to_json(nlohmann::json& j, const TokenPyramid& pyramid) {
  j = {{"spec", pyramid.spec}, {"layers", pyramid.layers}};
}

void from_json(const nlohmann::json& j, TokenPyramid& pyramid) {
  pyramid.spec = j.at("spec").get<PyramidSpec>();
  pyramid.layers = j.at("layers").get<std::vector<std::vector<TokenId>>>();
  if (pyramid.layers.size() != pyramid.spec.layers.size()) {
    throw FormatError("pyramid JSON layer count does not match its spec");
  }
  for (std::size_t l = 0; l < pyramid.layers.size(); ++l) {
    if (pyramid.layers[l].size() != static_cast<std::size_t>(pyramid.spec.layers[l].count())) {
      throw FormatError("pyramid JSON layer " + std::to_string(l + 1) + " has wrong size");
    }
  }
}

Quantization saq_encode(const LatentGrid& z, const LexicalCodebook& codebook,
                        const PyramidSpec& spec) {
  return quantize(z, codebook, spec, Update::kStreamingAverage);
}

Quantization rq_encode(const LatentGrid& z, const LexicalCodebook& codebook,
                       const PyramidSpec& spec) {
  return quantize(z, codebook, spec, Update::kResidual);
}

std::string_view quantizer_name(QuantizerKind kind) {
  return kind == QuantizerKind::kStreamingAverage ? "saq" : "rq";
}

QuantizerKind parse_quantizer(std::string_view name) {
  if (name == "saq") return QuantizerKind::kStreamingAverage;
  if (name == "rq") return QuantizerKind::kResidual;
  throw InvalidArgument("unknown quantizer '" + std::string(name) + "' (saq|rq)");
}

Quantization encode_pyramid(const LatentGrid& z, const LexicalCodebook& codebook,
                            const PyramidSpec& spec, QuantizerKind kind) {
  return kind == QuantizerKind::kStreamingAverage ? saq_encode(z, codebook, spec)
                                                  : rq_encode(z, codebook, spec);
}

std::vector<LatentGrid> reconstruct_layers(const TokenPyramid& pyramid,
                                           const LexicalCodebook& codebook,
                                           QuantizerKind kind) {
  if (kind == QuantizerKind::kStreamingAverage) return reconstruct_all(pyramid, codebook);
  std::vector<LatentGrid> out;
  for (int l = 1; l <= pyramid.spec.depth(); ++l) {
    out.push_back(reconstruct_residual(pyramid, codebook, l));
  }
  return out;
}

std::vector<LatentGrid> reconstruct_all(const TokenPyramid& pyramid,
                                        const LexicalCodebook& codebook) {
  const auto& spec = pyramid.spec;
  pyramid.validate(codebook.size());
  const int rows = spec.grid_rows();
  const int cols = spec.grid_cols();
  const auto dim = static_cast<std::size_t>(codebook.dim());
  const auto maps = layer_cell_maps(spec);
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;

  std::vector<double> sums(cells * dim, 0.0);
  std::vector<int> counts(cells, 0);
  std::vector<LatentGrid> out;
  for (int l = 0; l < spec.depth(); ++l) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const int slot = maps[l][cell];
      if (slot < 0) continue;
      const auto e = codebook.embedding(pyramid.layers[l][slot]);
      for (std::size_t j = 0; j < dim; ++j) sums[cell * dim + j] += e[j];
      ++counts[cell];
    }
    LatentGrid g(rows, cols, static_cast<int>(dim));
    for (std::size_t cell = 0; cell < cells; ++cell) {
      if (counts[cell] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        g.values[cell * dim + j] = sums[cell * dim + j] / counts[cell];
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

LatentGrid reconstruct_embeddings(const TokenPyramid& pyramid,
                                  const LexicalCodebook& codebook, int layer) {
  if (layer < 1 || layer > pyramid.spec.depth()) {
    throw InvalidArgument("layer index " + std::to_string(layer) + " out of range");
  }
  auto all = reconstruct_all(pyramid, codebook);
  return std::move(all[layer - 1]);
}

LatentGrid reconstruct_residual(const TokenPyramid& pyramid,
                                const LexicalCodebook& codebook, int layer) {
  const auto& spec = pyramid.spec;
  if (layer < 1 || layer > spec.depth()) {
    throw InvalidArgument("layer index " + std::to_string(layer) + " out of range");
  }
  pyramid.validate(codebook.size());
  const auto maps = layer_cell_maps(spec);
  const auto dim = static_cast<std::size_t>(codebook.dim());
  LatentGrid g(spec.grid_rows(), spec.grid_cols(), static_cast<int>(dim));
  const std::size_t cells = static_cast<std::size_t>(g.rows) * g.cols;
  for (int l = 0; l < layer; ++l) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const int slot = maps[l][cell];
      if (slot < 0) continue;
      const auto e = codebook.embedding(pyramid.layers[l][slot]);
      for (std::size_t j = 0; j < dim; ++j) g.values[cell * dim + j] += e[j];
    }
  }
  return g;
}

std::string flatten_ids(std::span<const TokenId> ids, const LexicalCodebook& codebook,
                        std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= codebook.size()) {
      throw InvalidArgument("token id " + std::to_string(id) + " out of range");
    }
    if (i > 0) out += separator;
    out += codebook.token(id);
  }
  return out;
}

std::string flatten(const TokenPyramid& pyramid, const LexicalCodebook& codebook,
                    int up_to_layer, std::string_view separator) {
  if (up_to_layer < 1 || up_to_layer > pyramid.spec.depth()) {
    throw InvalidArgument("layer count " + std::to_string(up_to_layer) + " out of range");
  }
  return flatten_ids(pyramid.flat(up_to_layer), codebook, separator);
}

Segmentation segment_tokens(std::string_view text, const LexicalCodebook& codebook,
                            std::string_view separator, std::size_t max_tokens) {
  Segmentation seg;
  std::size_t pos = 0;
  while (pos < text.size() && seg.ids.size() < max_tokens) {
    std::size_t start = pos;
    if (!seg.ids.empty() && !separator.empty()) {
      if (text.substr(pos, separator.size()) != separator) break;
      start += separator.size();
    }
    const std::size_t longest =
        std::min(codebook.max_token_bytes(), text.size() - start);
    std::optional<TokenId> match;
    std::size_t len = longest;
    for (; len > 0; --len) {
      match = codebook.find(text.substr(start, len));
      if (match) break;
    }
    if (!match) break;
    seg.ids.push_back(*match);
    pos = start + len;
  }
  seg.consumed = pos;
  seg.unparsed = std::string(text.substr(pos));
  return seg;
}

ParsedPyramid parse_string(std::string_view text, const PyramidSpec& spec,
                           const LexicalCodebook& codebook, int up_to_layer,
                           std::string_view separator) {
  if (text.empty()) throw InvalidArgument("cannot parse an empty string");
  if (up_to_layer < 1 || up_to_layer > spec.depth()) {
    throw InvalidArgument("layer count " + std::to_string(up_to_layer) + " out of range");
  }
  const auto counts = token_counts(spec);
  const auto capacity = static_cast<std::size_t>(counts.cumulative[up_to_layer - 1]);
  const Segmentation seg = segment_tokens(text, codebook, separator, capacity);
  if (!seg.unparsed.empty()) {
    if (seg.ids.size() == capacity) {
      throw ParseError("text holds more tokens than layers 1.." +
                           std::to_string(up_to_layer) + " can take",
                       seg.consumed);
    }
    throw ParseError("no vocabulary token matches", seg.consumed);
  }

  ParsedPyramid out;
  out.token_count = seg.ids.size();
  std::size_t at = 0;
  for (int l = 0; l < up_to_layer && at < seg.ids.size(); ++l) {
    const std::size_t n = std::min<std::size_t>(counts.per_layer[l], seg.ids.size() - at);
    out.layers.emplace_back(seg.ids.begin() + at, seg.ids.begin() + at + n);
    at += n;
  }
  out.complete = seg.ids.size() == capacity;
  return out;
}

TokenPyramid ParsedPyramid::to_pyramid(const PyramidSpec& spec) const {
  std::vector<TokenId> ids;
  for (const auto& layer : layers) ids.insert(ids.end(), layer.begin(), layer.end());
  if (ids.size() != static_cast<std::size_t>(token_counts(spec).cumulative.back())) {
    throw InvalidArgument("parsed pyramid is incomplete: " + std::to_string(ids.size()) +
                          " tokens");
  }
  return TokenPyramid::from_flat(spec, ids);
}

}  // namespace lexpyr
