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


#ifndef LEXPYR_TESTS_SUPPORT_TOY_OBJECTIVE_H_
#define LEXPYR_TESTS_SUPPORT_TOY_OBJECTIVE_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lexpyr/codebook.h"
#include "lexpyr/objectives.h"
#include "lexpyr/pyramid.h"

namespace lexpyr::testing {

// 4x4x4 latent, 8-token codebook, layers 1x1 / 2x2 / 4x4 with two semantic
// layers. The "decoder" is a fixed random linear map from the depth-D
// reconstruction to an 8x8 image, squashed by a sigmoid.
struct ToyObjective {
  LexicalCodebook codebook;
  PyramidSpec spec;
  LatentGrid z;
  Image real;
  std::vector<std::vector<TokenId>> pools;
  std::vector<double> decoder;  // [64 pixels][64 latent values]
  LossWeights weights;
  std::uint64_t seed = 17;

  static ToyObjective make(unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ToyObjective t{generate_synthetic_codebook(8, 4, seed), PyramidSpec::square({0, 1, 2}, 4, {0.9, 0.8}),
                   LatentGrid(4, 4, 4), Image(8, 8, 1), {}, {}, {}, seed};
    for (double& v : t.z.values) v = n(rng);
    for (float& v : t.real.pixels) v = static_cast<float>(u(rng));
    t.pools = {{1, 4, 6}, {0, 2, 3, 7}};
    t.decoder.resize(64 * 64);
    for (double& v : t.decoder) v = n(rng) * 0.3;
    return t;
  }

  Image decode(const LatentGrid& zhat) const {
    Image out(8, 8, 1);
    for (int p = 0; p < 64; ++p) {
      double s = 0.0;
      for (int k = 0; k < 64; ++k) s += decoder[p * 64 + k] * zhat.values[k];
      out.pixels[p] = static_cast<float>(1.0 / (1.0 + std::exp(-s)));
    }
    return out;
  }

  // Analytic gradient of a pixel-space gradient back to the decoder input.
  LatentGrid decode_backward(const LatentGrid& zhat, const Image& grad) const {
    LatentGrid g(4, 4, 4);
    const Image y = decode(zhat);
    for (int p = 0; p < 64; ++p) {
      const double dy = grad.pixels[p] * y.pixels[p] * (1.0 - y.pixels[p]);
      for (int k = 0; k < 64; ++k) g.values[k] += decoder[p * 64 + k] * dy;
    }
    return g;
  }

  struct Eval {
    Quantization q;
    std::vector<LatentGrid> recon;
    Image decoded;
    ImageObjective objective;
  };

  Eval evaluate(const LatentGrid& latent, QuantizerKind kind = QuantizerKind::kStreamingAverage) const {
    Eval e;
    e.q = encode_pyramid(latent, codebook, spec, kind);
    e.recon = reconstruct_layers(e.q.pyramid, codebook, kind);
    e.decoded = decode(e.recon.back());
    e.objective = image_objective(real, e.decoded, latent, e.q, e.recon, pools, codebook, kind,
                                  weights, seed);
    return e;
  }
};

// Relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale == 0.0 ? 0.0 : std::sqrt(d) / scale;
}

inline std::vector<double> central_difference(const std::vector<double>& x,
                                              const std::function<double(const std::vector<double>&)>& f,
                                              double eps = 1e-6) {
  std::vector<double> g(x.size());
  std::vector<double> p = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = x[i] + eps;
    const double up = f(p);
    p[i] = x[i] - eps;
    const double down = f(p);
    p[i] = x[i];
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

struct GradientReport {
  double semantic = 0.0;
  double commitment = 0.0;
  double appearance_z = 0.0;
  double appearance_pixels = 0.0;
  double total = 0.0;
  double semantic_norm = 0.0;
  bool tokens_stable = true;
};

// Central differences against the analytic gradients of every objective term
// with respect to Z (and the reconstruction, for the pixel term).
inline GradientReport check_gradients(const ToyObjective& toy,
                                      QuantizerKind kind = QuantizerKind::kStreamingAverage) {
  GradientReport r;
  const auto base = toy.evaluate(toy.z, kind);
  const auto& obj = base.objective;
  const double w0 = dynamic_weight(obj.appearance.value, obj.semantic.value);
  const double alpha = toy.weights.alpha;

  auto with = [&](const std::vector<double>& v) {
    LatentGrid g = toy.z;
    g.values = v;
    auto e = toy.evaluate(g, kind);
    if (e.q.pyramid != base.q.pyramid) r.tokens_stable = false;
    return e;
  };
  const auto& x = toy.z.values;
  const auto fd_sem = central_difference(x, [&](const auto& v) { return with(v).objective.semantic.value; });
  const auto fd_commit = central_difference(
      x, [&](const auto& v) { return with(v).objective.appearance.commitment.value; });
  const auto fd_app = central_difference(x, [&](const auto& v) { return with(v).objective.appearance.value; });
  // The dynamic weight is a constant: hold it at its value at the base point.
  const auto fd_total = central_difference(x, [&](const auto& v) {
    const auto e = with(v);
    return e.objective.appearance.value + alpha * w0 * e.objective.semantic.value;
  });

  std::vector<double> commit_grad = obj.appearance.commitment.grad.values;
  std::vector<double> total_grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    total_grad[i] = obj.grad_z_appearance.values[i] + alpha * w0 * obj.grad_z_semantic.values[i];
  }
  r.semantic = relative_error(obj.grad_z_semantic.values, fd_sem);
  r.commitment = relative_error(commit_grad, fd_commit);
  r.appearance_z = relative_error(obj.grad_z_appearance.values, fd_app);
  r.total = relative_error(total_grad, fd_total);
  for (double v : obj.grad_z_semantic.values) r.semantic_norm += v * v;

  // Pixel term against the reconstruction it is evaluated on.
  std::vector<double> pixels(base.decoded.pixels.begin(), base.decoded.pixels.end());
  const auto fd_pix = central_difference(pixels, [&](const auto& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - static_cast<double>(toy.real.pixels[i]);
      s += d * d;
    }
    return s / static_cast<double>(v.size());
  });
  std::vector<double> grad_pix(obj.appearance.grad_reconstruction.pixels.begin(),
                               obj.appearance.grad_reconstruction.pixels.end());
  r.appearance_pixels = relative_error(grad_pix, fd_pix);
  return r;
}

}  // namespace lexpyr::testing

#endif  // LEXPYR_TESTS_SUPPORT_TOY_OBJECTIVE_H_
