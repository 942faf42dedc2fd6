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


#include "lexpyr/nn.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Core>

#include "lexpyr/error.h"

namespace lexpyr::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void init_uniform(std::vector<T>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (T& x : v) x = static_cast<T>(u(rng));
}

// Output columns [lo, hi) whose input column ox*stride + k - pad is in range.
std::pair<int, int> valid_range(int k, int pad, int stride, int in_w, int out_w) {
  int lo = 0;
  while (lo < out_w && lo * stride + k - pad < 0) ++lo;
  int hi = out_w;
  while (hi > lo && (hi - 1) * stride + k - pad >= in_w) --hi;
  return {lo, hi};
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad) {
  if (in < 1 || out < 1 || kernel < 1 || stride < 1 || pad < 0) {
    throw InvalidArgument("bad convolution geometry");
  }
  const std::size_t fan_in = static_cast<std::size_t>(in) * kernel * kernel;
  weight_.value.resize(static_cast<std::size_t>(out) * fan_in);
  bias_.value.resize(out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  init_uniform(weight_.value, bound, rng);
  init_uniform(bias_.value, bound, rng);
  weight_.grad.assign(weight_.value.size(), T(0));
  bias_.grad.assign(bias_.value.size(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c != in_) {
    throw InvalidArgument("conv expects " + std::to_string(in_) + " channels, got " +
                          std::to_string(x.c));
  }
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
  out_w_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
  if (out_h_ < 1 || out_w_ < 1) throw InvalidArgument("conv input too small");
  const std::size_t kk = static_cast<std::size_t>(in_) * k_ * k_;
  const std::size_t p = static_cast<std::size_t>(x.n) * out_h_ * out_w_;
  col_.resize(kk * p);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        T* row = col_.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * p;
        const auto [lo, hi] = valid_range(kx, pad_, stride_, x.w, out_w_);
        for (int b = 0; b < x.n; ++b) {
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            T* dst = row + (static_cast<std::size_t>(b) * out_h_ + oy) * out_w_;
            if (iy < 0 || iy >= x.h) {
              std::fill(dst, dst + out_w_, T(0));
              continue;
            }
            const T* src = &x.data[((static_cast<std::size_t>(ci) * x.n + b) * x.h + iy) * x.w];
            std::fill(dst, dst + lo, T(0));
            const int shift = kx - pad_;
            if (stride_ == 1) {
              std::copy(src + lo + shift, src + hi + shift, dst + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride_ + shift];
            }
            std::fill(dst + hi, dst + out_w_, T(0));
          }
        }
      }
    }
  }
  Tensor<T> y(out_, x.n, out_h_, out_w_);
  ConstMapMat<T> wm(weight_.value.data(), out_, kk);
  ConstMapMat<T> cm(col_.data(), kk, p);
  MapMat<T> ym(y.data.data(), out_, p);
  ym.noalias() = wm * cm;
  for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& g) {
  const std::size_t kk = static_cast<std::size_t>(in_) * k_ * k_;
  const std::size_t p = static_cast<std::size_t>(in_n_) * out_h_ * out_w_;
  if (g.size() != static_cast<std::size_t>(out_) * p) {
    throw InvalidArgument("conv backward: gradient shape mismatch");
  }
  ConstMapMat<T> gm(g.data.data(), out_, p);
  ConstMapMat<T> cm(col_.data(), kk, p);
  MapMat<T> gw(weight_.grad.data(), out_, kk);
  gw.noalias() += gm * cm.transpose();
  for (int o = 0; o < out_; ++o) bias_.grad[o] += gm.row(o).sum();

  ConstMapMat<T> wm(weight_.value.data(), out_, kk);
  dcol_.resize(kk * p);
  MapMat<T> dcol(dcol_.data(), kk, p);
  dcol.noalias() = wm.transpose() * gm;
  Tensor<T> dx(in_, in_n_, in_h_, in_w_);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const T* row = dcol_.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * p;
        const auto [lo, hi] = valid_range(kx, pad_, stride_, in_w_, out_w_);
        const int shift = kx - pad_;
        for (int b = 0; b < in_n_; ++b) {
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_h_) continue;
            const T* src = row + (static_cast<std::size_t>(b) * out_h_ + oy) * out_w_;
            T* dst = &dx.data[((static_cast<std::size_t>(ci) * in_n_ + b) * in_h_ + iy) * in_w_];
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride_ + shift] += src[ox];
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<Param<T>*>& out) {
  weight_.name = prefix + ".weight";
  bias_.name = prefix + ".bias";
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
GroupNorm<T>::GroupNorm(int groups, int channels, double eps)
    : groups_(groups), channels_(channels), eps_(eps) {
  if (groups < 1 || channels % groups != 0) {
    throw InvalidArgument("group norm: " + std::to_string(channels) +
                          " channels not divisible into " + std::to_string(groups) +
                          " groups");
  }
  gamma_.value.assign(channels, T(1));
  beta_.value.assign(channels, T(0));
  gamma_.grad.assign(channels, T(0));
  beta_.grad.assign(channels, T(0));
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x) {
  if (x.c != channels_) throw InvalidArgument("group norm channel mismatch");
  const int cg = channels_ / groups_;
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  xhat_ = Tensor<T>(x.c, x.n, x.h, x.w);
  inv_std_.assign(static_cast<std::size_t>(x.n) * groups_, T(0));
  Tensor<T> y(x.c, x.n, x.h, x.w);
  const double count = static_cast<double>(cg) * hw;
  for (int b = 0; b < x.n; ++b) {
    for (int g = 0; g < groups_; ++g) {
      double sum = 0.0;
      double sq = 0.0;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const T* src = &x.data[(static_cast<std::size_t>(ch) * x.n + b) * hw];
        for (std::size_t i = 0; i < hw; ++i) {
          sum += src[i];
          sq += static_cast<double>(src[i]) * src[i];
        }
      }
      const double mean = sum / count;
      const double var = std::max(0.0, sq / count - mean * mean);
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[static_cast<std::size_t>(b) * groups_ + g] = static_cast<T>(inv);
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(ch) * x.n + b) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T xh = static_cast<T>((x.data[off + i] - mean) * inv);
          xhat_.data[off + i] = xh;
          y.data[off + i] = gamma_.value[ch] * xh + beta_.value[ch];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& g) {
  const int cg = channels_ / groups_;
  const std::size_t hw = static_cast<std::size_t>(g.h) * g.w;
  const double count = static_cast<double>(cg) * hw;
  Tensor<T> dx(g.c, g.n, g.h, g.w);
  for (int b = 0; b < g.n; ++b) {
    for (int grp = 0; grp < groups_; ++grp) {
      double mean_d = 0.0;
      double mean_dx = 0.0;
      for (int ch = grp * cg; ch < (grp + 1) * cg; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(ch) * g.n + b) * hw;
        double sg = 0.0;
        double sgx = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          sg += g.data[off + i];
          sgx += static_cast<double>(g.data[off + i]) * xhat_.data[off + i];
        }
        gamma_.grad[ch] += static_cast<T>(sgx);
        beta_.grad[ch] += static_cast<T>(sg);
        mean_d += sg * gamma_.value[ch];
        mean_dx += sgx * gamma_.value[ch];
      }
      mean_d /= count;
      mean_dx /= count;
      const double inv = inv_std_[static_cast<std::size_t>(b) * groups_ + grp];
      for (int ch = grp * cg; ch < (grp + 1) * cg; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(ch) * g.n + b) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(g.data[off + i]) * gamma_.value[ch];
          dx.data[off + i] =
              static_cast<T>(inv * (d - mean_d - xhat_.data[off + i] * mean_dx));
        }
      }
    }
  }
  return dx;
}

template <typename T>
void GroupNorm<T>::collect(const std::string& prefix, std::vector<Param<T>*>& out) {
  gamma_.name = prefix + ".gamma";
  beta_.name = prefix + ".beta";
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
Tensor<T> SiLU<T>::forward(const Tensor<T>& x) {
  x_ = x;
  Tensor<T> y = x;
  for (T& v : y.data) v = v * sigmoid(v);
  return y;
}

template <typename T>
Tensor<T> SiLU<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T s = sigmoid(x_.data[i]);
    dx.data[i] *= s * (T(1) + x_.data[i] * (T(1) - s));
  }
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  y_ = x;
  for (T& v : y_.data) v = sigmoid(v);
  return y_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (T(1) - y_.data[i]);
  return dx;
}

template <typename T>
Tensor<T> Upsample2x<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(x.c, x.n, 2 * x.h, 2 * x.w);
  for (int ch = 0; ch < x.c; ++ch) {
    for (int b = 0; b < x.n; ++b) {
      for (int iy = 0; iy < y.h; ++iy) {
        for (int ix = 0; ix < y.w; ++ix) y.at(ch, b, iy, ix) = x.at(ch, b, iy / 2, ix / 2);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Upsample2x<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx(g.c, g.n, g.h / 2, g.w / 2);
  for (int ch = 0; ch < g.c; ++ch) {
    for (int b = 0; b < g.n; ++b) {
      for (int iy = 0; iy < g.h; ++iy) {
        for (int ix = 0; ix < g.w; ++ix) dx.at(ch, b, iy / 2, ix / 2) += g.at(ch, b, iy, ix);
      }
    }
  }
  return dx;
}

template <typename T>
void Sequential<T>::add(std::string name, std::unique_ptr<Module<T>> m) {
  names_.push_back(std::move(name));
  modules_.push_back(std::move(m));
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& m : modules_) h = m->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& g) {
  Tensor<T> d = g;
  for (auto it = modules_.rbegin(); it != modules_.rend(); ++it) d = (*it)->backward(d);
  return d;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, std::vector<Param<T>*>& out) {
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    modules_[i]->collect(prefix.empty() ? names_[i] : prefix + "." + names_[i], out);
  }
}

template <typename T>
ResBlock<T>::ResBlock(int in, int out, int groups, std::mt19937_64& rng) {
  body_.add("norm1", std::make_unique<GroupNorm<T>>(groups, in));
  body_.add("act1", std::make_unique<SiLU<T>>());
  body_.add("conv1", std::make_unique<Conv2d<T>>(in, out, 3, 1, 1, rng));
  body_.add("norm2", std::make_unique<GroupNorm<T>>(groups, out));
  body_.add("act2", std::make_unique<SiLU<T>>());
  body_.add("conv2", std::make_unique<Conv2d<T>>(out, out, 3, 1, 1, rng));
  if (in != out) shortcut_ = std::make_unique<Conv2d<T>>(in, out, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = body_.forward(x);
  const Tensor<T> s = shortcut_ ? shortcut_->forward(x) : x;
  for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += s.data[i];
  return h;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = body_.backward(g);
  const Tensor<T> ds = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
  return dx;
}

template <typename T>
void ResBlock<T>::collect(const std::string& prefix, std::vector<Param<T>*>& out) {
  body_.collect(prefix, out);
  if (shortcut_) shortcut_->collect(prefix + ".shortcut", out);
}

template <typename T>
double Adam<T>::step(const std::vector<Param<T>*>& params, double lr) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto* p : params) {
      m_.emplace_back(p->value.size(), T(0));
      v_.emplace_back(p->value.size(), T(0));
    }
  }
  double sq = 0.0;
  for (const auto* p : params) {
    for (T g : p->grad) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double scale =
      (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] * scale;
      m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g * g);
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p.value[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + config_.eps));
    }
  }
  return norm;
}

template <typename T>
void zero_grad(const std::vector<Param<T>*>& params) {
  for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

#define LEXPYR_NN_INSTANTIATE(T)                                      \
  template class Conv2d<T>;                                           \
  template class GroupNorm<T>;                                        \
  template class SiLU<T>;                                             \
  template class Sigmoid<T>;                                          \
  template class Upsample2x<T>;                                       \
  template class Sequential<T>;                                       \
  template class ResBlock<T>;                                         \
  template class Adam<T>;                                             \
  template void zero_grad<T>(const std::vector<Param<T>*>& params);

LEXPYR_NN_INSTANTIATE(float)
LEXPYR_NN_INSTANTIATE(double)

}  // namespace lexpyr::nn
