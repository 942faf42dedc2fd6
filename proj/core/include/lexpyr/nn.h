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


#ifndef LEXPYR_NN_H_
#define LEXPYR_NN_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace lexpyr::nn {

// Activations are stored channel-major: [C][N][H][W]. A convolution then
// reduces to one GEMM over all images of the batch.
template <typename T>
struct Tensor {
  int c = 0;
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int channels, int batch, int height, int width)
      : c(channels), n(batch), h(height), w(width),
        data(static_cast<std::size_t>(channels) * batch * height * width, T(0)) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(n) * h * w; }
  T& at(int ch, int b, int y, int x) {
    return data[((static_cast<std::size_t>(ch) * n + b) * h + y) * w + x];
  }
  T at(int ch, int b, int y, int x) const {
    return data[((static_cast<std::size_t>(ch) * n + b) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const {
    return c == o.c && n == o.n && h == o.h && w == o.w;
  }
};

template <typename T>
struct Param {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  // forward caches whatever backward needs; backward accumulates parameter
  // gradients and returns the input gradient.
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<Param<T>*>& out) {
    (void)prefix;
    (void)out;
  }
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<Param<T>*>& out) override;

 private:
  int in_, out_, k_, stride_, pad_;
  Param<T> weight_;  // [out][in*k*k]
  Param<T> bias_;
  std::vector<T> col_;
  std::vector<T> dcol_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

template <typename T>
class GroupNorm : public Module<T> {
 public:
  GroupNorm(int groups, int channels, double eps = 1e-6);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<Param<T>*>& out) override;

 private:
  int groups_, channels_;
  double eps_;
  Param<T> gamma_;
  Param<T> beta_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;  // [n][group]
};

template <typename T>
class SiLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> x_;
};

template <typename T>
class Sigmoid : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> y_;
};

template <typename T>
class Upsample2x : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
};

template <typename T>
class Sequential : public Module<T> {
 public:
  void add(std::string name, std::unique_ptr<Module<T>> m);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<Param<T>*>& out) override;
  std::size_t size() const { return modules_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Module<T>>> modules_;
};

// GN -> SiLU -> conv3x3 -> GN -> SiLU -> conv3x3, plus identity or 1x1
// shortcut when the channel count changes.
template <typename T>
class ResBlock : public Module<T> {
 public:
  ResBlock(int in, int out, int groups, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<Param<T>*>& out) override;

 private:
  Sequential<T> body_;
  std::unique_ptr<Conv2d<T>> shortcut_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  // Applies one update with learning rate `lr` and returns the pre-clip
  // gradient norm.
  double step(const std::vector<Param<T>*>& params, double lr);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // State access for checkpointing; moments are laid out per parameter.
  std::vector<std::vector<T>>& first_moment() { return m_; }
  std::vector<std::vector<T>>& second_moment() { return v_; }
  const std::vector<std::vector<T>>& first_moment() const { return m_; }
  const std::vector<std::vector<T>>& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

template <typename T>
void zero_grad(const std::vector<Param<T>*>& params);

}  // namespace lexpyr::nn

#endif  // LEXPYR_NN_H_
