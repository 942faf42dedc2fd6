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


#include "lexpyr/incontext.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "lexpyr/prompts.h"

namespace lexpyr {
namespace {

constexpr double kLadderStart = 0.5;
constexpr double kLadderEnd = 0.23;
constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

// Maps level 1..9 (5 excluded) to an index 0..7.
int level_index(int level) {
  if (level < 1 || level > 9 || level == 5) {
    throw InvalidArgument("transform level " + std::to_string(level) +
                          " outside 1..9 (5 excluded)");
  }
  return level < 5 ? level - 1 : level - 2;
}

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

std::vector<TokenId> slice(const std::vector<TokenId>& v, int begin, int end) {
  return {v.begin() + begin, v.begin() + end};
}

}  // namespace

void CorruptionSchedule::validate() const {
  if (rates.empty()) throw InvalidArgument("corruption schedule is empty");
  for (double r : rates) {
    if (!(r >= floor) || r > 1.0) {
      throw InvalidArgument("corruption rate " + std::to_string(r) + " below floor or above 1");
    }
  }
}

CorruptionSchedule corruption_schedule(int k, bool cosine) {
  if (k < 1) throw InvalidArgument("context size must be >= 1");
  CorruptionSchedule s;
  for (int i = 0; i < k; ++i) {
    const double t = k == 1 ? 0.0 : static_cast<double>(i) / (k - 1);
    const double shape = cosine ? 0.5 * (1.0 - std::cos(kPi * t)) : t;
    double r = kLadderStart + (kLadderEnd - kLadderStart) * shape;
    r = std::round(r * 1e9) / 1e9;
    s.rates.push_back(std::max(r, s.floor));
  }
  return s;
}

std::vector<TokenId> corrupt_tokens(std::span<const TokenId> ids, double rate, int vocab_size,
                                    std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("rate must lie in [0, 1]");
  const auto n = ids.size();
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<TokenId> out(ids.begin(), ids.end());
  if (count == 0) return out;
  if (vocab_size < 2) throw InvalidArgument("corruption needs a vocabulary of at least 2");
  for (TokenId t : ids) {
    if (t < 0 || t >= vocab_size) throw InvalidArgument("token id outside the vocabulary");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `count` slots are the chosen positions.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::uniform_int_distribution<TokenId> shift(1, vocab_size - 1);
  for (std::size_t i = 0; i < count; ++i) {
    auto& t = out[order[i]];
    t = static_cast<TokenId>((t + shift(rng)) % vocab_size);
  }
  return out;
}

std::string_view mask_task_name(MaskTask task) {
  switch (task) {
    case MaskTask::kOutpaintBottom: return "outpaint_bottom";
    case MaskTask::kInpaintCenter: return "inpaint_center";
    case MaskTask::kTranslateRight: return "translate_right";
    case MaskTask::kRotateCw90: return "rotate_cw90";
    case MaskTask::kBlur: return "blur";
  }
  return "unknown";
}

MaskTask parse_mask_task(std::string_view name) {
  for (auto t : {MaskTask::kOutpaintBottom, MaskTask::kInpaintCenter, MaskTask::kTranslateRight,
                 MaskTask::kRotateCw90, MaskTask::kBlur}) {
    if (mask_task_name(t) == name) return t;
  }
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= total;

  const int h = image.height, w = image.width, ch = image.channels;
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * image.at(y, clampi(x + k, w), c);
        }
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
    }
  }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * tmp.at(clampi(y + k, h), x, c);
        }
        out.at(y, x, c) = clip01(acc);
      }
    }
  }
  return out;
}

Image mask_image(const Image& image, MaskTask task) {
  const int h = image.height, w = image.width, ch = image.channels;
  switch (task) {
    case MaskTask::kOutpaintBottom: {
      Image out = image;
      for (int y = h / 2; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < ch; ++c) out.at(y, x, c) = 0.0f;
        }
      }
      return out;
    }
    case MaskTask::kInpaintCenter: {
      Image out = image;
      for (int y = h / 4; y < h / 4 + h / 2; ++y) {
        for (int x = w / 4; x < w / 4 + w / 2; ++x) {
          for (int c = 0; c < ch; ++c) out.at(y, x, c) = 0.0f;
        }
      }
      return out;
    }
    case MaskTask::kTranslateRight: {
      Image out(h, w, ch);
      const int shift = w / 4;
      for (int y = 0; y < h; ++y) {
        for (int x = shift; x < w; ++x) {
          for (int c = 0; c < ch; ++c) out.at(y, x, c) = image.at(y, x - shift, c);
        }
      }
      return out;
    }
    case MaskTask::kRotateCw90: {
      Image out(w, h, ch);
      for (int y = 0; y < w; ++y) {
        for (int x = 0; x < h; ++x) {
          for (int c = 0; c < ch; ++c) out.at(y, x, c) = image.at(h - 1 - x, y, c);
        }
      }
      return out;
    }
    case MaskTask::kBlur:
      return gaussian_blur(image, kBlurSigma);
  }
  throw InvalidArgument("unknown mask task");
}

std::string_view pixel_transform_name(PixelTransformKind kind) {
  switch (kind) {
    case PixelTransformKind::kBrightness: return "brightness";
    case PixelTransformKind::kContrast: return "contrast";
    case PixelTransformKind::kSaturation: return "saturation";
    case PixelTransformKind::kColor: return "color";
  }
  return "unknown";
}

PixelTransformKind parse_pixel_transform(std::string_view name) {
  for (auto k : {PixelTransformKind::kBrightness, PixelTransformKind::kContrast,
                 PixelTransformKind::kSaturation, PixelTransformKind::kColor}) {
    if (pixel_transform_name(k) == name) return k;
  }
  throw InvalidArgument("unknown pixel transform '" + std::string(name) + "'");
}

Image pixel_transform(const Image& image, PixelTransformKind kind, int level) {
  static constexpr std::array<double, 8> kDelta = {-0.8, -0.6, -0.4, -0.2, 0.2, 0.4, 0.6, 0.8};
  static constexpr std::array<double, 8> kSaturation = {-0.4, -0.3, -0.2, -0.1,
                                                        0.1,  0.2,  0.3,  0.4};
  static constexpr std::array<std::array<double, 3>, 8> kColor = {{{0.6, 1.4, 1.0},
                                                                   {0.7, 1.3, 1.0},
                                                                   {0.8, 1.2, 1.0},
                                                                   {0.9, 1.1, 1.0},
                                                                   {1.1, 0.9, 1.0},
                                                                   {1.2, 0.8, 1.0},
                                                                   {1.3, 0.7, 1.0},
                                                                   {1.4, 0.6, 1.0}}};
  const int idx = level_index(level);
  const int h = image.height, w = image.width, ch = image.channels;
  Image out(h, w, ch);
  switch (kind) {
    case PixelTransformKind::kBrightness:
      for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        out.pixels[i] = clip01(image.pixels[i] + kDelta[idx]);
      }
      return out;
    case PixelTransformKind::kContrast: {
      const double factor = 1.0 + kDelta[idx];
      for (int c = 0; c < ch; ++c) {
        double mean = 0.0;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) mean += image.at(y, x, c);
        }
        mean /= static_cast<double>(h) * w;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            out.at(y, x, c) = clip01((image.at(y, x, c) - mean) * factor + mean);
          }
        }
      }
      return out;
    }
    case PixelTransformKind::kSaturation: {
      const double factor = 1.0 + kSaturation[idx];
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double gray = image.at(y, x, 0);
          if (ch >= 3) {
            gray = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                   0.114 * image.at(y, x, 2);
          }
          for (int c = 0; c < ch; ++c) {
            out.at(y, x, c) = clip01(gray + (image.at(y, x, c) - gray) * factor);
          }
        }
      }
      return out;
    }
    case PixelTransformKind::kColor:
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < ch; ++c) {
            out.at(y, x, c) = clip01(image.at(y, x, c) * kColor[idx][std::min(c, 2)]);
          }
        }
      }
      return out;
  }
  throw InvalidArgument("unknown pixel transform");
}

DenoisingContext build_denoising_context(const std::vector<ImageSample>& context,
                                         const ImageSample& query, const ConditionFn& condition,
                                         const TokenizeFn& tokenize,
                                         const CorruptionSchedule& schedule, int vocab_size,
                                         std::uint64_t seed) {
  schedule.validate();
  if (context.size() != schedule.rates.size()) {
    throw InvalidArgument("context has " + std::to_string(context.size()) +
                          " images but the schedule has " +
                          std::to_string(schedule.rates.size()) + " rates");
  }
  DenoisingContext out;
  const auto query_target = tokenize(query.image);
  out.query = tokenize(condition(query.image));
  for (std::size_t i = 0; i < context.size(); ++i) {
    const double r = schedule.rates[i];
    const auto cond = tokenize(condition(context[i].image));
    const auto target = tokenize(context[i].image);
    DenoisingExample e;
    e.source = context[i].index;
    e.rate = r;
    e.u = corrupt_tokens(cond, r, vocab_size, derive(seed, i, 0));
    constexpr int kAttempts = 64;
    int attempt = 0;
    do {
      e.v = corrupt_tokens(target, r, vocab_size, derive(seed, i, 1 + attempt));
    } while (e.v == query_target && ++attempt < kAttempts);
    if (e.v == query_target) {
      throw InvalidArgument("corruption cannot hide the query target; sequence too short");
    }
    out.examples.push_back(std::move(e));
  }
  return out;
}

int DecodingPlan::nar_segments() const {
  const int n = total_tokens - ar_end;
  return n <= 0 ? 0 : (n + nar_stride - 1) / nar_stride;
}

void DecodingPlan::validate() const {
  if (total_tokens < 1) throw InvalidArgument("plan needs at least one token");
  if (ar_end < 0 || ar_end > total_tokens) {
    throw InvalidArgument("stage boundary outside [0, total_tokens]");
  }
  if (ar_stride < 1 || nar_stride < 1) throw InvalidArgument("strides must be >= 1");
  if (condition_cap > ar_end) throw InvalidArgument("condition cap beyond the AR stage");
  if (samples_per_step < 1) throw InvalidArgument("samples_per_step must be >= 1");
  if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  if (!(psi >= 0.0)) throw InvalidArgument("psi must be non-negative");
  if (llm_tokens_per_token < 1) throw InvalidArgument("llm_tokens_per_token must be >= 1");
  if (!nar_order.empty()) {
    auto sorted = nar_order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(static_cast<std::size_t>(nar_segments()));
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw InvalidArgument("nar_order is not a permutation of the segments");
  }
}

DecodingPlan DecodingPlan::standard(const PyramidSpec& spec, int ar_stride, int nar_stride) {
  const auto counts = token_counts(spec);
  DecodingPlan p;
  p.total_tokens = counts.cumulative.back();
  p.ar_end = spec.depth() > 1 ? counts.cumulative[spec.depth() - 2] : p.total_tokens;
  p.ar_stride = ar_stride;
  p.nar_stride = nar_stride;
  p.validate();
  return p;
}

void to_json(nlohmann::json& j, const DecodingPlan& p) {
  j = {{"total_tokens", p.total_tokens},
       {"ar_end", p.ar_end},
       {"ar_stride", p.ar_stride},
       {"nar_stride", p.nar_stride},
       {"condition_cap", p.condition_cap},
       {"nar_order", p.nar_order},
       {"samples_per_step", p.samples_per_step},
       {"psi", p.psi},
       {"max_retries", p.max_retries},
       {"llm_tokens_per_token", p.llm_tokens_per_token}};
}

void from_json(const nlohmann::json& j, DecodingPlan& p) {
  p.total_tokens = j.at("total_tokens").get<int>();
  p.ar_end = j.at("ar_end").get<int>();
  p.ar_stride = j.value("ar_stride", 4);
  p.nar_stride = j.value("nar_stride", 16);
  p.condition_cap = j.value("condition_cap", -1);
  p.nar_order = j.value("nar_order", std::vector<int>{});
  p.samples_per_step = j.value("samples_per_step", 8);
  p.psi = j.value("psi", 0.01);
  p.max_retries = j.value("max_retries", 3);
  p.llm_tokens_per_token = j.value("llm_tokens_per_token", 4);
}

double retry_temperature(int retry, double psi) {
  if (retry < 0) throw InvalidArgument("retry index must be >= 0");
  return psi * (std::ldexp(1.0, retry + 1) - 2.0);
}

void JsonlTrace::operator()(const nlohmann::json& record) const {
  *out_ << record.dump() << '\n';
  out_->flush();
}

std::vector<TokenId> progressive_decode(const DecodingPlan& plan, const LLMClient& llm,
                                        const DenoisingContext& context,
                                        const LexicalCodebook& codebook, const TraceFn& trace) {
  plan.validate();
  for (const auto& e : context.examples) {
    if (static_cast<int>(e.v.size()) != plan.total_tokens) {
      throw InvalidArgument("context target has " + std::to_string(e.v.size()) +
                            " tokens, plan expects " + std::to_string(plan.total_tokens));
    }
  }
  std::vector<TokenId> out(static_cast<std::size_t>(plan.total_tokens), -1);
  int step = 0;

  auto request = [&](const std::string& prompt, std::string_view stage, int begin, int count) {
    for (int retry = 0; retry <= plan.max_retries; ++retry) {
      const double temperature = retry_temperature(retry, plan.psi);
      nlohmann::json record = {{"step", step},
                               {"stage", stage},
                               {"begin", begin},
                               {"end", begin + count},
                               {"retry", retry},
                               {"temperature", temperature},
                               {"prompt", prompt}};
      std::vector<std::string> completions;
      try {
        completions = llm.complete(prompt, count * plan.llm_tokens_per_token, temperature,
                                   plan.samples_per_step);
      } catch (const LLMError& e) {
        record["error"] = e.what();
      }
      std::optional<std::size_t> accepted;
      std::vector<std::size_t> parsed;
      for (std::size_t i = 0; i < completions.size(); ++i) {
        const auto seg = segment_tokens(strip(completions[i]), codebook, "",
                                        static_cast<std::size_t>(count));
        parsed.push_back(seg.ids.size());
        if (!accepted && static_cast<int>(seg.ids.size()) >= count) {
          accepted = i;
          std::copy(seg.ids.begin(), seg.ids.begin() + count, out.begin() + begin);
        }
      }
      record["completions"] = completions;
      record["parsed_tokens"] = parsed;
      record["accepted"] = accepted ? nlohmann::json(*accepted) : nlohmann::json(nullptr);
      if (trace) trace(record);
      if (accepted) {
        ++step;
        return;
      }
    }
    throw DecodingError("no completion yielded " + std::to_string(count) + " tokens for [" +
                            std::to_string(begin) + ", " + std::to_string(begin + count) +
                            ") after " + std::to_string(plan.max_retries + 1) + " attempts",
                        out);
  };

  const std::string query_condition = flatten_ids(context.query, codebook);
  std::vector<std::string> conditions;
  for (const auto& e : context.examples) conditions.push_back(flatten_ids(e.u, codebook));

  for (int s = 0; s < plan.ar_end; s += plan.ar_stride) {
    const int n = std::min(plan.ar_stride, plan.ar_end - s);
    std::vector<ArExample> examples;
    for (std::size_t i = 0; i < context.examples.size(); ++i) {
      const auto& v = context.examples[i].v;
      examples.push_back({conditions[i], slice(v, 0, s), slice(v, s, s + n)});
    }
    const auto prompt = build_ar_prompt(examples, query_condition, slice(out, 0, s), n, codebook);
    request(prompt, "ar", s, n);
  }

  const int cap = plan.cap();
  const int segments = plan.nar_segments();
  for (int k = 0; k < segments; ++k) {
    const int j = plan.nar_order.empty() ? k : plan.nar_order[k];
    const int s = plan.ar_end + j * plan.nar_stride;
    const int n = std::min(plan.nar_stride, plan.total_tokens - s);
    std::vector<NarExample> examples;
    for (const auto& e : context.examples) {
      examples.push_back({slice(e.v, 0, cap), slice(e.v, s, s + n)});
    }
    const auto prompt = build_nar_prompt(examples, slice(out, 0, cap), n, codebook);
    request(prompt, "nar", s, n);
  }
  return out;
}

TokenPyramid progressive_decode_pyramid(const DecodingPlan& plan, const LLMClient& llm,
                                        const DenoisingContext& context,
                                        const PyramidSpec& spec,
                                        const LexicalCodebook& codebook, const TraceFn& trace) {
  if (token_counts(spec).cumulative.back() != plan.total_tokens) {
    throw InvalidArgument("plan token count does not match the pyramid");
  }
  const auto ids = progressive_decode(plan, llm, context, codebook, trace);
  return TokenPyramid::from_flat(spec, ids);
}

void teach_oracle(OracleLLM& oracle, const DenoisingContext& context,
                  const LexicalCodebook& codebook, std::span<const TokenId> query_target) {
  for (const auto& e : context.examples) oracle.remember(flatten_ids(e.u, codebook), e.v);
  if (!query_target.empty()) {
    oracle.remember(flatten_ids(context.query, codebook),
                    std::vector<TokenId>(query_target.begin(), query_target.end()));
  }
}

}  // namespace lexpyr
