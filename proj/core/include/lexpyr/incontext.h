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


#ifndef LEXPYR_INCONTEXT_H_
#define LEXPYR_INCONTEXT_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexpyr/codebook.h"
#include "lexpyr/error.h"
#include "lexpyr/image.h"
#include "lexpyr/llm.h"
#include "lexpyr/pyramid.h"
#include "lexpyr/semantic_provider.h"

namespace lexpyr {

inline constexpr double kCorruptionFloor = 0.2;

struct CorruptionSchedule {
  std::vector<double> rates;
  double floor = kCorruptionFloor;
  void validate() const;
};

// Linear 0.5 -> 0.23 ladder (K=10 gives 0.5, 0.47, ..., 0.23), or a cosine
// decay between the same endpoints. Both are clamped to the floor.
CorruptionSchedule corruption_schedule(int k, bool cosine = false);

// Replaces exactly round(rate * N) positions, chosen without replacement,
// each with a uniform id different from the original.
std::vector<TokenId> corrupt_tokens(std::span<const TokenId> ids, double rate, int vocab_size,
                                    std::uint64_t seed);

enum class MaskTask { kOutpaintBottom, kInpaintCenter, kTranslateRight, kRotateCw90, kBlur };
std::string_view mask_task_name(MaskTask task);
MaskTask parse_mask_task(std::string_view name);

inline constexpr double kBlurSigma = 2.0;
Image mask_image(const Image& image, MaskTask task);
Image gaussian_blur(const Image& image, double sigma);

enum class PixelTransformKind { kBrightness, kContrast, kSaturation, kColor };
std::string_view pixel_transform_name(PixelTransformKind kind);
PixelTransformKind parse_pixel_transform(std::string_view name);

// level 1..9 without 5; levels 1-4 are the negative offsets (strongest
// first), 6-9 the positive ones. Results are clipped to [0, 1].
Image pixel_transform(const Image& image, PixelTransformKind kind, int level);

struct DenoisingExample {
  std::vector<TokenId> u;  // corrupted condition
  std::vector<TokenId> v;  // corrupted target
  std::int64_t source = -1;
  double rate = 0.0;
};

struct DenoisingContext {
  std::vector<DenoisingExample> examples;
  std::vector<TokenId> query;  // uncorrupted condition of the query image
};

using TokenizeFn = std::function<std::vector<TokenId>(const Image&)>;
using ConditionFn = std::function<Image(const Image&)>;

// Example i pairs eps(Q(cond(I_i)), r_i) with eps(Q(I_i), r_i); the query is
// Q(cond(I_q)) without noise. When a corrupted target happens to equal the
// query's true target it is corrupted again with the next seed.
DenoisingContext build_denoising_context(const std::vector<ImageSample>& context,
                                         const ImageSample& query, const ConditionFn& condition,
                                         const TokenizeFn& tokenize,
                                         const CorruptionSchedule& schedule, int vocab_size,
                                         std::uint64_t seed);

enum class StageMode { kAutoregressive, kNonAutoregressive };

struct DecodingPlan {
  int total_tokens = 0;
  int ar_end = 0;          // tokens [0, ar_end) decoded autoregressively
  int ar_stride = 4;
  int nar_stride = 16;
  int condition_cap = -1;  // NAR steps condition on tokens [0, cap); -1 means ar_end
  std::vector<int> nar_order;  // NAR segment request order; empty is sequential
  int samples_per_step = 8;
  double psi = 0.01;
  int max_retries = 3;
  int llm_tokens_per_token = 4;  // completion budget per requested token

  void validate() const;
  int cap() const { return condition_cap < 0 ? ar_end : condition_cap; }
  int nar_segments() const;
  // AR over layers 1..D-1 and NAR over layer D.
  static DecodingPlan standard(const PyramidSpec& spec, int ar_stride = 4, int nar_stride = 16);
};

void to_json(nlohmann::json& j, const DecodingPlan& plan);
void from_json(const nlohmann::json& j, DecodingPlan& plan);

// T_0 = 0, T_i = psi * (2^(i+1) - 2).
double retry_temperature(int retry, double psi);

class DecodingError : public Error {
 public:
  DecodingError(const std::string& what, std::vector<TokenId> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<TokenId>& partial() const { return partial_; }

 private:
  std::vector<TokenId> partial_;
};

using TraceFn = std::function<void(const nlohmann::json&)>;

// Writes one JSON record per line and flushes after each.
class JsonlTrace {
 public:
  explicit JsonlTrace(std::ostream& out) : out_(&out) {}
  void operator()(const nlohmann::json& record) const;

 private:
  std::ostream* out_;
};

// Drives the LLM through the plan and returns the decoded ids in flatten
// order. Every request is reported to `trace` when set.
std::vector<TokenId> progressive_decode(const DecodingPlan& plan, const LLMClient& llm,
                                        const DenoisingContext& context,
                                        const LexicalCodebook& codebook,
                                        const TraceFn& trace = {});

TokenPyramid progressive_decode_pyramid(const DecodingPlan& plan, const LLMClient& llm,
                                        const DenoisingContext& context,
                                        const PyramidSpec& spec,
                                        const LexicalCodebook& codebook,
                                        const TraceFn& trace = {});

// Remembers every context target under its condition string and, when
// given, the query's true target under the query condition.
void teach_oracle(OracleLLM& oracle, const DenoisingContext& context,
                  const LexicalCodebook& codebook, std::span<const TokenId> query_target = {});

}  // namespace lexpyr

#endif  // LEXPYR_INCONTEXT_H_
