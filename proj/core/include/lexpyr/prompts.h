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


#ifndef LEXPYR_PROMPTS_H_
#define LEXPYR_PROMPTS_H_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexpyr/codebook.h"

namespace lexpyr {

enum class ClassifyStyle { kListForm, kThisIs };
std::string_view classify_style_name(ClassifyStyle style);
ClassifyStyle parse_classify_style(std::string_view name);

// Completion budgets used with greedy decoding.
inline constexpr int kListFormMaxTokens = 7;
inline constexpr int kThisIsMaxTokens = 4;
inline constexpr int kCaptionMaxTokens = 20;
inline constexpr int kVqaMaxTokens = 4;

struct LabeledExample {
  std::string spae;
  std::string label;
};

struct ClassifyOptions {
  bool what_is_this = false;   // thisis style only
  bool task_induction = true;  // false drops the preamble line
};

std::string build_classification_prompt(ClassifyStyle style,
                                        const std::vector<std::string>& classes,
                                        const std::vector<LabeledExample>& examples,
                                        std::string_view query,
                                        const ClassifyOptions& options = {});

struct CaptionExample {
  std::string spae;
  std::string caption;
};
std::string build_caption_prompt(const std::vector<CaptionExample>& examples,
                                 std::string_view query);

struct VqaExample {
  std::string spae;
  std::string question;
  std::string answer;
};
std::string build_vqa_prompt(const std::vector<VqaExample>& examples,
                             std::string_view query_spae, std::string_view query_question);

// One context item of an autoregressive step: C:<condition> Q:<prefix> A:<segment>.
struct ArExample {
  std::string condition;
  std::vector<TokenId> prefix;
  std::vector<TokenId> segment;
};
std::string build_ar_prompt(const std::vector<ArExample>& examples,
                            std::string_view query_condition,
                            std::span<const TokenId> query_prefix, int stride,
                            const LexicalCodebook& codebook);

// One context item of a non-autoregressive step: Q:<condition> A:<segment>.
struct NarExample {
  std::vector<TokenId> condition;
  std::vector<TokenId> segment;
};
std::string build_nar_prompt(const std::vector<NarExample>& examples,
                             std::span<const TokenId> query_condition, int stride,
                             const LexicalCodebook& codebook);

enum class AnswerMode { kWord, kLine, kTokens };

// Strips surrounding whitespace, then keeps the first word (kWord) or the
// first line (kLine). kTokens returns the raw text. Empty answers yield
// nullopt.
std::optional<std::string> parse_answer(std::string_view raw, AnswerMode mode);

std::string_view strip(std::string_view s);

}  // namespace lexpyr

#endif  // LEXPYR_PROMPTS_H_
