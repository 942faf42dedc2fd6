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


#include "lexpyr/prompts.h"

#include "lexpyr/error.h"
#include "lexpyr/pyramid.h"

namespace lexpyr {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void check_single_line(std::string_view s, std::string_view what) {
  if (s.find('\n') != std::string_view::npos) {
    throw InvalidArgument(std::string(what) + " must not contain a newline");
  }
}

}  // namespace

std::string_view classify_style_name(ClassifyStyle style) {
  return style == ClassifyStyle::kListForm ? "listform" : "thisis";
}

ClassifyStyle parse_classify_style(std::string_view name) {
  if (name == "listform") return ClassifyStyle::kListForm;
  if (name == "thisis") return ClassifyStyle::kThisIs;
  throw InvalidArgument("unknown classification style '" + std::string(name) + "'");
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string build_classification_prompt(ClassifyStyle style,
                                        const std::vector<std::string>& classes,
                                        const std::vector<LabeledExample>& examples,
                                        std::string_view query,
                                        const ClassifyOptions& options) {
  if (classes.empty()) throw InvalidArgument("classification needs at least one class");
  if (examples.empty()) throw InvalidArgument("classification needs at least one example");
  for (const auto& c : classes) {
    bool seen = false;
    for (const auto& e : examples) seen = seen || e.label == c;
    if (!seen && style == ClassifyStyle::kListForm) {
      throw InvalidArgument("class '" + c + "' has no example");
    }
  }
  for (const auto& e : examples) check_single_line(e.spae, "example string");
  check_single_line(query, "query string");

  std::string out;
  if (style == ClassifyStyle::kListForm) {
    if (options.task_induction) {
      out += "For each of the following input output pairs, output is one of [";
      for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i > 0) out += ", ";
        out += "'" + classes[i] + "'";
      }
      out += "]\n";
    }
    for (const auto& e : examples) {
      out += "###\nInput: " + e.spae + "\nOutput: " + e.label + "\n";
    }
    out += "###\nInput: ";
    out += query;
    out += "\nOutput:";
    return out;
  }
  if (options.task_induction) {
    out += "Answer with ";
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i > 0) out += i + 1 == classes.size() ? " or " : ", ";
      out += "\"" + classes[i] + "\"";
    }
    out += ".\n\n";
  }
  for (const auto& e : examples) {
    out += e.spae + "\nThis is a " + e.label + "\n\n\n";
  }
  out += query;
  out += "\n";
  if (options.what_is_this) out += "What is this?\n";
  out += "This is a";
  return out;
}

std::string build_caption_prompt(const std::vector<CaptionExample>& examples,
                                 std::string_view query) {
  if (examples.empty()) throw InvalidArgument("caption prompt needs examples");
  std::string out = "Generate a caption sentence based on words describing an image.\n\n";
  for (const auto& e : examples) {
    check_single_line(e.caption, "caption");
    out += "Q: " + e.spae + "\nA: " + e.caption + "\n\n";
  }
  out += "Q: ";
  out += query;
  out += "\nA: ";
  return out;
}

std::string build_vqa_prompt(const std::vector<VqaExample>& examples,
                             std::string_view query_spae, std::string_view query_question) {
  if (examples.empty()) throw InvalidArgument("VQA prompt needs examples");
  std::string out = "Answer with a single word.\n\n";
  for (const auto& e : examples) {
    check_single_line(e.question, "question");
    check_single_line(e.answer, "answer");
    out += "C: " + e.spae + "\nQ: " + e.question + "\nA: " + e.answer + "\n\n";
  }
  out += "C: ";
  out += query_spae;
  out += "\nQ: ";
  out += query_question;
  out += "\nA: ";
  return out;
}

std::string build_ar_prompt(const std::vector<ArExample>& examples,
                            std::string_view query_condition,
                            std::span<const TokenId> query_prefix, int stride,
                            const LexicalCodebook& codebook) {
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  std::string out = "Learn a new language and predict the " + std::to_string(stride) +
                    " tokens following the examples.\n\n";
  for (const auto& e : examples) {
    if (static_cast<int>(e.segment.size()) != stride) {
      throw InvalidArgument("example segment has " + std::to_string(e.segment.size()) +
                            " tokens, stride is " + std::to_string(stride));
    }
    check_single_line(e.condition, "condition");
    out += "C:" + e.condition + "\nQ:" + flatten_ids(e.prefix, codebook) +
           "\nA:" + flatten_ids(e.segment, codebook) + "\n\n";
  }
  check_single_line(query_condition, "condition");
  out += "C:";
  out += query_condition;
  out += "\nQ:" + flatten_ids(query_prefix, codebook) + "\nA:";
  return out;
}

std::string build_nar_prompt(const std::vector<NarExample>& examples,
                             std::span<const TokenId> query_condition, int stride,
                             const LexicalCodebook& codebook) {
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  std::string out = "Predict the outputs following the examples.\n\n";
  for (const auto& e : examples) {
    if (static_cast<int>(e.segment.size()) != stride) {
      throw InvalidArgument("example segment has " + std::to_string(e.segment.size()) +
                            " tokens, stride is " + std::to_string(stride));
    }
    out += "Q:" + flatten_ids(e.condition, codebook) + "\nA:" +
           flatten_ids(e.segment, codebook) + "\n\n";
  }
  out += "Q:" + flatten_ids(query_condition, codebook) + "\nA:";
  return out;
}

std::optional<std::string> parse_answer(std::string_view raw, AnswerMode mode) {
  if (mode == AnswerMode::kTokens) {
    if (strip(raw).empty()) return std::nullopt;
    return std::string(raw);
  }
  std::string_view s = strip(raw);
  if (s.empty()) return std::nullopt;
  std::size_t end = 0;
  if (mode == AnswerMode::kWord) {
    while (end < s.size() && !is_space(s[end])) ++end;
  } else {
    end = s.find('\n');
    if (end == std::string_view::npos) end = s.size();
  }
  const auto out = strip(s.substr(0, end));
  if (out.empty()) return std::nullopt;
  return std::string(out);
}

}  // namespace lexpyr
