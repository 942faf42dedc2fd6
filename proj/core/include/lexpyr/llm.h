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


#ifndef LEXPYR_LLM_H_
#define LEXPYR_LLM_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lexpyr/codebook.h"
#include "lexpyr/error.h"
#include "lexpyr/http.h"

namespace lexpyr {

class LLMError : public Error {
 public:
  using Error::Error;
};

// Plain-text completion model. Implementations are safe for concurrent
// complete() calls and return exactly n completions or throw LLMError.
class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::vector<std::string> complete(const std::string& prompt, int max_tokens,
                                            double temperature, int n) const = 0;
};

// Completion endpoint speaking
//   POST {"model", "prompt", "max_tokens", "temperature", "n"}
//     -> {"choices": [{"text": ...}, ...]}
struct HttpLLMConfig {
  HttpEndpoint endpoint;
  std::string model;
};

class HttpLLMClient : public LLMClient {
 public:
  explicit HttpLLMClient(HttpLLMConfig config);
  std::vector<std::string> complete(const std::string& prompt, int max_tokens,
                                    double temperature, int n) const override;

 private:
  HttpLLMConfig config_;
};

struct OracleConfig {
  double truncate_prob = 0.0;  // chance a completion is cut below the stride
  double noise = 0.0;          // per-token chance of a random replacement
  std::uint64_t seed = 0;
  bool error_on_unknown = true;  // otherwise answer unknown prompts with random tokens
};

// Test double. Generation prompts are answered from memorized
// (condition, target) pairs; classification, caption and VQA prompts are
// answered with the label of the context item sharing the most tokens with
// the query. Outputs depend only on (seed, prompt, temperature).
class OracleLLM : public LLMClient {
 public:
  OracleLLM(LexicalCodebook codebook, OracleConfig config = {});
  void remember(std::string condition, std::vector<TokenId> target);
  std::size_t memory_size() const { return memory_.size(); }
  std::vector<std::string> complete(const std::string& prompt, int max_tokens,
                                    double temperature, int n) const override;

 private:
  struct Entry {
    std::string condition;
    std::vector<TokenId> target;
  };
  std::vector<std::string> generation(const std::string& prompt, bool autoregressive,
                                      double temperature, int n) const;
  std::vector<std::string> answer_by_overlap(const std::string& prompt, int n) const;
  std::vector<std::string> unknown(const std::string& prompt, std::size_t count,
                                   double temperature, int n) const;
  std::vector<TokenId> tokens_of(std::string_view text) const;

  LexicalCodebook codebook_;
  OracleConfig config_;
  std::vector<Entry> memory_;
};

// Picks uniformly among the classes named in a classification prompt.
class CoinFlipLLM : public LLMClient {
 public:
  explicit CoinFlipLLM(std::uint64_t seed = 0) : seed_(seed) {}
  std::vector<std::string> complete(const std::string& prompt, int max_tokens,
                                    double temperature, int n) const override;

 private:
  std::uint64_t seed_;
};

// Class names listed in the preamble of a classification prompt.
std::vector<std::string> prompt_classes(const std::string& prompt);

std::uint64_t hash_text(std::string_view text, std::uint64_t seed = 0);

}  // namespace lexpyr

#endif  // LEXPYR_LLM_H_
