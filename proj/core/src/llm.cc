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


#include "lexpyr/llm.h"

#include <algorithm>
#include <bit>
#include <random>
#include <sstream>

#include "lexpyr/prompts.h"
#include "lexpyr/pyramid.h"

namespace lexpyr {
namespace {

constexpr std::string_view kListFormHead = "For each of the following input output pairs";
constexpr std::string_view kThisIsHead = "Answer with \"";
constexpr std::string_view kCaptionHead = "Generate a caption sentence";
constexpr std::string_view kVqaHead = "Answer with a single word.";
constexpr std::string_view kArHead = "Learn a new language and predict the ";
constexpr std::string_view kNarHead = "Predict the outputs following the examples.";

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::vector<std::string> split(std::string_view text, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(text.substr(pos));
      return out;
    }
    out.emplace_back(text.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

// Value of the first line in `block` starting with `key`, if any.
std::optional<std::string> field(const std::string& block, std::string_view key) {
  for (const auto& line : split(block, "\n")) {
    if (starts_with(line, key)) return line.substr(key.size());
  }
  return std::nullopt;
}

std::size_t overlap(std::vector<TokenId> a, std::vector<TokenId> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<TokenId> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return common.size();
}

struct Labeled {
  std::string text;
  std::string answer;
};

}  // namespace

std::uint64_t hash_text(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

HttpLLMClient::HttpLLMClient(HttpLLMConfig config) : config_(std::move(config)) {
  if (config_.endpoint.url.empty()) throw InvalidArgument("LLM endpoint URL is empty");
}

std::vector<std::string> HttpLLMClient::complete(const std::string& prompt, int max_tokens,
                                                 double temperature, int n) const {
  if (n < 1) throw InvalidArgument("n must be >= 1");
  nlohmann::json body = {{"prompt", prompt},
                         {"max_tokens", max_tokens},
                         {"temperature", temperature},
                         {"n", n}};
  if (!config_.model.empty()) body["model"] = config_.model;
  nlohmann::json response;
  try {
    response = post_json(config_.endpoint, body);
  } catch (const Error& e) {
    throw LLMError(std::string("LLM request failed: ") + e.what());
  }
  std::vector<std::string> out;
  try {
    for (const auto& choice : response.at("choices")) {
      out.push_back(choice.at("text").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw LLMError(std::string("malformed LLM response: ") + e.what());
  }
  if (static_cast<int>(out.size()) != n) {
    throw LLMError("LLM returned " + std::to_string(out.size()) + " completions, expected " +
                   std::to_string(n));
  }
  return out;
}

OracleLLM::OracleLLM(LexicalCodebook codebook, OracleConfig config)
    : codebook_(std::move(codebook)), config_(config) {
  if (config_.truncate_prob < 0 || config_.truncate_prob > 1 || config_.noise < 0 ||
      config_.noise > 1) {
    throw InvalidArgument("oracle knobs must lie in [0, 1]");
  }
}

void OracleLLM::remember(std::string condition, std::vector<TokenId> target) {
  for (TokenId t : target) {
    if (t < 0 || static_cast<std::size_t>(t) >= codebook_.size()) {
      throw InvalidArgument("oracle target holds an id outside the vocabulary");
    }
  }
  memory_.push_back({std::move(condition), std::move(target)});
}

std::vector<TokenId> OracleLLM::tokens_of(std::string_view text) const {
  std::vector<TokenId> out;
  while (!text.empty()) {
    const auto seg = segment_tokens(text, codebook_);
    out.insert(out.end(), seg.ids.begin(), seg.ids.end());
    if (seg.unparsed.empty()) break;
    text.remove_prefix(std::min(text.size(), seg.consumed + 1));
  }
  return out;
}

std::vector<std::string> OracleLLM::complete(const std::string& prompt, int max_tokens,
                                             double temperature, int n) const {
  (void)max_tokens;
  if (n < 1) throw InvalidArgument("n must be >= 1");
  if (starts_with(prompt, kArHead)) return generation(prompt, true, temperature, n);
  if (starts_with(prompt, kNarHead)) return generation(prompt, false, temperature, n);
  if (starts_with(prompt, kListFormHead) || starts_with(prompt, kVqaHead) ||
      starts_with(prompt, kThisIsHead) || starts_with(prompt, kCaptionHead) ||
      starts_with(prompt, "###\nInput: ") || prompt.ends_with("\nThis is a")) {
    return answer_by_overlap(prompt, n);
  }
  return unknown(prompt, 4, temperature, n);
}

std::vector<std::string> OracleLLM::unknown(const std::string& prompt, std::size_t count,
                                            double temperature, int n) const {
  if (config_.error_on_unknown) throw LLMError("oracle does not recognize the prompt");
  std::mt19937_64 rng(hash_text(prompt, config_.seed) ^ std::bit_cast<std::uint64_t>(temperature));
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(codebook_.size()) - 1);
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    std::vector<TokenId> ids(count);
    for (auto& id : ids) id = pick(rng);
    out.push_back(flatten_ids(ids, codebook_));
  }
  return out;
}

std::vector<std::string> OracleLLM::generation(const std::string& prompt, bool autoregressive,
                                               double temperature, int n) const {
  const auto blocks = split(prompt, "\n\n");
  const std::string& last = blocks.back();
  const auto query = field(last, "Q:");
  if (!query) return unknown(prompt, 4, temperature, n);
  const auto qseg = segment_tokens(*query, codebook_);
  if (!qseg.unparsed.empty()) return unknown(prompt, 4, temperature, n);
  const auto& prefix = qseg.ids;
  auto has_prefix = [](const std::vector<TokenId>& target, const std::vector<TokenId>& p) {
    return target.size() >= p.size() && std::equal(p.begin(), p.end(), target.begin());
  };

  std::size_t offset = 0;
  std::size_t count = 0;
  const Entry* match = nullptr;
  if (autoregressive) {
    const auto head = blocks.front().substr(kArHead.size());
    count = static_cast<std::size_t>(std::stoul(head));
    const auto condition = field(last, "C:");
    for (const auto& e : memory_) {
      if (condition && e.condition == *condition && has_prefix(e.target, prefix)) {
        match = &e;
        break;
      }
    }
    offset = prefix.size();
  } else {
    for (const auto& e : memory_) {
      if (has_prefix(e.target, prefix)) {
        match = &e;
        break;
      }
    }
    // The segment offset is recovered from the first context item whose
    // full target is memorized.
    bool found = false;
    for (std::size_t b = 1; b + 1 < blocks.size() && !found; ++b) {
      const auto q = field(blocks[b], "Q:");
      const auto a = field(blocks[b], "A:");
      if (!q || !a) continue;
      const auto qi = segment_tokens(*q, codebook_).ids;
      const auto ai = segment_tokens(*a, codebook_).ids;
      if (ai.empty()) continue;
      for (const auto& e : memory_) {
        if (!has_prefix(e.target, qi)) continue;
        for (std::size_t k = qi.size(); k + ai.size() <= e.target.size(); ++k) {
          if (std::equal(ai.begin(), ai.end(), e.target.begin() + static_cast<std::ptrdiff_t>(k))) {
            offset = k;
            count = ai.size();
            found = true;
            break;
          }
        }
        if (found) break;
      }
    }
    if (!found) match = nullptr;
  }
  if (match == nullptr) return unknown(prompt, count > 0 ? count : 4, temperature, n);

  const auto end = std::min(match->target.size(), offset + count);
  const std::vector<TokenId> answer(match->target.begin() + static_cast<std::ptrdiff_t>(offset),
                                    match->target.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(hash_text(prompt, config_.seed) ^
                        (std::bit_cast<std::uint64_t>(temperature) * 0x9E3779B97F4A7C15ull) ^
                        static_cast<std::uint64_t>(i + 1));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<TokenId> other(1, static_cast<TokenId>(codebook_.size()) - 1);
    auto ids = answer;
    if (config_.truncate_prob > 0 && u(rng) < config_.truncate_prob) {
      ids.resize(count / 2 < ids.size() ? count / 2 : ids.size());
    }
    for (auto& id : ids) {
      if (config_.noise > 0 && u(rng) < config_.noise) {
        id = static_cast<TokenId>((id + other(rng)) % static_cast<TokenId>(codebook_.size()));
      }
    }
    out.push_back(flatten_ids(ids, codebook_));
  }
  return out;
}

std::vector<std::string> OracleLLM::answer_by_overlap(const std::string& prompt, int n) const {
  std::vector<Labeled> items;
  std::string query;
  std::string prefix = " ";
  if (starts_with(prompt, kListFormHead) || starts_with(prompt, "###\n")) {
    const auto blocks = split(prompt, "###\n");
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      const auto in = field(blocks[b], "Input: ");
      const auto out = field(blocks[b], "Output: ");
      if (in && out) items.push_back({*in, *out});
      if (in && !out) query = *in;
    }
  } else if (prompt.ends_with("\nThis is a")) {
    const auto blocks = split(prompt, "\n\n\n");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto lines = split(blocks[b], "\n");
      if (b == 0 && starts_with(prompt, kThisIsHead) && lines.size() > 2) {
        lines.erase(lines.begin(), lines.begin() + 2);
      }
      if (lines.empty()) continue;
      const auto& tail = lines.back();
      if (tail == "This is a") {
        query = lines.front();
      } else if (starts_with(tail, "This is a ")) {
        items.push_back({lines.front(), tail.substr(10)});
      }
    }
  } else {
    const bool vqa = starts_with(prompt, kVqaHead);
    const std::string key = vqa ? "C: " : "Q: ";
    const auto blocks = split(prompt, "\n\n");
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      const auto in = field(blocks[b], key);
      const auto a = field(blocks[b], "A: ");
      if (!in) continue;
      if (a && !a->empty()) {
        items.push_back({*in, *a});
      } else {
        query = *in;
      }
    }
    prefix.clear();
  }
  if (items.empty()) return unknown(prompt, 1, 0.0, n);
  const auto q = tokens_of(query);
  std::size_t best = 0;
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto o = overlap(tokens_of(items[i].text), q);
    if (o > best_overlap) {
      best_overlap = o;
      best = i;
    }
  }
  return std::vector<std::string>(static_cast<std::size_t>(n), prefix + items[best].answer);
}

std::vector<std::string> prompt_classes(const std::string& prompt) {
  std::vector<std::string> out;
  const auto first = split(prompt, "\n").front();
  if (starts_with(first, kListFormHead)) {
    const auto open = first.find('[');
    const auto close = first.rfind(']');
    if (open == std::string::npos || close == std::string::npos) return out;
    for (auto item : split(first.substr(open + 1, close - open - 1), ", ")) {
      if (item.size() >= 2) out.push_back(item.substr(1, item.size() - 2));
    }
  } else if (starts_with(first, kThisIsHead)) {
    std::size_t pos = 0;
    while (true) {
      const auto a = first.find('"', pos);
      if (a == std::string::npos) break;
      const auto b = first.find('"', a + 1);
      if (b == std::string::npos) break;
      out.push_back(first.substr(a + 1, b - a - 1));
      pos = b + 1;
    }
  }
  return out;
}

std::vector<std::string> CoinFlipLLM::complete(const std::string& prompt, int, double,
                                               int n) const {
  const auto classes = prompt_classes(prompt);
  if (classes.empty()) throw LLMError("coin-flip model only answers classification prompts");
  std::mt19937_64 rng(hash_text(prompt, seed_));
  std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(" " + classes[pick(rng)]);
  return out;
}

}  // namespace lexpyr
