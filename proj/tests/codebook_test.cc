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

#include "lexpyr/codebook.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lexpyr/error.h"
#include "lexpyr/semantic_provider.h"

namespace lexpyr {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lexpyr_codebook_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_raw_codebook(const fs::path& dir, const std::vector<std::string>& tokens,
                        const std::vector<float>& values, int c) {
  std::ofstream vocab(dir / "vocab.txt");
  for (const auto& t : tokens) vocab << t << '\n';
  std::ofstream emb(dir / "embeddings.f32", std::ios::binary);
  emb.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  std::ofstream(dir / "meta.json") << nlohmann::json{{"c", c}, {"d_sem", 0}, {"source", "t"}};
}

LexicalCodebook make_codebook(std::vector<std::vector<float>> rows) {
  FloatMatrix m(rows.size(), rows.front().size());
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ranges::copy(rows[i], m.row(i).begin());
    tokens.push_back("t" + std::to_string(i));
  }
  return LexicalCodebook(std::move(tokens), std::move(m));
}

// Returns one-hot text features keyed by the token index embedded in "t<k>".
class OneHotProvider : public SemanticProvider {
 public:
  explicit OneHotProvider(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  std::vector<double> text_embed(std::string_view text) const override {
    std::vector<double> v(dim_, 0.0);
    const auto pos = text.find('t');
    v[std::stoi(std::string(text.substr(pos + 1)))] = 1.0;
    return v;
  }
  std::vector<double> image_embed(const ImageSample&) const override { return {}; }

 private:
  int dim_;
};

// Maps "A <token>" to (1,0) and "B <token>" to (0,1).
class PrefixProvider : public SemanticProvider {
 public:
  int dim() const override { return 2; }
  std::vector<double> text_embed(std::string_view text) const override {
    return text.starts_with("A") ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
  }
  std::vector<double> image_embed(const ImageSample&) const override { return {}; }
};

TEST(LoadCodebook, RoundTripsThreeTokens) {
  const auto dir = temp_dir("three");
  write_raw_codebook(dir, {"a", "b", "c"}, {1, 2, 3, 4, 5, 6}, 2);
  const auto cb = load_codebook(dir);
  ASSERT_EQ(cb.size(), 3u);
  EXPECT_EQ(cb.dim(), 2);
  EXPECT_EQ(cb.token(2), "c");
  EXPECT_EQ(cb.embedding(1)[0], 3.0f);
  EXPECT_EQ(cb.embedding(2)[1], 6.0f);
  EXPECT_EQ(cb.source(), "t");
}

TEST(LoadCodebook, RejectsDuplicateTokens) {
  const auto dir = temp_dir("dup");
  write_raw_codebook(dir, {"a", "b", "a"}, {1, 2, 3, 4, 5, 6}, 2);
  EXPECT_THROW(load_codebook(dir), FormatError);
}

TEST(LoadCodebook, RejectsRowCountMismatch) {
  const auto dir = temp_dir("mismatch");
  write_raw_codebook(dir, {"a", "b", "c"}, {1, 2, 3, 4}, 2);
  EXPECT_THROW(load_codebook(dir), FormatError);
}

TEST(LoadCodebook, RejectsMissingFileAndNonFinite) {
  EXPECT_THROW(load_codebook(temp_dir("empty")), FormatError);
  const auto dir = temp_dir("nan");
  write_raw_codebook(dir, {"a", "b"}, {1, NAN, 3, 4}, 2);
  EXPECT_THROW(load_codebook(dir), FormatError);
}

TEST(LoadCodebook, LargeVocabularyLastRowIsBitExact) {
  const auto dir = temp_dir("large");
  const int n = 65536;
  const int c = 64;
  std::vector<std::string> tokens(n);
  std::vector<float> values(static_cast<std::size_t>(n) * c);
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int i = 0; i < n; ++i) tokens[i] = "w" + std::to_string(i);
  for (float& v : values) v = u(rng);
  write_raw_codebook(dir, tokens, values, c);
  const auto cb = load_codebook(dir);
  ASSERT_EQ(cb.size(), static_cast<std::size_t>(n));
  const auto last = cb.embedding(n - 1);
  for (int j = 0; j < c; ++j) {
    EXPECT_EQ(last[j], values[static_cast<std::size_t>(n - 1) * c + j]);
  }
}

TEST(LoadCodebook, SubsetFilterKeepsVocabularyOrder) {
  const auto dir = temp_dir("subset");
  write_raw_codebook(dir, {"a", "b", "c", "d"}, {0, 0, 1, 1, 2, 2, 3, 3}, 2);
  const std::vector<std::string> keep = {"d", "b"};
  const auto cb = load_codebook(dir, &keep);
  ASSERT_EQ(cb.size(), 2u);
  EXPECT_EQ(cb.token(0), "b");
  EXPECT_EQ(cb.embedding(1)[0], 3.0f);
  const std::vector<std::string> bad = {"zz"};
  EXPECT_THROW(load_codebook(dir, &bad), FormatError);
}

TEST(LoadCodebook, SaveLoadPreservesTextFeatures) {
  auto cb = generate_synthetic_codebook(20, 4, 3);
  HashedNgramProvider text(16);
  cb = cb.with_text_features(precompute_text_features(cb, {"a photo of a {}."}, text));
  const auto dir = temp_dir("save");
  save_codebook(cb, dir);
  const auto back = load_codebook(dir);
  EXPECT_EQ(back.tokens(), cb.tokens());
  EXPECT_EQ(back.embeddings().values, cb.embeddings().values);
  EXPECT_EQ(back.text_features().values, cb.text_features().values);
}

TEST(SyntheticCodebook, IsDeterministic) {
  const auto a = generate_synthetic_codebook(16, 4, 0);
  const auto b = generate_synthetic_codebook(16, 4, 0);
  EXPECT_EQ(a.tokens(), b.tokens());
  EXPECT_EQ(a.embeddings().values, b.embeddings().values);
  const auto c = generate_synthetic_codebook(16, 4, 1);
  EXPECT_NE(a.embeddings().values, c.embeddings().values);
}

TEST(SyntheticCodebook, TwoDistinctUnitRows) {
  const auto cb = generate_synthetic_codebook(2, 2, 7);
  ASSERT_EQ(cb.size(), 2u);
  EXPECT_NE(cb.token(0), cb.token(1));
  for (TokenId k = 0; k < 2; ++k) {
    const auto e = cb.embedding(k);
    EXPECT_NEAR(std::hypot(e[0], e[1]), 1.0, 1e-6);
  }
  EXPECT_FALSE(cb.embedding(0)[0] == cb.embedding(1)[0] &&
               cb.embedding(0)[1] == cb.embedding(1)[1]);
  EXPECT_THROW(generate_synthetic_codebook(1, 2, 0), InvalidArgument);
}

TEST(SyntheticCodebook, PairwiseCosineBelowOne) {
  const auto cb = generate_synthetic_codebook(1000, 32, 1);
  double max_cos = -1.0;
  for (TokenId i = 0; i < 1000; ++i) {
    for (TokenId j = i + 1; j < 1000; ++j) {
      const auto a = cb.embedding(i);
      const auto b = cb.embedding(j);
      double dot = 0.0;
      for (int k = 0; k < 32; ++k) dot += static_cast<double>(a[k]) * b[k];
      max_cos = std::max(max_cos, dot);
    }
  }
  EXPECT_LT(max_cos, 1.0);
  for (const auto& t : cb.tokens()) {
    EXPECT_TRUE(t.starts_with(kWordBoundary));
    EXPECT_GT(t.size(), kWordBoundary.size());
  }
}

TEST(TextFeatures, OneHotProviderGivesNormalizedOneHots) {
  const auto cb = make_codebook({{0, 0}, {1, 1}, {2, 2}});
  const auto f = precompute_text_features(cb, {"{}"}, OneHotProvider(3));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(f.row(k)[j], k == j ? 1.0f : 0.0f);
  }
}

TEST(TextFeatures, MeanThenNormalize) {
  const auto cb = make_codebook({{0, 0}});
  const auto f = precompute_text_features(cb, {"A {}", "B {}"}, PrefixProvider());
  EXPECT_NEAR(f.row(0)[0], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_NEAR(f.row(0)[1], 1.0 / std::sqrt(2.0), 1e-7);
}

TEST(TextFeatures, EightyTemplatesGiveUnitRowsAndOrderFreeMean) {
  const auto cb = generate_synthetic_codebook(50, 4, 2);
  std::vector<std::string> templates;
  for (int i = 0; i < 80; ++i) templates.push_back("template " + std::to_string(i) + " of {}.");
  HashedNgramProvider text(32);
  const auto f = precompute_text_features(cb, templates, text);
  EXPECT_EQ(f.rows, 50u);
  EXPECT_EQ(f.cols, 32u);
  for (std::size_t k = 0; k < f.rows; ++k) {
    double sq = 0.0;
    for (float v : f.row(k)) sq += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
  }
  auto shuffled = templates;
  std::mt19937 rng(9);
  std::ranges::shuffle(shuffled, rng);
  const auto g = precompute_text_features(cb, shuffled, text);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    EXPECT_NEAR(f.values[i], g.values[i], 1e-6);  // float storage
  }
}

TEST(TextFeatures, Errors) {
  const auto cb = make_codebook({{0, 0}});
  EXPECT_THROW(precompute_text_features(cb, {}, PrefixProvider()), InvalidArgument);
  class Failing : public PrefixProvider {
    std::vector<double> text_embed(std::string_view) const override {
      throw std::runtime_error("boom");
    }
  };
  try {
    precompute_text_features(cb, {"{}"}, Failing());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("token 0"), std::string::npos);
  }
}

LexicalCodebook with_identity_features(int n) {
  std::vector<std::vector<float>> rows(n, std::vector<float>(2, 0.0f));
  auto cb = make_codebook(rows);
  FloatMatrix f(n, n);
  for (int i = 0; i < n; ++i) f.row(i)[i] = 1.0f;
  return cb.with_text_features(std::move(f));
}

TEST(Similarity, OneHotAgainstIdentity) {
  const auto cb = with_identity_features(3);
  const std::vector<double> e1 = {1, 0, 0};
  EXPECT_EQ(similarity_raw(e1, cb), (std::vector<double>{1, 0, 0}));
  const std::vector<double> zero = {0, 0, 0};
  EXPECT_EQ(similarity_raw(zero, cb), (std::vector<double>{0, 0, 0}));
}

TEST(Similarity, MatchesNaiveLoop) {
  auto cb = generate_synthetic_codebook(8, 3, 4);
  HashedNgramProvider text(6);
  cb = cb.with_text_features(precompute_text_features(cb, {"{}"}, text));
  std::mt19937 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> img(6);
  for (double& v : img) v = n(rng);
  const auto raw = similarity_raw(img, cb);
  for (TokenId k = 0; k < 8; ++k) {
    double dot = 0.0;
    for (int j = 0; j < 6; ++j) dot += img[j] * static_cast<double>(cb.text_features().values[k * 6 + j]);
    EXPECT_NEAR(raw[k], dot, 1e-12);
  }
}

TEST(Similarity, Errors) {
  const auto no_features = make_codebook({{0, 0}, {1, 1}});
  const std::vector<double> img = {1, 0};
  EXPECT_THROW(similarity_raw(img, no_features), InvalidArgument);
  const auto cb = with_identity_features(3);
  EXPECT_THROW(similarity_raw(img, cb), InvalidArgument);
}

TEST(NormalizeSimilarity, Examples) {
  const auto out = normalize_similarity(std::vector<double>{0.2, 0.5, 0.8});
  EXPECT_NEAR(out[0], 0.0, 1e-15);
  EXPECT_NEAR(out[1], 0.5, 1e-15);
  EXPECT_NEAR(out[2], 1.0, 1e-15);
  EXPECT_EQ(normalize_similarity(std::vector<double>{3, 3, 3}), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(normalize_similarity(std::vector<double>{1}), InvalidArgument);
}

TEST(NormalizeSimilarity, PreservesOrderForAllPermutations) {
  std::array<double, 3> base = {-1.5, 0.25, 4.0};
  std::ranges::sort(base);
  do {
    const auto out = normalize_similarity(base);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (base[i] < base[j]) EXPECT_LT(out[i], out[j]);
      }
    }
  } while (std::ranges::next_permutation(base).found);
}

TEST(NormalizeSimilarity, RandomVectorsProperty) {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> raw(2 + trial % 50);
    for (double& v : raw) v = n(rng);
    const auto out = normalize_similarity(raw);
    EXPECT_EQ(*std::ranges::min_element(out), 0.0);
    EXPECT_EQ(*std::ranges::max_element(out), 1.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      EXPECT_GE(out[i], 0.0);
      EXPECT_LE(out[i], 1.0);
    }
  }
}

TEST(CandidatePool, ThresholdExamples) {
  SimilarityProfile p;
  p.normalized = {1.0, 0.9, 0.5};
  EXPECT_EQ(candidate_pool(p, 0.95), (std::vector<TokenId>{0}));
  EXPECT_EQ(candidate_pool(p, 0.0), (std::vector<TokenId>{0, 1, 2}));
}

TEST(CandidatePool, LadderNests) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u;
  SimilarityProfile p;
  std::vector<double> raw(500);
  for (double& v : raw) v = u(rng);
  p.normalized = normalize_similarity(raw);
  const std::array<double, 5> ladder = {0.98, 0.95, 0.9, 0.85, 0.8};
  std::vector<TokenId> prev;
  for (double rho : ladder) {
    const auto pool = candidate_pool(p, rho);
    EXPECT_FALSE(pool.empty());
    EXPECT_TRUE(std::ranges::includes(pool, prev));
    EXPECT_GE(pool.size(), prev.size());
    prev = pool;
  }
}

TEST(NearestToken, Examples) {
  const auto cb = make_codebook({{1, 0}, {0, 1}});
  EXPECT_EQ(nearest_token(std::vector<double>{0.9, 0.1}, cb), 0);
  EXPECT_EQ(nearest_token(std::vector<double>{0.5, 0.5}, cb), 0);  // tie
  const auto cb2 = make_codebook({{0, 1}, {1, 0}, {0, 1}});
  EXPECT_EQ(nearest_token(std::vector<double>{0.1, 0.9}, cb2), 0);
  EXPECT_THROW(nearest_token(std::vector<double>{1, 0, 0}, cb), InvalidArgument);
  EXPECT_THROW(nearest_token(std::vector<double>{NAN, 0}, cb), InvalidArgument);
}

TEST(NearestToken, MatchesExhaustiveScan) {
  const auto cb = generate_synthetic_codebook(1000, 16, 8);
  std::mt19937 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(16);
    for (double& v : z) v = n(rng) * 0.3;
    TokenId best = -1;
    double best_d = 1e300;
    for (TokenId k = 0; k < 1000; ++k) {
      double d = 0.0;
      for (int j = 0; j < 16; ++j) d += std::pow(z[j] - cb.embedding(k)[j], 2);
      if (d < best_d) best_d = d, best = k;
    }
    EXPECT_EQ(nearest_token(z, cb), best);
  }
}

TEST(NearestToken, TranslationInvariant) {
  // Small integers keep every shifted value exactly representable.
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> u(-8, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<float>> rows(12, std::vector<float>(3));
    for (auto& r : rows) for (float& v : r) v = static_cast<float>(u(rng));
    std::vector<double> z(3), shift(3);
    for (double& v : z) v = u(rng);
    for (double& v : shift) v = u(rng);
    auto shifted_rows = rows;
    for (auto& r : shifted_rows) for (int j = 0; j < 3; ++j) r[j] += static_cast<float>(shift[j]);
    auto zs = z;
    for (int j = 0; j < 3; ++j) zs[j] += shift[j];
    EXPECT_EQ(nearest_token(z, make_codebook(rows)),
              nearest_token(zs, make_codebook(shifted_rows)));
  }
}

}  // namespace
}  // namespace lexpyr
