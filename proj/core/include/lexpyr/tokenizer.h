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


#ifndef LEXPYR_TOKENIZER_H_
#define LEXPYR_TOKENIZER_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lexpyr/autoencoder.h"
#include "lexpyr/codebook.h"
#include "lexpyr/pyramid.h"
#include "lexpyr/trainer.h"

namespace lexpyr {

// Trained encoder/decoder bound to a frozen codebook and pyramid layout.
// Inference reuses activation buffers, so a Tokenizer is not shareable
// across threads.
class Tokenizer {
 public:
  Tokenizer(std::unique_ptr<Autoencoder<float>> model, LexicalCodebook codebook,
            PyramidSpec spec, QuantizerKind kind);

  const LexicalCodebook& codebook() const { return codebook_; }
  const PyramidSpec& spec() const { return spec_; }
  QuantizerKind quantizer() const { return kind_; }
  Autoencoder<float>& model() { return *model_; }

  std::vector<LatentGrid> latents(std::span<const Image> images);
  TokenPyramid encode(const Image& image);
  std::vector<TokenPyramid> encode_batch(std::span<const Image> images);
  // Reconstruction from the cumulative layers 1..depth.
  Image decode(const TokenPyramid& pyramid, int depth);
  std::vector<Image> decode_depths(const TokenPyramid& pyramid);
  std::string to_string(const TokenPyramid& pyramid, int up_to_layer = 0) const;

 private:
  std::unique_ptr<Autoencoder<float>> model_;
  LexicalCodebook codebook_;
  PyramidSpec spec_;
  QuantizerKind kind_;
};

// Rebuilds a tokenizer from a trainer checkpoint. The codebook is rebuilt
// from the embedded training config and must match the recorded checksum.
Tokenizer load_tokenizer(const std::filesystem::path& checkpoint);
TrainConfig checkpoint_train_config(const Checkpoint& ckpt);

}  // namespace lexpyr

#endif  // LEXPYR_TOKENIZER_H_
