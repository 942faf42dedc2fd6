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

#ifndef LEXPYR_IMAGE_H_
#define LEXPYR_IMAGE_H_

#include <filesystem>
#include <vector>

namespace lexpyr {

// Pixels in [0,1], row-major height x width x channels.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width &&
           channels == other.channels;
  }
  bool operator==(const Image&) const = default;
};

// Writes a binary PGM (1 channel) or PPM (3 channels).
void write_netpbm(const Image& image, const std::filesystem::path& path);
Image read_netpbm(const std::filesystem::path& path);

}  // namespace lexpyr

#endif  // LEXPYR_IMAGE_H_
