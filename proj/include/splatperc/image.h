// Copyright 2026 The splatperc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPLATPERC_IMAGE_H_
#define SPLATPERC_IMAGE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace splatperc {

// Row-major H x W x C raster with interleaved channels, samples in [0, 1].
// Three-channel buffers hold sRGB-encoded values; no linearization is done.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
  bool same_shape(const ImageBuffer& other) const {
    return height == other.height && width == other.width &&
           channels == other.channels;
  }
  bool empty() const { return data.empty(); }
};

struct CropSpec {
  int origin_x = 0;
  int origin_y = 0;
  int side = 0;
  bool flip_horizontal = false;

  bool operator==(const CropSpec&) const = default;
};

// PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette), binary PPM (P6) and
// PGM (P5). Alpha is dropped.
ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_image(const std::vector<uint8_t>& bytes);

// Writes 8-bit output; ".png" selects PNG, anything else PPM (3 channels) or
// PGM (1 channel). Samples are clamped then quantized as floor(255 v + 0.5).
void save_image(const ImageBuffer& img, const std::filesystem::path& path);
std::vector<uint8_t> encode_png(const ImageBuffer& img);
std::vector<uint8_t> encode_pnm(const ImageBuffer& img);

uint8_t quantize_sample(double v);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

CropSpec sample_crop(const ImageBuffer& img, uint64_t seed, int side);
ImageBuffer apply_crop(const ImageBuffer& img, const CropSpec& crop);

// Peak signal-to-noise ratio for unit peak; +infinity when the images match.
double psnr(const ImageBuffer& a, const ImageBuffer& b);
double mse(const ImageBuffer& a, const ImageBuffer& b);

ImageBuffer to_rgb(const ImageBuffer& img);
ImageBuffer clamp01(ImageBuffer img);

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b,
                        const char* what);

}  // namespace splatperc

#endif  // SPLATPERC_IMAGE_H_
