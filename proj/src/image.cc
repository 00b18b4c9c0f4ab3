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

#include "splatperc/image.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

#include "splatperc/error.h"

namespace splatperc {

ImageBuffer::ImageBuffer(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      data(static_cast<size_t>(h) * w * c, fill) {
  if (h < 0 || w < 0 || (c != 1 && c != 3)) {
    throw Error(ErrorCode::kInvalidArgument, "bad image shape");
  }
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": " + std::to_string(a.height) + "x" +
                    std::to_string(a.width) + "x" + std::to_string(a.channels) +
                    " vs " + std::to_string(b.height) + "x" +
                    std::to_string(b.width) + "x" + std::to_string(b.channels));
  }
}

uint8_t quantize_sample(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::floor(255.0 * c + 0.5));
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kUnreadableFile, path.string());
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kUnreadableFile, path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritable, path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kUnwritable, path.string());
}

namespace {

// --- PNM -------------------------------------------------------------------

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) {
      throw Error(ErrorCode::kTruncated, "PNM header ends early");
    }
    if (!std::isdigit(bytes_[pos_])) {
      throw Error(ErrorCode::kUnsupportedFormat, "malformed PNM header");
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1 << 24)) {
        throw Error(ErrorCode::kUnsupportedFormat, "PNM header value too large");
      }
      ++pos_;
    }
    return static_cast<int>(value);
  }

  // A single whitespace byte separates maxval from the raster.
  size_t raster_offset() {
    if (pos_ >= bytes_.size()) {
      throw Error(ErrorCode::kTruncated, "PNM header ends early");
    }
    return pos_ + 1;
  }

  void skip(size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

ImageBuffer decode_pnm(const std::vector<uint8_t>& bytes) {
  const int channels = bytes[1] == '6' ? 3 : 1;
  PnmHeaderReader reader(bytes);
  reader.skip(2);
  const int width = reader.next_int();
  const int height = reader.next_int();
  const int maxval = reader.next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::kUnsupportedFormat, "bad PNM dimensions or maxval");
  }
  const size_t offset = reader.raster_offset();
  const size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const size_t count = static_cast<size_t>(width) * height * channels;
  if (bytes.size() < offset + count * bytes_per_sample) {
    throw Error(ErrorCode::kTruncated, "PNM raster is short");
  }
  ImageBuffer img(height, width, channels);
  const double maxv = maxval;
  const uint8_t* p = bytes.data() + offset;
  for (size_t i = 0; i < count; ++i) {
    unsigned v = p[i * bytes_per_sample];
    if (bytes_per_sample == 2) v = (v << 8) | p[i * 2 + 1];
    img.data[i] = std::min(1.0, v / maxv);
  }
  return img;
}

// --- PNG -------------------------------------------------------------------

struct PngReadState {
  const std::vector<uint8_t>* bytes;
  size_t pos;
  bool truncated;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->pos + length > state->bytes->size()) {
    state->truncated = true;
    png_error(png, "truncated");
  }
  std::memcpy(out, state->bytes->data() + state->pos, length);
  state->pos += length;
}

void png_silent_warning(png_structp, png_const_charp) {}

// Returns the decoded rows and geometry; written so no object with a
// non-trivial destructor lives across the setjmp boundary.
bool decode_png_raw(const std::vector<uint8_t>& bytes, std::vector<uint8_t>* raw,
                    png_uint_32* width, png_uint_32* height, int* channels,
                    int* bit_depth, bool* truncated) {
  PngReadState state{&bytes, 0, false};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    *truncated = state.truncated;
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  *bit_depth = png_get_bit_depth(png, info);
  *channels = png_get_channels(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  raw->resize(rowbytes * *height);
  std::vector<png_bytep> rows(*height);
  for (png_uint_32 y = 0; y < *height; ++y) rows[y] = raw->data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

ImageBuffer decode_png(const std::vector<uint8_t>& bytes) {
  std::vector<uint8_t> raw;
  png_uint_32 width = 0, height = 0;
  int channels = 0, bit_depth = 0;
  bool truncated = false;
  if (!decode_png_raw(bytes, &raw, &width, &height, &channels, &bit_depth,
                      &truncated)) {
    if (truncated) throw Error(ErrorCode::kTruncated, "PNG stream is short");
    throw Error(ErrorCode::kUnsupportedFormat, "PNG decode failed");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kUnsupportedFormat, "unexpected PNG channel count");
  }
  ImageBuffer img(static_cast<int>(height), static_cast<int>(width), channels);
  const size_t count = img.size();
  if (bit_depth == 16) {
    for (size_t i = 0; i < count; ++i) {
      img.data[i] = ((raw[2 * i] << 8) | raw[2 * i + 1]) / 65535.0;
    }
  } else {
    for (size_t i = 0; i < count; ++i) img.data[i] = raw[i] / 255.0;
  }
  return img;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

bool encode_png_raw(const std::vector<uint8_t>& samples, int width, int height,
                    int channels, std::vector<uint8_t>* out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(samples.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

ImageBuffer decode_image(const std::vector<uint8_t>& bytes) {
  static constexpr uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G',
                                               '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes);
  }
  if (bytes.size() < 2) throw Error(ErrorCode::kTruncated, "file too short");
  throw Error(ErrorCode::kUnsupportedFormat, "not PNG, P5 or P6");
}

ImageBuffer load_image(const std::filesystem::path& path) {
  return decode_image(read_file_bytes(path));
}

std::vector<uint8_t> encode_png(const ImageBuffer& img) {
  std::vector<uint8_t> samples(img.size());
  std::transform(img.data.begin(), img.data.end(), samples.begin(),
                 quantize_sample);
  std::vector<uint8_t> out;
  if (!encode_png_raw(samples, img.width, img.height, img.channels, &out)) {
    throw Error(ErrorCode::kUnwritable, "PNG encode failed");
  }
  return out;
}

std::vector<uint8_t> encode_pnm(const ImageBuffer& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") +
                             "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.data) out.push_back(quantize_sample(v));
  return out;
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.empty() || img.size() != img.pixel_count() * img.channels) {
    throw Error(ErrorCode::kInvalidArgument, "invalid image buffer");
  }
  write_file_bytes(path, has_png_extension(path) ? encode_png(img) : encode_pnm(img));
}

CropSpec sample_crop(const ImageBuffer& img, uint64_t seed, int side) {
  if (side <= 0 || side > std::min(img.height, img.width)) {
    throw Error(ErrorCode::kInvalidArgument,
                "crop side " + std::to_string(side) + " does not fit " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ox(0, img.width - side);
  std::uniform_int_distribution<int> oy(0, img.height - side);
  std::bernoulli_distribution flip(0.5);
  CropSpec crop;
  crop.side = side;
  crop.origin_x = ox(rng);
  crop.origin_y = oy(rng);
  crop.flip_horizontal = flip(rng);
  return crop;
}

ImageBuffer apply_crop(const ImageBuffer& img, const CropSpec& crop) {
  if (crop.side <= 0 || crop.origin_x < 0 || crop.origin_y < 0 ||
      crop.origin_x + crop.side > img.width ||
      crop.origin_y + crop.side > img.height) {
    throw Error(ErrorCode::kInvalidArgument, "crop outside image");
  }
  ImageBuffer out(crop.side, crop.side, img.channels);
  for (int y = 0; y < crop.side; ++y) {
    for (int x = 0; x < crop.side; ++x) {
      const int sx = crop.flip_horizontal ? crop.side - 1 - x : x;
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(crop.origin_y + y, crop.origin_x + sx, c);
      }
    }
  }
  return out;
}

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw Error(ErrorCode::kEmptyInput, "mse of empty images");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double err = mse(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(err);
}

ImageBuffer to_rgb(const ImageBuffer& img) {
  if (img.channels == 3) return img;
  ImageBuffer out(img.height, img.width, 3);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = img.data[i];
  }
  return out;
}

ImageBuffer clamp01(ImageBuffer img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace splatperc
