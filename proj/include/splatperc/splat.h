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

#ifndef SPLATPERC_SPLAT_H_
#define SPLATPERC_SPLAT_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "splatperc/image.h"
#include "splatperc/kernels.h"

namespace splatperc {

// Index of each optimizable scalar inside Splat::p.
enum SplatParam : int {
  kPosX = 0,
  kPosY,
  kLogScale1,
  kLogScale2,
  kRotation,
  kColorR,
  kColorG,
  kColorB,
  kOpacity,
  kNumSplatParams,
};

enum class ParamGroup : int { kPosition, kLogScale, kRotation, kColor, kOpacity };
inline constexpr int kNumParamGroups = 5;

ParamGroup group_of(int param);
const char* group_name(ParamGroup group);

using Color = std::array<double, 3>;
using ParamVector = std::array<double, kNumSplatParams>;

double logistic(double v);
double logit(double p);

// One anisotropic 2D Gaussian. Position is in pixels (pixel (i, j) has its
// center at x = j + 0.5, y = i + 0.5); color and opacity are stored as
// logits. depth_key is fixed during optimization and sets the blend order.
struct Splat {
  ParamVector p{};
  double depth_key = 0.0;

  double x() const { return p[kPosX]; }
  double y() const { return p[kPosY]; }
  double scale1() const;
  double scale2() const;
  double theta() const { return p[kRotation]; }
  double opacity() const { return logistic(p[kOpacity]); }
  Color color() const;
};

struct Covariance2 {
  double xx = 0.0, xy = 0.0, yy = 0.0;
};
Covariance2 covariance(const Splat& s);

struct SplatSet {
  std::vector<Splat> splats;

  size_t size() const { return splats.size(); }
  bool empty() const { return splats.empty(); }
  bool operator==(const SplatSet& o) const;
};

// Blend order: ascending depth_key, ties broken by index.
std::vector<int> blend_order(const SplatSet& splats);

// Radial falloff of a splat as a function of the squared Mahalanobis
// distance q. It is a Gaussian exp(-q/2) minus its first-order Taylor
// expansion at q = 9, renormalized to 1 at the center, so the footprint ends
// with zero value and zero slope on the 3-sigma ellipse.
double splat_falloff(double q);
double splat_falloff_derivative(double q);
inline constexpr double kCutoffQ = 9.0;

struct RenderOutput {
  ImageBuffer image;     // 3 channels
  Plane transmittance;   // residual transmittance T(p)
};

struct SplatGradients {
  std::vector<ParamVector> d;
  // |dL/d(position)| per splat for this backward pass.
  std::vector<double> position_grad_norm;
  // 1 when the splat covers at least one pixel center.
  std::vector<uint8_t> visible;

  size_t size() const { return d.size(); }
};

void validate_splats(const SplatSet& splats);

RenderOutput render(const SplatSet& splats, int width, int height,
                    const Color& background = {0.0, 0.0, 0.0});

// grad_image holds dL/dC for every pixel and channel of the rendered image.
SplatGradients render_backward(const SplatSet& splats, int width, int height,
                               const Color& background,
                               const ImageBuffer& grad_image);

// Per-splat blend weights at one pixel, in splat index order, plus the
// residual transmittance.
struct PixelBlend {
  std::vector<double> weights;
  double transmittance = 1.0;
};
PixelBlend blend_at_pixel(const SplatSet& splats, int px, int py);

namespace reference {

RenderOutput render(const SplatSet& splats, int width, int height,
                    const Color& background = {0.0, 0.0, 0.0});
SplatGradients render_backward(const SplatSet& splats, int width, int height,
                               const Color& background,
                               const ImageBuffer& grad_image);

}  // namespace reference

// Little-endian "SPL2" checkpoint: 16-byte header (magic, u32 version = 1,
// u32 count, u32 floats per record = 11) followed by float32 records
// (x, y, log_s1, log_s2, theta, r, g, b, opacity_logit, depth_key, 0).
inline constexpr uint32_t kSplatFormatVersion = 1;
std::vector<uint8_t> serialize_splats(const SplatSet& splats);
SplatSet deserialize_splats(const std::vector<uint8_t>& bytes);

void save_splats(const SplatSet& splats, const std::filesystem::path& path);
// Also writes <path>.meta.json.
void save_splats(const SplatSet& splats, const std::filesystem::path& path,
                 const nlohmann::json& meta);
SplatSet load_splats(const std::filesystem::path& path);

// Rounds every parameter to the float32 value a checkpoint would store.
SplatSet round_to_checkpoint_precision(SplatSet splats);

}  // namespace splatperc

#endif  // SPLATPERC_SPLAT_H_
