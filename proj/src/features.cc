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


#include "splatperc/features.h"

#include <cmath>

#include "splatperc/error.h"

namespace splatperc {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

struct BankKernels {
  Kernel1D center, surround;  // DoG halves
  Kernel1D deriv, smooth;     // derivative-of-Gaussian factors
};

// The derivative factor is d * g(d), scaled so that correlating the 2D
// kernel with the ramp f(x, y) = x returns exactly 1.
BankKernels make_kernels(const FilterBankSpec& spec) {
  BankKernels k;
  k.center = gaussian_kernel_1d(spec.dog_sigma_center, spec.dog_radius);
  k.surround = gaussian_kernel_1d(spec.dog_sigma_surround, spec.dog_radius);
  k.smooth = gaussian_kernel_1d(spec.derivative_sigma, spec.derivative_radius);
  k.deriv = k.smooth;
  double ramp = 0.0;
  for (int d = -k.deriv.radius; d <= k.deriv.radius; ++d) {
    k.deriv.taps[d + k.deriv.radius] *= d;
    ramp += d * k.deriv.at(d);
  }
  for (double& t : k.deriv.taps) t /= ramp;
  return k;
}

struct LinearLevel {
  Plane lum, dog, dx, dy;
};

LinearLevel linear_responses(const Plane& lum, const BankKernels& k) {
  LinearLevel r;
  r.lum = lum;
  r.dog = correlate_separable(lum, k.center, k.center);
  const Plane s = correlate_separable(lum, k.surround, k.surround);
  for (size_t i = 0; i < r.dog.size(); ++i) r.dog.data[i] -= s.data[i];
  r.dx = correlate_separable(lum, k.deriv, k.smooth);
  r.dy = correlate_separable(lum, k.smooth, k.deriv);
  return r;
}

Plane luminance(const ImageBuffer& img) {
  Plane y(img.height, img.width);
  const size_t n = img.pixel_count();
  if (img.channels == 1) {
    y.data = img.data;
    return y;
  }
  for (size_t i = 0; i < n; ++i) {
    const double* px = &img.data[3 * i];
    y.data[i] = kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2];
  }
  return y;
}

void check_input(const ImageBuffer& img, const FilterBankSpec& spec) {
  validate(spec);
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "filter bank needs a 1- or 3-channel image");
  }
  const int min_side = 1 << spec.num_levels;
  if (img.height < min_side || img.width < min_side) {
    throw Error(ErrorCode::kInvalidArgument,
                "image is smaller than " + std::to_string(min_side) +
                    " pixels per side");
  }
}

std::vector<Plane> luminance_pyramid(const ImageBuffer& img, int levels) {
  std::vector<Plane> pyr;
  pyr.push_back(luminance(img));
  for (int l = 1; l < levels; ++l) pyr.push_back(downsample2x(pyr.back()));
  return pyr;
}

bool has_chroma(const FilterBankSpec& spec, int level, int input_channels) {
  return spec.chroma && level == 0 && input_channels == 3;
}

}  // namespace

void to_json(nlohmann::json& j, const FilterBankSpec& s) {
  j = nlohmann::json{{"num_levels", s.num_levels},
                     {"dog_sigma_center", s.dog_sigma_center},
                     {"dog_sigma_surround", s.dog_sigma_surround},
                     {"derivative_sigma", s.derivative_sigma},
                     {"dog_radius", s.dog_radius},
                     {"derivative_radius", s.derivative_radius},
                     {"rectifier_eps", s.rectifier_eps},
                     {"rectify", s.rectify},
                     {"chroma", s.chroma}};
}

void from_json(const nlohmann::json& j, FilterBankSpec& s) {
  FilterBankSpec d;
  s.num_levels = j.value("num_levels", d.num_levels);
  s.dog_sigma_center = j.value("dog_sigma_center", d.dog_sigma_center);
  s.dog_sigma_surround = j.value("dog_sigma_surround", d.dog_sigma_surround);
  s.derivative_sigma = j.value("derivative_sigma", d.derivative_sigma);
  s.dog_radius = j.value("dog_radius", d.dog_radius);
  s.derivative_radius = j.value("derivative_radius", d.derivative_radius);
  s.rectifier_eps = j.value("rectifier_eps", d.rectifier_eps);
  s.rectify = j.value("rectify", d.rectify);
  s.chroma = j.value("chroma", d.chroma);
}

void validate(const FilterBankSpec& s) {
  if (s.num_levels < 1 || s.num_levels > 8 || s.dog_sigma_center <= 0 ||
      s.dog_sigma_surround <= 0 || s.derivative_sigma <= 0 ||
      s.dog_radius < 1 || s.derivative_radius < 1 || s.rectifier_eps <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid filter bank spec");
  }
}

size_t FeatureStack::total_size() const {
  size_t n = 0;
  for (const FeatureLevel& l : levels)
    for (const Plane& p : l.channels) n += p.size();
  return n;
}

bool FeatureStack::same_shape(const FeatureStack& o) const {
  if (levels.size() != o.levels.size()) return false;
  for (size_t l = 0; l < levels.size(); ++l) {
    const FeatureLevel& a = levels[l];
    const FeatureLevel& b = o.levels[l];
    if (a.height != b.height || a.width != b.width ||
        a.channels.size() != b.channels.size()) {
      return false;
    }
    for (size_t c = 0; c < a.channels.size(); ++c)
      if (!a.channels[c].same_shape(b.channels[c])) return false;
  }
  return true;
}

int feature_channel_count(const FilterBankSpec& spec, int level,
                          int input_channels) {
  return kChannelsPerLevel + (has_chroma(spec, level, input_channels) ? 2 : 0);
}

FeatureStack zero_features_like(const FeatureStack& f) {
  FeatureStack z;
  for (const FeatureLevel& l : f.levels) {
    FeatureLevel zl{l.height, l.width, {}};
    for (const Plane& p : l.channels)
      zl.channels.emplace_back(p.height, p.width);
    z.levels.push_back(std::move(zl));
  }
  return z;
}

FeatureStack extract(const ImageBuffer& img, const FilterBankSpec& spec) {
  check_input(img, spec);
  const BankKernels k = make_kernels(spec);
  const std::vector<Plane> pyr = luminance_pyramid(img, spec.num_levels);
  const double eps = spec.rectifier_eps;
  auto rect = [&](Plane p) {
    if (!spec.rectify) return p;
    for (double& v : p.data) v = std::sqrt(v * v + eps * eps) - eps;
    return p;
  };

  FeatureStack out;
  for (int l = 0; l < spec.num_levels; ++l) {
    LinearLevel r = linear_responses(pyr[l], k);
    Plane d45(r.dx.height, r.dx.width), d135(r.dx.height, r.dx.width);
    for (size_t i = 0; i < r.dx.size(); ++i) {
      d45.data[i] = M_SQRT1_2 * (r.dx.data[i] + r.dy.data[i]);
      d135.data[i] = M_SQRT1_2 * (r.dy.data[i] - r.dx.data[i]);
    }
    FeatureLevel fl{pyr[l].height, pyr[l].width, {}};
    fl.channels.push_back(std::move(r.lum));
    fl.channels.push_back(rect(std::move(r.dog)));
    fl.channels.push_back(rect(std::move(r.dx)));
    fl.channels.push_back(rect(std::move(d45)));
    fl.channels.push_back(rect(std::move(r.dy)));
    fl.channels.push_back(rect(std::move(d135)));
    if (has_chroma(spec, l, img.channels)) {
      Plane cb(img.height, img.width), cr(img.height, img.width);
      const Plane& y = pyr[0];
      for (size_t i = 0; i < img.pixel_count(); ++i) {
        cb.data[i] = img.data[3 * i + 2] - y.data[i];
        cr.data[i] = img.data[3 * i] - y.data[i];
      }
      fl.channels.push_back(std::move(cb));
      fl.channels.push_back(std::move(cr));
    }
    out.levels.push_back(std::move(fl));
  }
  return out;
}

ImageBuffer extract_backward(const ImageBuffer& img, const FilterBankSpec& spec,
                             const FeatureStack& upstream) {
  check_input(img, spec);
  const BankKernels k = make_kernels(spec);
  const std::vector<Plane> pyr = luminance_pyramid(img, spec.num_levels);
  if (static_cast<int>(upstream.levels.size()) != spec.num_levels) {
    throw Error(ErrorCode::kShapeMismatch, "upstream level count mismatch");
  }
  for (int l = 0; l < spec.num_levels; ++l) {
    const FeatureLevel& u = upstream.levels[l];
    const int nc = feature_channel_count(spec, l, img.channels);
    if (u.height != pyr[l].height || u.width != pyr[l].width ||
        static_cast<int>(u.channels.size()) != nc) {
      throw Error(ErrorCode::kShapeMismatch, "upstream feature shape mismatch");
    }
    for (const Plane& p : u.channels)
      if (!p.same_shape(pyr[l]))
        throw Error(ErrorCode::kShapeMismatch, "upstream plane shape mismatch");
  }

  const double eps = spec.rectifier_eps;
  std::vector<Plane> grad_lum(spec.num_levels);
  for (int l = 0; l < spec.num_levels; ++l) {
    const FeatureLevel& u = upstream.levels[l];
    const LinearLevel r = linear_responses(pyr[l], k);
    const size_t n = pyr[l].size();
    auto slope = [&](double x) {
      return spec.rectify ? x / std::sqrt(x * x + eps * eps) : 1.0;
    };
    Plane g_dog(pyr[l].height, pyr[l].width);
    Plane g_dx(pyr[l].height, pyr[l].width);
    Plane g_dy(pyr[l].height, pyr[l].width);
    for (size_t i = 0; i < n; ++i) {
      const double dx = r.dx.data[i], dy = r.dy.data[i];
      const double a45 = M_SQRT1_2 * (dx + dy);
      const double a135 = M_SQRT1_2 * (dy - dx);
      g_dog.data[i] = u.channels[kCenterSurround].data[i] * slope(r.dog.data[i]);
      const double g0 = u.channels[kDeriv0].data[i] * slope(dx);
      const double g45 = u.channels[kDeriv45].data[i] * slope(a45);
      const double g90 = u.channels[kDeriv90].data[i] * slope(dy);
      const double g135 = u.channels[kDeriv135].data[i] * slope(a135);
      g_dx.data[i] = g0 + M_SQRT1_2 * (g45 - g135);
      g_dy.data[i] = g90 + M_SQRT1_2 * (g45 + g135);
    }
    Plane g = correlate_separable_adjoint(g_dog, k.center, k.center);
    const Plane gs = correlate_separable_adjoint(g_dog, k.surround, k.surround);
    const Plane gx = correlate_separable_adjoint(g_dx, k.deriv, k.smooth);
    const Plane gy = correlate_separable_adjoint(g_dy, k.smooth, k.deriv);
    const Plane& gl = u.channels[kLuminance];
    for (size_t i = 0; i < n; ++i)
      g.data[i] += gl.data[i] - gs.data[i] + gx.data[i] + gy.data[i];
    grad_lum[l] = std::move(g);
  }
  for (int l = spec.num_levels - 1; l > 0; --l) {
    const Plane up =
        downsample2x_adjoint(grad_lum[l], pyr[l - 1].height, pyr[l - 1].width);
    for (size_t i = 0; i < up.size(); ++i) grad_lum[l - 1].data[i] += up.data[i];
  }

  ImageBuffer grad(img.height, img.width, img.channels);
  Plane& gy = grad_lum[0];
  if (img.channels == 1) {
    grad.data = gy.data;
    return grad;
  }
  const bool chroma = has_chroma(spec, 0, img.channels);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    const double ucb = chroma ? upstream.levels[0].channels[kChromaBlue].data[i] : 0.0;
    const double ucr = chroma ? upstream.levels[0].channels[kChromaRed].data[i] : 0.0;
    const double g = gy.data[i] - ucb - ucr;
    grad.data[3 * i] = kLumaR * g + ucr;
    grad.data[3 * i + 1] = kLumaG * g;
    grad.data[3 * i + 2] = kLumaB * g + ucb;
  }
  return grad;
}

std::vector<Kernel2D> bank_kernels(const FilterBankSpec& spec) {
  validate(spec);
  const BankKernels k = make_kernels(spec);
  auto outer = [](const Kernel1D& ky, const Kernel1D& kx, int radius) {
    Kernel2D out;
    out.radius = radius;
    const int side = 2 * radius + 1;
    out.taps.assign(static_cast<size_t>(side) * side, 0.0);
    for (int dy = -ky.radius; dy <= ky.radius; ++dy)
      for (int dx = -kx.radius; dx <= kx.radius; ++dx)
        out.taps[static_cast<size_t>(dy + radius) * side + dx + radius] =
            ky.at(dy) * kx.at(dx);
    return out;
  };
  auto combine = [](const Kernel2D& a, double wa, const Kernel2D& b, double wb) {
    Kernel2D out = a;
    for (size_t i = 0; i < out.taps.size(); ++i)
      out.taps[i] = wa * a.taps[i] + wb * b.taps[i];
    return out;
  };
  const Kernel2D identity{0, {1.0}};
  const Kernel2D dog = combine(outer(k.center, k.center, spec.dog_radius), 1.0,
                               outer(k.surround, k.surround, spec.dog_radius), -1.0);
  const int r = spec.derivative_radius;
  const Kernel2D d0 = outer(k.smooth, k.deriv, r);
  const Kernel2D d90 = outer(k.deriv, k.smooth, r);
  return {identity,
          dog,
          d0,
          combine(d0, M_SQRT1_2, d90, M_SQRT1_2),
          d90,
          combine(d0, -M_SQRT1_2, d90, M_SQRT1_2),
          identity,
          identity};
}

double channel_lipschitz_bound(const FilterBankSpec& spec, int level,
                               int channel, int input_channels) {
  if (channel < 0 || channel >= feature_channel_count(spec, level, input_channels)) {
    throw Error(ErrorCode::kInvalidArgument, "channel out of range");
  }
  if (channel == kChromaBlue) return (1.0 - kLumaB) + kLumaR + kLumaG;
  if (channel == kChromaRed) return (1.0 - kLumaR) + kLumaG + kLumaB;
  return bank_kernels(spec)[channel].abs_sum();
}

}  // namespace splatperc
