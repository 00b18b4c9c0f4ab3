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

#include "splatperc/splat.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "splatperc/error.h"

namespace splatperc {

ParamGroup group_of(int param) {
  switch (param) {
    case kPosX:
    case kPosY: return ParamGroup::kPosition;
    case kLogScale1:
    case kLogScale2: return ParamGroup::kLogScale;
    case kRotation: return ParamGroup::kRotation;
    case kColorR:
    case kColorG:
    case kColorB: return ParamGroup::kColor;
    default: return ParamGroup::kOpacity;
  }
}

const char* group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kPosition: return "position";
    case ParamGroup::kLogScale: return "log_scale";
    case ParamGroup::kRotation: return "rotation";
    case ParamGroup::kColor: return "color";
    case ParamGroup::kOpacity: return "opacity";
  }
  return "?";
}

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double Splat::scale1() const { return std::exp(p[kLogScale1]); }
double Splat::scale2() const { return std::exp(p[kLogScale2]); }

Color Splat::color() const {
  return {logistic(p[kColorR]), logistic(p[kColorG]), logistic(p[kColorB])};
}

Covariance2 covariance(const Splat& s) {
  const double c = std::cos(s.theta()), sn = std::sin(s.theta());
  const double v1 = std::exp(2.0 * s.p[kLogScale1]);
  const double v2 = std::exp(2.0 * s.p[kLogScale2]);
  return {c * c * v1 + sn * sn * v2, c * sn * (v1 - v2), sn * sn * v1 + c * c * v2};
}

bool SplatSet::operator==(const SplatSet& o) const {
  if (splats.size() != o.splats.size()) return false;
  for (size_t i = 0; i < splats.size(); ++i) {
    if (splats[i].p != o.splats[i].p || splats[i].depth_key != o.splats[i].depth_key) {
      return false;
    }
  }
  return true;
}

std::vector<int> blend_order(const SplatSet& splats) {
  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return splats.splats[a].depth_key < splats.splats[b].depth_key;
  });
  return order;
}

namespace {

const double kTail = std::exp(-0.5 * kCutoffQ);
const double kFalloffNorm = 1.0 - kTail * (1.0 + 0.5 * kCutoffQ);

}  // namespace

double splat_falloff(double q) {
  if (q >= kCutoffQ) return 0.0;
  return (std::exp(-0.5 * q) - kTail * (1.0 + 0.5 * (kCutoffQ - q))) / kFalloffNorm;
}

double splat_falloff_derivative(double q) {
  if (q >= kCutoffQ) return 0.0;
  return 0.5 * (kTail - std::exp(-0.5 * q)) / kFalloffNorm;
}

void validate_splats(const SplatSet& splats) {
  for (size_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats.splats[i];
    for (double v : s.p) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, "splat " + std::to_string(i));
      }
    }
    if (!std::isfinite(s.depth_key)) {
      throw Error(ErrorCode::kNonFinite, "depth key of splat " + std::to_string(i));
    }
  }
}

namespace {

constexpr int kTile = 16;

// Per-splat quantities shared by forward and backward passes.
struct Prepared {
  double x, y, cos_t, sin_t, inv_s1sq, inv_s2sq, opacity;
  Color color;
  int x0, x1, y0, y1;  // inclusive pixel bounding box of the 3-sigma ellipse
};

Prepared prepare(const Splat& s, int width, int height) {
  Prepared p;
  p.x = s.x();
  p.y = s.y();
  p.cos_t = std::cos(s.theta());
  p.sin_t = std::sin(s.theta());
  p.inv_s1sq = std::exp(-2.0 * s.p[kLogScale1]);
  p.inv_s2sq = std::exp(-2.0 * s.p[kLogScale2]);
  p.opacity = s.opacity();
  p.color = s.color();
  const Covariance2 cov = covariance(s);
  const double ex = 3.0 * std::sqrt(cov.xx);
  const double ey = 3.0 * std::sqrt(cov.yy);
  const double fx0 = std::ceil(p.x - ex - 0.5), fx1 = std::floor(p.x + ex - 0.5);
  const double fy0 = std::ceil(p.y - ey - 0.5), fy1 = std::floor(p.y + ey - 0.5);
  p.x0 = static_cast<int>(std::clamp(fx0, 0.0, static_cast<double>(width)));
  p.x1 = static_cast<int>(std::clamp(fx1, -1.0, static_cast<double>(width - 1)));
  p.y0 = static_cast<int>(std::clamp(fy0, 0.0, static_cast<double>(height)));
  p.y1 = static_cast<int>(std::clamp(fy1, -1.0, static_cast<double>(height - 1)));
  return p;
}

struct Footprint {
  double q, u, v;
};

inline bool evaluate(const Prepared& s, int px, int py, Footprint* f) {
  if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) return false;
  const double dx = px + 0.5 - s.x;
  const double dy = py + 0.5 - s.y;
  f->u = s.cos_t * dx + s.sin_t * dy;
  f->v = -s.sin_t * dx + s.cos_t * dy;
  f->q = f->u * f->u * s.inv_s1sq + f->v * f->v * s.inv_s2sq;
  return f->q < kCutoffQ;
}

// Accumulates the parameter gradient of one splat/pixel interaction.
inline void accumulate_param_grad(const Prepared& s, const Footprint& f,
                                  double falloff, double dfalloff,
                                  double g_alpha, const Color& g_color,
                                  double transmittance_before, double alpha,
                                  ParamVector& g) {
  g[kOpacity] += g_alpha * falloff * s.opacity * (1.0 - s.opacity);
  const double gq = g_alpha * s.opacity * dfalloff;
  const double dq_du = 2.0 * f.u * s.inv_s1sq;
  const double dq_dv = 2.0 * f.v * s.inv_s2sq;
  g[kPosX] += gq * (-dq_du * s.cos_t + dq_dv * s.sin_t);
  g[kPosY] += gq * (-dq_du * s.sin_t - dq_dv * s.cos_t);
  g[kLogScale1] += gq * (-2.0 * f.u * f.u * s.inv_s1sq);
  g[kLogScale2] += gq * (-2.0 * f.v * f.v * s.inv_s2sq);
  g[kRotation] += gq * 2.0 * f.u * f.v * (s.inv_s1sq - s.inv_s2sq);
  const double w = alpha * transmittance_before;
  for (int c = 0; c < 3; ++c) {
    g[kColorR + c] += g_color[c] * w * s.color[c] * (1.0 - s.color[c]);
  }
}

std::vector<Prepared> prepare_all(const SplatSet& splats, int width, int height) {
  std::vector<Prepared> prepared(splats.size());
  for (size_t i = 0; i < splats.size(); ++i) {
    prepared[i] = prepare(splats.splats[i], width, height);
  }
  return prepared;
}

struct TileBins {
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> lists;  // splat indices in blend order
};

TileBins bin_splats(const std::vector<Prepared>& prepared,
                    const std::vector<int>& order, int width, int height) {
  TileBins bins;
  bins.tiles_x = (width + kTile - 1) / kTile;
  bins.tiles_y = (height + kTile - 1) / kTile;
  bins.lists.resize(static_cast<size_t>(bins.tiles_x) * bins.tiles_y);
  for (int idx : order) {
    const Prepared& p = prepared[idx];
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;
    for (int ty = p.y0 / kTile; ty <= p.y1 / kTile; ++ty) {
      for (int tx = p.x0 / kTile; tx <= p.x1 / kTile; ++tx) {
        bins.lists[static_cast<size_t>(ty) * bins.tiles_x + tx].push_back(idx);
      }
    }
  }
  return bins;
}

void check_raster(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "raster must be non-empty");
  }
}

void check_grad_image(const ImageBuffer& grad, int width, int height) {
  if (grad.width != width || grad.height != height || grad.channels != 3) {
    throw Error(ErrorCode::kShapeMismatch, "gradient image does not match raster");
  }
  for (double v : grad.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "gradient image");
  }
}

void finish_gradients(SplatGradients& grads) {
  for (size_t i = 0; i < grads.d.size(); ++i) {
    grads.position_grad_norm[i] = std::hypot(grads.d[i][kPosX], grads.d[i][kPosY]);
  }
}

}  // namespace

RenderOutput render(const SplatSet& splats, int width, int height,
                    const Color& background) {
  check_raster(width, height);
  validate_splats(splats);
  const std::vector<Prepared> prepared = prepare_all(splats, width, height);
  const TileBins bins = bin_splats(prepared, blend_order(splats), width, height);

  RenderOutput out{ImageBuffer(height, width, 3), Plane(height, width, 1.0)};
  const int num_tiles = static_cast<int>(bins.lists.size());
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < num_tiles; ++t) {
    const std::vector<int>& list = bins.lists[t];
    const int ty = t / bins.tiles_x, tx = t % bins.tiles_x;
    for (int py = ty * kTile; py < std::min(height, (ty + 1) * kTile); ++py) {
      for (int px = tx * kTile; px < std::min(width, (tx + 1) * kTile); ++px) {
        double T = 1.0;
        Color acc{0.0, 0.0, 0.0};
        Footprint f;
        for (int idx : list) {
          const Prepared& s = prepared[idx];
          if (!evaluate(s, px, py, &f)) continue;
          const double alpha = s.opacity * splat_falloff(f.q);
          for (int c = 0; c < 3; ++c) acc[c] += s.color[c] * alpha * T;
          T *= 1.0 - alpha;
        }
        for (int c = 0; c < 3; ++c) {
          out.image.at(py, px, c) = acc[c] + T * background[c];
        }
        out.transmittance.at(py, px) = T;
      }
    }
  }
  return out;
}

SplatGradients render_backward(const SplatSet& splats, int width, int height,
                               const Color& background,
                               const ImageBuffer& grad_image) {
  check_raster(width, height);
  validate_splats(splats);
  check_grad_image(grad_image, width, height);
  const std::vector<Prepared> prepared = prepare_all(splats, width, height);
  const TileBins bins = bin_splats(prepared, blend_order(splats), width, height);

  const int num_tiles = static_cast<int>(bins.lists.size());
  // Gradients are first gathered per (tile, list slot) and reduced afterwards
  // in tile order so the sum order never depends on scheduling.
  std::vector<std::vector<ParamVector>> tile_grads(num_tiles);
  std::vector<std::vector<uint8_t>> tile_hits(num_tiles);

#pragma omp parallel
  {
    struct Hit {
      int slot;
      Footprint f;
      double falloff, alpha, T;
    };
    std::vector<Hit> hits;
#pragma omp for schedule(dynamic)
    for (int t = 0; t < num_tiles; ++t) {
      const std::vector<int>& list = bins.lists[t];
      std::vector<ParamVector>& g = tile_grads[t];
      g.assign(list.size(), ParamVector{});
      tile_hits[t].assign(list.size(), 0);
      const int ty = t / bins.tiles_x, tx = t % bins.tiles_x;
      for (int py = ty * kTile; py < std::min(height, (ty + 1) * kTile); ++py) {
        for (int px = tx * kTile; px < std::min(width, (tx + 1) * kTile); ++px) {
          hits.clear();
          double T = 1.0;
          Footprint f;
          for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
            const Prepared& s = prepared[list[slot]];
            if (!evaluate(s, px, py, &f)) continue;
            const double falloff = splat_falloff(f.q);
            const double alpha = s.opacity * falloff;
            hits.push_back({slot, f, falloff, alpha, T});
            T *= 1.0 - alpha;
          }
          const Color g_pix{grad_image.at(py, px, 0), grad_image.at(py, px, 1),
                            grad_image.at(py, px, 2)};
          // Color seen behind the current splat, normalized by the
          // transmittance just after it.
          Color behind = background;
          for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
            const Prepared& s = prepared[list[it->slot]];
            double g_alpha = 0.0;
            for (int c = 0; c < 3; ++c) {
              g_alpha += g_pix[c] * it->T * (s.color[c] - behind[c]);
            }
            accumulate_param_grad(s, it->f, it->falloff,
                                  splat_falloff_derivative(it->f.q), g_alpha,
                                  g_pix, it->T, it->alpha, g[it->slot]);
            tile_hits[t][it->slot] = 1;
            for (int c = 0; c < 3; ++c) {
              behind[c] = s.color[c] * it->alpha + (1.0 - it->alpha) * behind[c];
            }
          }
        }
      }
    }
  }

  SplatGradients grads;
  grads.d.assign(splats.size(), ParamVector{});
  grads.position_grad_norm.assign(splats.size(), 0.0);
  grads.visible.assign(splats.size(), 0);
  for (int t = 0; t < num_tiles; ++t) {
    const std::vector<int>& list = bins.lists[t];
    for (size_t slot = 0; slot < list.size(); ++slot) {
      ParamVector& dst = grads.d[list[slot]];
      for (int k = 0; k < kNumSplatParams; ++k) dst[k] += tile_grads[t][slot][k];
      grads.visible[list[slot]] |= tile_hits[t][slot];
    }
  }
  finish_gradients(grads);
  return grads;
}

PixelBlend blend_at_pixel(const SplatSet& splats, int px, int py) {
  PixelBlend out;
  out.weights.assign(splats.size(), 0.0);
  double T = 1.0;
  Footprint f;
  for (int idx : blend_order(splats)) {
    const Prepared s = prepare(splats.splats[idx], px + 1, py + 1);
    if (!evaluate(s, px, py, &f)) continue;
    const double alpha = s.opacity * splat_falloff(f.q);
    out.weights[idx] = alpha * T;
    T *= 1.0 - alpha;
  }
  out.transmittance = T;
  return out;
}

namespace reference {

RenderOutput render(const SplatSet& splats, int width, int height,
                    const Color& background) {
  check_raster(width, height);
  validate_splats(splats);
  const std::vector<Prepared> prepared = prepare_all(splats, width, height);
  const std::vector<int> order = blend_order(splats);
  RenderOutput out{ImageBuffer(height, width, 3), Plane(height, width, 1.0)};
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      double T = 1.0;
      Color acc{0.0, 0.0, 0.0};
      Footprint f;
      for (int idx : order) {
        const Prepared& s = prepared[idx];
        if (!evaluate(s, px, py, &f)) continue;
        const double alpha = s.opacity * splat_falloff(f.q);
        for (int c = 0; c < 3; ++c) acc[c] += s.color[c] * alpha * T;
        T *= 1.0 - alpha;
      }
      for (int c = 0; c < 3; ++c) out.image.at(py, px, c) = acc[c] + T * background[c];
      out.transmittance.at(py, px) = T;
    }
  }
  return out;
}

SplatGradients render_backward(const SplatSet& splats, int width, int height,
                               const Color& background,
                               const ImageBuffer& grad_image) {
  check_raster(width, height);
  validate_splats(splats);
  check_grad_image(grad_image, width, height);
  const std::vector<Prepared> prepared = prepare_all(splats, width, height);
  const std::vector<int> order = blend_order(splats);
  SplatGradients grads;
  grads.d.assign(splats.size(), ParamVector{});
  grads.position_grad_norm.assign(splats.size(), 0.0);
  grads.visible.assign(splats.size(), 0);

  // Forward prefix T_i, then suffix colors via the explicit sum
  // sum_{j>i} c_j a_j T_j + T_N bg, divided through without the (1-a) trick.
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      std::vector<int> ids;
      std::vector<Footprint> fps;
      std::vector<double> alphas, Ts;
      double T = 1.0;
      Footprint f;
      for (int idx : order) {
        if (!evaluate(prepared[idx], px, py, &f)) continue;
        const double alpha = prepared[idx].opacity * splat_falloff(f.q);
        ids.push_back(idx);
        fps.push_back(f);
        alphas.push_back(alpha);
        Ts.push_back(T);
        T *= 1.0 - alpha;
      }
      const Color g_pix{grad_image.at(py, px, 0), grad_image.at(py, px, 1),
                        grad_image.at(py, px, 2)};
      const size_t n = ids.size();
      for (size_t i = 0; i < n; ++i) {
        const Prepared& s = prepared[ids[i]];
        // dC/dalpha_i = T_i c_i - (sum_{j>i} c_j a_j T_j + T_N bg) / (1 - a_i),
        // written with T_j / (1 - a_i) expanded as a product to stay finite.
        double g_alpha = 0.0;
        for (int c = 0; c < 3; ++c) {
          double tail = 0.0;
          double Tj = Ts[i];
          for (size_t j = i + 1; j < n; ++j) {
            tail += prepared[ids[j]].color[c] * alphas[j] * Tj;
            Tj *= 1.0 - alphas[j];
          }
          tail += Tj * background[c];
          g_alpha += g_pix[c] * (Ts[i] * s.color[c] - tail);
        }
        accumulate_param_grad(s, fps[i], splat_falloff(fps[i].q),
                              splat_falloff_derivative(fps[i].q), g_alpha, g_pix,
                              Ts[i], alphas[i], grads.d[ids[i]]);
        grads.visible[ids[i]] = 1;
      }
    }
  }
  finish_gradients(grads);
  return grads;
}

}  // namespace reference

// --- checkpoint ------------------------------------------------------------

namespace {

constexpr char kSplatMagic[4] = {'S', 'P', 'L', '2'};
constexpr uint32_t kFloatsPerRecord = 11;
constexpr size_t kSplatHeaderBytes = 16;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<uint32_t>(f));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

std::vector<uint8_t> serialize_splats(const SplatSet& splats) {
  std::vector<uint8_t> out;
  out.reserve(kSplatHeaderBytes + splats.size() * kFloatsPerRecord * 4);
  out.insert(out.end(), std::begin(kSplatMagic), std::end(kSplatMagic));
  put_u32(out, kSplatFormatVersion);
  put_u32(out, static_cast<uint32_t>(splats.size()));
  put_u32(out, kFloatsPerRecord);
  for (const Splat& s : splats.splats) {
    for (double v : s.p) put_f32(out, static_cast<float>(v));
    put_f32(out, static_cast<float>(s.depth_key));
    put_f32(out, 0.0f);
  }
  return out;
}

SplatSet deserialize_splats(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kSplatHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kSplatMagic, 4) != 0) {
      throw Error(ErrorCode::kBadMagic, "not an SPL2 checkpoint");
    }
    throw Error(ErrorCode::kTruncated, "checkpoint header is short");
  }
  if (std::memcmp(bytes.data(), kSplatMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an SPL2 checkpoint");
  }
  const uint32_t version = get_u32(bytes.data() + 4);
  if (version != kSplatFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint version " + std::to_string(version));
  }
  const uint32_t n = get_u32(bytes.data() + 8);
  const uint32_t floats = get_u32(bytes.data() + 12);
  if (floats != kFloatsPerRecord) {
    throw Error(ErrorCode::kVersionMismatch, "unexpected record width");
  }
  const size_t expected = kSplatHeaderBytes + static_cast<size_t>(n) * floats * 4;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::kTruncated, "checkpoint records are short");
  }
  SplatSet out;
  out.splats.resize(n);
  const uint8_t* p = bytes.data() + kSplatHeaderBytes;
  for (uint32_t i = 0; i < n; ++i, p += floats * 4) {
    Splat& s = out.splats[i];
    for (int k = 0; k < kNumSplatParams; ++k) s.p[k] = get_f32(p + 4 * k);
    s.depth_key = get_f32(p + 4 * kNumSplatParams);
  }
  return out;
}

void save_splats(const SplatSet& splats, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_splats(splats));
}

void save_splats(const SplatSet& splats, const std::filesystem::path& path,
                 const nlohmann::json& meta) {
  save_splats(splats, path);
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  std::ofstream out(meta_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritable, meta_path.string());
  out << meta.dump(2) << "\n";
}

SplatSet load_splats(const std::filesystem::path& path) {
  return deserialize_splats(read_file_bytes(path));
}

SplatSet round_to_checkpoint_precision(SplatSet splats) {
  for (Splat& s : splats.splats) {
    for (double& v : s.p) v = static_cast<float>(v);
    s.depth_key = static_cast<float>(s.depth_key);
  }
  return splats;
}

}  // namespace splatperc
