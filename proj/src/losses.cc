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


#include "splatperc/losses.h"

#include <cmath>
#include <limits>
#include <numeric>

#include "splatperc/error.h"

namespace splatperc {
namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kCsFloor = 1e-6;
constexpr double kNuEps = 1e-6;
constexpr double kWdEps = 1e-8;
constexpr double kUnitNormEps = 1e-6;
constexpr double kOrigL1 = 0.8;
constexpr double kOrigSsim = 0.2;

Plane channel_plane(const ImageBuffer& img, int c) {
  Plane p(img.height, img.width);
  for (size_t i = 0; i < p.size(); ++i) p.data[i] = img.data[i * img.channels + c];
  return p;
}

void add_channel(ImageBuffer& img, int c, const Plane& p, double scale = 1.0) {
  for (size_t i = 0; i < p.size(); ++i) img.data[i * img.channels + c] += scale * p.data[i];
}

void axpy(ImageBuffer& y, double a, const ImageBuffer& x) {
  for (size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
}

double norm(const ImageBuffer& g) {
  double s = 0.0;
  for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

ImageBuffer zeros_like(const ImageBuffer& img) {
  return ImageBuffer(img.height, img.width, img.channels, 0.0);
}

// ---------------------------------------------------------------- SSIM

// Window statistics and the two SSIM factors on the "valid" grid.
struct SsimParts {
  Plane mux, muy, a1, a2, b1, b2;
  double ssim_mean = 0.0;
  double cs_mean = 0.0;
};

SsimParts ssim_parts(const Plane& x, const Plane& y, const Kernel1D& g) {
  SsimParts p;
  Plane xx(x.height, x.width), yy(x.height, x.width), xy(x.height, x.width);
  for (size_t i = 0; i < x.size(); ++i) {
    xx.data[i] = x.data[i] * x.data[i];
    yy.data[i] = y.data[i] * y.data[i];
    xy.data[i] = x.data[i] * y.data[i];
  }
  p.mux = correlate_valid(x, g);
  p.muy = correlate_valid(y, g);
  const Plane exx = correlate_valid(xx, g);
  const Plane eyy = correlate_valid(yy, g);
  const Plane exy = correlate_valid(xy, g);
  const size_t n = p.mux.size();
  p.a1 = p.a2 = p.b1 = p.b2 = Plane(p.mux.height, p.mux.width);
  double s_sum = 0.0, c_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double mx = p.mux.data[i], my = p.muy.data[i];
    const double vx = exx.data[i] - mx * mx;
    const double vy = eyy.data[i] - my * my;
    const double cxy = exy.data[i] - mx * my;
    p.a1.data[i] = 2 * mx * my + kSsimC1;
    p.a2.data[i] = 2 * cxy + kSsimC2;
    p.b1.data[i] = mx * mx + my * my + kSsimC1;
    p.b2.data[i] = vx + vy + kSsimC2;
    const double cs = p.a2.data[i] / p.b2.data[i];
    s_sum += p.a1.data[i] / p.b1.data[i] * cs;
    c_sum += cs;
  }
  p.ssim_mean = s_sum / n;
  p.cs_mean = c_sum / n;
  return p;
}

// Gradient w.r.t. y of d_ssim * ssim_mean + d_cs * cs_mean.
Plane ssim_parts_backward(const SsimParts& p, const Plane& x, const Plane& y,
                          const Kernel1D& g, double d_ssim, double d_cs) {
  const size_t n = p.mux.size();
  const double ws = d_ssim / n, wc = d_cs / n;
  Plane g_mu(p.mux.height, p.mux.width), g_m2(p.mux.height, p.mux.width),
      g_mxy(p.mux.height, p.mux.width);
  for (size_t i = 0; i < n; ++i) {
    const double a1 = p.a1.data[i], a2 = p.a2.data[i];
    const double b1 = p.b1.data[i], b2 = p.b2.data[i];
    const double s = a1 * a2 / (b1 * b2);
    const double cs = a2 / b2;
    const double da1 = ws * a2 / (b1 * b2);
    const double da2 = ws * a1 / (b1 * b2) + wc / b2;
    const double db1 = -ws * s / b1;
    const double db2 = -ws * s / b2 - wc * cs / b2;
    const double mx = p.mux.data[i], my = p.muy.data[i];
    g_mu.data[i] = 2 * mx * (da1 - da2) + 2 * my * (db1 - db2);
    g_m2.data[i] = db2;
    g_mxy.data[i] = 2 * da2;
  }
  Plane out = correlate_valid_adjoint(g_mu, g, x.height, x.width);
  const Plane a_m2 = correlate_valid_adjoint(g_m2, g, x.height, x.width);
  const Plane a_mxy = correlate_valid_adjoint(g_mxy, g, x.height, x.width);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] += 2 * y.data[i] * a_m2.data[i] + x.data[i] * a_mxy.data[i];
  return out;
}

Kernel1D ssim_kernel(const LossConfig& cfg) {
  return gaussian_kernel_1d(cfg.ssim_sigma, cfg.ssim_window / 2);
}

// ---------------------------------------------------------------- features

// Unit-normalized pointwise feature distance against a fixed target stack.
LossValue feat_pointwise_eval(const FeatureStack& ft, const ImageBuffer& x_hat,
                              const FilterBankSpec& bank) {
  const FeatureStack fh = extract(x_hat, bank);
  if (!fh.same_shape(ft)) {
    throw Error(ErrorCode::kShapeMismatch, "feature stacks differ in shape");
  }
  FeatureStack up = zero_features_like(fh);
  const size_t levels = fh.levels.size();
  double value = 0.0;
  for (size_t l = 0; l < levels; ++l) {
    const FeatureLevel& a = ft.levels[l];
    const FeatureLevel& b = fh.levels[l];
    const size_t nc = b.channels.size();
    const size_t n = b.channels[0].size();
    const double w = 1.0 / (levels * nc * n);
    std::vector<double> va(nc), vb(nc), gb(nc);
    double level_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double sa = kUnitNormEps * kUnitNormEps, sb = sa;
      for (size_t c = 0; c < nc; ++c) {
        va[c] = a.channels[c].data[i];
        vb[c] = b.channels[c].data[i];
        sa += va[c] * va[c];
        sb += vb[c] * vb[c];
      }
      const double na = std::sqrt(sa), nb = std::sqrt(sb);
      double dot = 0.0;
      for (size_t c = 0; c < nc; ++c) {
        const double diff = vb[c] / nb - va[c] / na;
        level_sum += diff * diff;
        gb[c] = 2 * w * diff;
        dot += vb[c] * gb[c];
      }
      for (size_t c = 0; c < nc; ++c)
        up.levels[l].channels[c].data[i] = gb[c] / nb - vb[c] * dot / (sb * nb);
    }
    value += level_sum * w;
  }
  return {value, extract_backward(x_hat, bank, up), std::nullopt};
}

// ---------------------------------------------------------------- WD

// Gaussian pooling at one pyramid level: identity, constant width or map.
struct LevelPool {
  bool identity = true;
  Kernel1D k;
  const Plane* map = nullptr;

  Plane apply(const Plane& in) const {
    if (map) return pool_variable(in, *map);
    if (identity) return in;
    return correlate_separable(in, k, k);
  }
  Plane adjoint(const Plane& g) const {
    if (map) return pool_variable_adjoint(g, *map);
    if (identity) return g;
    return correlate_separable_adjoint(g, k, k);
  }
};

std::vector<LevelPool> make_pools(int levels, const SigmaSpec& sigma,
                                  const std::vector<Plane>* maps) {
  std::vector<LevelPool> pools(levels);
  for (int l = 0; l < levels; ++l) {
    if (sigma.map) {
      pools[l].identity = false;
      pools[l].map = &(*maps)[l];
    } else {
      const double s = sigma.sigma / std::ldexp(1.0, l);
      pools[l].identity = !(s > 0.0);
      if (!pools[l].identity) pools[l].k = gaussian_kernel_1d(s);
    }
  }
  return pools;
}

double nu_of(double var) {
  return var > 0.0 ? var / (std::sqrt(var + kNuEps * kNuEps) + kNuEps) : 0.0;
}

PooledLevel pool_level(const FeatureLevel& fl, const LevelPool& pool) {
  PooledLevel out;
  for (const Plane& f : fl.channels) {
    if (pool.identity && !pool.map) {
      out.mu.push_back(f);
      out.nu.emplace_back(f.height, f.width, 0.0);
      continue;
    }
    Plane sq = f;
    for (double& v : sq.data) v *= v;
    Plane mu = pool.apply(f);
    const Plane m2 = pool.apply(sq);
    Plane nu(f.height, f.width);
    for (size_t i = 0; i < nu.size(); ++i)
      nu.data[i] = nu_of(m2.data[i] - mu.data[i] * mu.data[i]);
    out.mu.push_back(std::move(mu));
    out.nu.push_back(std::move(nu));
  }
  return out;
}

void check_sigma_map(const Plane& map, int height, int width) {
  if (map.height != height || map.width != width) {
    throw Error(ErrorCode::kShapeMismatch,
                "sigma map resolution does not match the image");
  }
  for (double v : map.data) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sigma map values must be finite and >= 0");
    }
  }
}

class WdEval {
 public:
  WdEval(const ImageBuffer& x, const LossConfig& cfg)
      : bank_(cfg.bank), scale_(cfg.wd_scale) {
    if (!(cfg.sigma >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "sigma must be >= 0");
    }
    SigmaSpec spec{cfg.sigma, nullptr};
    if (cfg.sigma_map) {
      check_sigma_map(*cfg.sigma_map, x.height, x.width);
      maps_ = sigma_pyramid(*cfg.sigma_map, bank_.num_levels);
      spec.map = &*cfg.sigma_map;
    }
    pools_ = make_pools(bank_.num_levels, spec, &maps_);
    const FeatureStack fx = extract(x, bank_);
    for (size_t l = 0; l < fx.levels.size(); ++l)
      target_.levels.push_back(pool_level(fx.levels[l], pools_[l]));
  }

  LossValue operator()(const ImageBuffer& x_hat) const {
    const FeatureStack fh = extract(x_hat, bank_);
    if (fh.levels.size() != target_.levels.size() ||
        fh.levels[0].channels.size() != target_.levels[0].mu.size() ||
        !fh.levels[0].channels[0].same_shape(target_.levels[0].mu[0])) {
      throw Error(ErrorCode::kShapeMismatch, "image shapes differ");
    }
    FeatureStack up = zero_features_like(fh);
    const size_t levels = fh.levels.size();
    double value = 0.0;
    for (size_t l = 0; l < levels; ++l) {
      const FeatureLevel& fl = fh.levels[l];
      const LevelPool& pool = pools_[l];
      const bool pointwise = pool.identity && !pool.map;
      const size_t nc = fl.channels.size();
      const size_t n = fl.channels[0].size();
      const double w = scale_ / (levels * nc * n);
      double level_sum = 0.0;
      for (size_t c = 0; c < nc; ++c) {
        const Plane& f = fl.channels[c];
        const Plane& mu_t = target_.levels[l].mu[c];
        const Plane& nu_t = target_.levels[l].nu[c];
        Plane& g = up.levels[l].channels[c];
        if (pointwise) {
          for (size_t i = 0; i < n; ++i) {
            const double dm = f.data[i] - mu_t.data[i];
            const double dn = -nu_t.data[i];
            const double r = std::sqrt(dm * dm + dn * dn + kWdEps * kWdEps);
            level_sum += r - kWdEps;
            g.data[i] = w * dm / r;
          }
          continue;
        }
        Plane sq = f;
        for (double& v : sq.data) v *= v;
        const Plane mu = pool.apply(f);
        const Plane m2 = pool.apply(sq);
        Plane g_mu(f.height, f.width), g_m2(f.height, f.width);
        for (size_t i = 0; i < n; ++i) {
          const double var = m2.data[i] - mu.data[i] * mu.data[i];
          const double dm = mu.data[i] - mu_t.data[i];
          const double dn = nu_of(var) - nu_t.data[i];
          const double r = std::sqrt(dm * dm + dn * dn + kWdEps * kWdEps);
          level_sum += r - kWdEps;
          const double gnu = w * dn / r;
          const double dnu_dvar =
              var > 0.0 ? 0.5 / std::sqrt(var + kNuEps * kNuEps) : 0.0;
          g_m2.data[i] = gnu * dnu_dvar;
          g_mu.data[i] = w * dm / r - 2.0 * mu.data[i] * g_m2.data[i];
        }
        g = pool.adjoint(g_mu);
        const Plane a_m2 = pool.adjoint(g_m2);
        for (size_t i = 0; i < n; ++i) g.data[i] += 2.0 * f.data[i] * a_m2.data[i];
      }
      value += level_sum * w;
    }
    return {value, extract_backward(x_hat, bank_, up), std::nullopt};
  }

 private:
  FilterBankSpec bank_;
  double scale_;
  std::vector<Plane> maps_;
  std::vector<LevelPool> pools_;
  PooledStats target_;
};

LossValue combine_original(const LossValue& l1, const LossValue& ssim) {
  LossValue out{kOrigL1 * l1.value + kOrigSsim * ssim.value, zeros_like(l1.grad),
                std::nullopt};
  axpy(out.grad, kOrigL1, l1.grad);
  axpy(out.grad, kOrigSsim, ssim.grad);
  return out;
}

LossValue combine_wd_r(const LossValue& wd, const LossValue& orig,
                       const LossConfig& cfg) {
  LossValue out{cfg.gamma * (wd.value + cfg.beta * orig.value),
                zeros_like(wd.grad), std::nullopt};
  axpy(out.grad, cfg.gamma, wd.grad);
  axpy(out.grad, cfg.gamma * cfg.beta, orig.grad);
  const double denom = cfg.beta * norm(orig.grad);
  out.grad_ratio = denom > 0.0 ? norm(wd.grad) / denom
                               : std::numeric_limits<double>::infinity();
  return out;
}

LossValue combine_composite(const ImageBuffer& x, const ImageBuffer& x_hat,
                            const LossConfig& cfg, const LossValue& feat) {
  const LossValue l1 = loss_l1(x, x_hat);
  const LossValue l2 = loss_l2(x, x_hat);
  const LossValue ms = loss_msssim(x, x_hat, cfg);
  const auto& w = cfg.omega;
  LossValue out{w[0] * l1.value + w[1] * l2.value + w[2] * ms.value +
                    w[3] * feat.value,
                zeros_like(x_hat), std::nullopt};
  axpy(out.grad, w[0], l1.grad);
  axpy(out.grad, w[1], l2.grad);
  axpy(out.grad, w[2], ms.grad);
  axpy(out.grad, w[3], feat.grad);
  return out;
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kOriginal: return "original";
    case LossKind::kComposite: return "composite";
    case LossKind::kWd: return "wd";
    case LossKind::kWdR: return "wd_r";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind k : {LossKind::kOriginal, LossKind::kComposite, LossKind::kWd,
                     LossKind::kWdR})
    if (name == loss_kind_name(k)) return k;
  throw Error(ErrorCode::kInvalidArgument, "unknown loss kind: " + name);
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"kind", loss_kind_name(c.kind)},
                     {"gamma", c.gamma},
                     {"omega", c.omega},
                     {"beta", c.beta},
                     {"sigma", c.sigma},
                     {"wd_scale", c.wd_scale},
                     {"sigma_map_path", c.sigma_map_path},
                     {"sigma_map_scale", c.sigma_map_scale},
                     {"ssim_window", c.ssim_window},
                     {"ssim_sigma", c.ssim_sigma},
                     {"msssim_weights", c.msssim_weights},
                     {"msssim_max_scales", c.msssim_max_scales},
                     {"bank", c.bank}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  const LossConfig d;
  c.kind = parse_loss_kind(j.value("kind", std::string(loss_kind_name(d.kind))));
  c.gamma = j.value("gamma", d.gamma);
  c.omega = j.value("omega", d.omega);
  c.beta = j.value("beta", d.beta);
  c.sigma = j.value("sigma", d.sigma);
  c.wd_scale = j.value("wd_scale", d.wd_scale);
  c.sigma_map_path = j.value("sigma_map_path", d.sigma_map_path);
  c.sigma_map_scale = j.value("sigma_map_scale", d.sigma_map_scale);
  c.ssim_window = j.value("ssim_window", d.ssim_window);
  c.ssim_sigma = j.value("ssim_sigma", d.ssim_sigma);
  c.msssim_weights = j.value("msssim_weights", d.msssim_weights);
  c.msssim_max_scales = j.value("msssim_max_scales", d.msssim_max_scales);
  c.bank = j.value("bank", d.bank);
}

void validate(const LossConfig& c) {
  auto bad = [](const std::string& m) {
    throw Error(ErrorCode::kInvalidArgument, m);
  };
  if (!(c.gamma > 0.0) || !std::isfinite(c.gamma)) bad("gamma must be > 0");
  for (double w : c.omega)
    if (!(w >= 0.0)) bad("composite weights must be >= 0");
  if (!(c.beta >= 0.0)) bad("beta must be >= 0");
  if (!(c.sigma >= 0.0) || !std::isfinite(c.sigma)) bad("sigma must be >= 0");
  if (!(c.wd_scale > 0.0) || !std::isfinite(c.wd_scale)) bad("wd_scale must be > 0");
  if (c.ssim_window < 3 || c.ssim_window % 2 == 0) bad("ssim window must be odd and >= 3");
  if (!(c.ssim_sigma > 0.0)) bad("ssim sigma must be > 0");
  double wsum = 0.0;
  for (double w : c.msssim_weights) {
    if (!(w >= 0.0)) bad("ms-ssim weights must be >= 0");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-3) bad("ms-ssim weights must sum to 1");
  if (c.msssim_max_scales < 1 || c.msssim_max_scales > 5) bad("ms-ssim scales must be 1..5");
  if (c.sigma_map)
    for (double v : c.sigma_map->data)
      if (!std::isfinite(v) || v < 0.0) bad("sigma map values must be finite and >= 0");
  validate(c.bank);
}

LossValue loss_l1(const ImageBuffer& x, const ImageBuffer& x_hat) {
  require_same_shape(x, x_hat, "loss_l1");
  const double n = static_cast<double>(x.size());
  LossValue out{0.0, zeros_like(x_hat), std::nullopt};
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat.data[i] - x.data[i];
    s += std::abs(d);
    out.grad.data[i] = (d > 0) - (d < 0);
    out.grad.data[i] /= n;
  }
  out.value = s / n;
  return out;
}

LossValue loss_l2(const ImageBuffer& x, const ImageBuffer& x_hat) {
  require_same_shape(x, x_hat, "loss_l2");
  const double n = static_cast<double>(x.size());
  LossValue out{0.0, zeros_like(x_hat), std::nullopt};
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat.data[i] - x.data[i];
    s += d * d;
    out.grad.data[i] = 2.0 * d / n;
  }
  out.value = s / n;
  return out;
}

LossValue loss_ssim(const ImageBuffer& x, const ImageBuffer& x_hat,
                    const LossConfig& cfg) {
  require_same_shape(x, x_hat, "loss_ssim");
  if (x.height < cfg.ssim_window || x.width < cfg.ssim_window) {
    throw Error(ErrorCode::kInvalidArgument, "image smaller than the SSIM window");
  }
  const Kernel1D g = ssim_kernel(cfg);
  LossValue out{1.0, zeros_like(x_hat), std::nullopt};
  const double wc = 1.0 / x.channels;
  for (int c = 0; c < x.channels; ++c) {
    const Plane px = channel_plane(x, c), py = channel_plane(x_hat, c);
    const SsimParts p = ssim_parts(px, py, g);
    out.value -= wc * p.ssim_mean;
    add_channel(out.grad, c, ssim_parts_backward(p, px, py, g, -wc, 0.0));
  }
  return out;
}

int msssim_scale_count(int height, int width, const LossConfig& cfg) {
  int m = 0;
  int h = height, w = width;
  while (m < cfg.msssim_max_scales && h >= cfg.ssim_window && w >= cfg.ssim_window) {
    ++m;
    h /= 2;
    w /= 2;
  }
  return m;
}

LossValue loss_msssim(const ImageBuffer& x, const ImageBuffer& x_hat,
                      const LossConfig& cfg, int scales) {
  require_same_shape(x, x_hat, "loss_msssim");
  const int avail = msssim_scale_count(x.height, x.width, cfg);
  if (avail == 0) {
    throw Error(ErrorCode::kInvalidArgument, "image too small for MS-SSIM");
  }
  const int m = scales <= 0 ? avail : scales;
  if (m > avail) {
    throw Error(ErrorCode::kInvalidArgument, "image too small for the requested scales");
  }
  std::vector<double> w(cfg.msssim_weights.begin(), cfg.msssim_weights.begin() + m);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= wsum;

  const Kernel1D g = ssim_kernel(cfg);
  LossValue out{1.0, zeros_like(x_hat), std::nullopt};
  const double wc = 1.0 / x.channels;
  for (int c = 0; c < x.channels; ++c) {
    std::vector<Plane> xs{channel_plane(x, c)}, ys{channel_plane(x_hat, c)};
    for (int j = 1; j < m; ++j) {
      xs.push_back(downsample2x(xs.back()));
      ys.push_back(downsample2x(ys.back()));
    }
    std::vector<SsimParts> parts;
    std::vector<double> terms;
    double prod = 1.0;
    for (int j = 0; j < m; ++j) {
      parts.push_back(ssim_parts(xs[j], ys[j], g));
      const double t = j + 1 < m ? parts[j].cs_mean : parts[j].ssim_mean;
      terms.push_back(t);
      prod *= std::pow(std::max(t, kCsFloor), w[j]);
    }
    out.value -= wc * prod;
    Plane carry;
    for (int j = m - 1; j >= 0; --j) {
      const double dterm = terms[j] > kCsFloor ? -wc * prod * w[j] / terms[j] : 0.0;
      const bool last = j + 1 == m;
      Plane gj = ssim_parts_backward(parts[j], xs[j], ys[j], g, last ? dterm : 0.0,
                                     last ? 0.0 : dterm);
      if (!carry.data.empty()) {
        const Plane up = downsample2x_adjoint(carry, xs[j].height, xs[j].width);
        for (size_t i = 0; i < gj.size(); ++i) gj.data[i] += up.data[i];
      }
      carry = std::move(gj);
    }
    add_channel(out.grad, c, carry);
  }
  return out;
}

LossValue loss_feat_pointwise(const ImageBuffer& x, const ImageBuffer& x_hat,
                              const FilterBankSpec& bank) {
  require_same_shape(x, x_hat, "loss_feat_pointwise");
  return feat_pointwise_eval(extract(x, bank), x_hat, bank);
}

double feature_pointwise_distance(const FeatureStack& a, const FeatureStack& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch, "feature stacks differ in shape");
  }
  double value = 0.0;
  for (size_t l = 0; l < a.levels.size(); ++l) {
    const FeatureLevel& fa = a.levels[l];
    const FeatureLevel& fb = b.levels[l];
    const size_t nc = fa.channels.size(), n = fa.channels[0].size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double sa = kUnitNormEps * kUnitNormEps, sb = sa;
      for (size_t c = 0; c < nc; ++c) {
        sa += fa.channels[c].data[i] * fa.channels[c].data[i];
        sb += fb.channels[c].data[i] * fb.channels[c].data[i];
      }
      const double na = std::sqrt(sa), nb = std::sqrt(sb);
      for (size_t c = 0; c < nc; ++c) {
        const double d = fb.channels[c].data[i] / nb - fa.channels[c].data[i] / na;
        s += d * d;
      }
    }
    value += s / (nc * n);
  }
  return value / a.levels.size();
}

std::vector<Plane> sigma_pyramid(const Plane& map, int levels) {
  std::vector<Plane> out{map};
  for (double& v : out[0].data) v = std::max(v, 0.0);
  Plane avg = map;
  for (int l = 1; l < levels; ++l) {
    avg = downsample2x(avg);
    Plane s = avg;
    const double scale = std::ldexp(1.0, -l);
    for (double& v : s.data) v = std::max(v * scale, 0.0);
    out.push_back(std::move(s));
  }
  return out;
}

PooledStats pool_stats(const FeatureStack& f, const SigmaSpec& sigma) {
  if (!(sigma.sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be >= 0");
  }
  std::vector<Plane> maps;
  if (sigma.map) {
    check_sigma_map(*sigma.map, f.levels[0].height, f.levels[0].width);
    maps = sigma_pyramid(*sigma.map, static_cast<int>(f.levels.size()));
  }
  const std::vector<LevelPool> pools =
      make_pools(static_cast<int>(f.levels.size()), sigma, &maps);
  PooledStats out;
  for (size_t l = 0; l < f.levels.size(); ++l)
    out.levels.push_back(pool_level(f.levels[l], pools[l]));
  return out;
}

LossValue loss_wd(const ImageBuffer& x, const ImageBuffer& x_hat,
                  const LossConfig& cfg) {
  require_same_shape(x, x_hat, "loss_wd");
  return WdEval(x, cfg)(x_hat);
}

LossValue loss_original(const ImageBuffer& x, const ImageBuffer& x_hat,
                        const LossConfig& cfg) {
  return combine_original(loss_l1(x, x_hat), loss_ssim(x, x_hat, cfg));
}

LossValue loss_composite(const ImageBuffer& x, const ImageBuffer& x_hat,
                         const LossConfig& cfg) {
  require_same_shape(x, x_hat, "loss_composite");
  return combine_composite(x, x_hat, cfg, loss_feat_pointwise(x, x_hat, cfg.bank));
}

LossValue loss_wd_r(const ImageBuffer& x, const ImageBuffer& x_hat,
                    const LossConfig& cfg) {
  return combine_wd_r(loss_wd(x, x_hat, cfg), loss_original(x, x_hat, cfg), cfg);
}

double ssim_index(const ImageBuffer& x, const ImageBuffer& x_hat) {
  return 1.0 - loss_ssim(x, x_hat).value;
}

double wd_metric(const ImageBuffer& x, const ImageBuffer& x_hat, double sigma) {
  LossConfig cfg;
  cfg.sigma = sigma;
  cfg.wd_scale = 1.0;
  return loss_wd(x, x_hat, cfg).value;
}

struct Objective::Cache {
  std::optional<WdEval> wd;
  std::optional<FeatureStack> features;
};

Objective::Objective(const ImageBuffer& target, const LossConfig& cfg)
    : target_(target), cfg_(cfg), cache_(std::make_unique<Cache>()) {
  validate(cfg_);
  if (cfg_.kind == LossKind::kWd || cfg_.kind == LossKind::kWdR)
    cache_->wd.emplace(target_, cfg_);
  if (cfg_.kind == LossKind::kComposite) cache_->features = extract(target_, cfg_.bank);
}

Objective::~Objective() = default;
Objective::Objective(Objective&&) noexcept = default;
Objective& Objective::operator=(Objective&&) noexcept = default;

LossValue Objective::evaluate(const ImageBuffer& x_hat) const {
  require_same_shape(target_, x_hat, "objective");
  LossValue out;
  switch (cfg_.kind) {
    case LossKind::kOriginal:
      out = loss_original(target_, x_hat, cfg_);
      break;
    case LossKind::kComposite:
      out = combine_composite(target_, x_hat, cfg_,
                              feat_pointwise_eval(*cache_->features, x_hat, cfg_.bank));
      break;
    case LossKind::kWd:
      out = (*cache_->wd)(x_hat);
      break;
    case LossKind::kWdR:
      return combine_wd_r((*cache_->wd)(x_hat), loss_original(target_, x_hat, cfg_),
                          cfg_);
  }
  out.value *= cfg_.gamma;
  for (double& v : out.grad.data) v *= cfg_.gamma;
  return out;
}

}  // namespace splatperc
