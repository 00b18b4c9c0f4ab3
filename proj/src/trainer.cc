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


#include "splatperc/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "splatperc/error.h"

namespace splatperc {
namespace {

// Initial colors stay this far from 0 and 1, where the logistic saturates.
constexpr double kInitColorMargin = 0.05;

double canonical(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double next_key(double key) {
  return std::nextafter(static_cast<float>(key), std::numeric_limits<float>::infinity());
}

struct Adam {
  std::vector<ParamVector> m, v;
  std::vector<int> t;

  void resize(size_t n) {
    m.assign(n, ParamVector{});
    v.assign(n, ParamVector{});
    t.assign(n, 0);
  }

  void remap(const std::vector<int>& origin) {
    Adam next;
    next.resize(origin.size());
    for (size_t i = 0; i < origin.size(); ++i) {
      if (origin[i] < 0) continue;
      next.m[i] = m[origin[i]];
      next.v[i] = v[origin[i]];
      next.t[i] = t[origin[i]];
    }
    *this = std::move(next);
  }
};

bool all_finite(const ImageBuffer& g) {
  for (double v : g.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

double image_diagonal(int width, int height) {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

int TrainConfig::warmup() const {
  if (warmup_iterations >= 0) return std::min(warmup_iterations, iterations);
  return static_cast<int>(std::lround(warmup_fraction * iterations));
}

int TrainConfig::densify_stop() const {
  return static_cast<int>(std::lround(densify_stop_fraction * iterations));
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"iterations", c.iterations},
                     {"warmup_iterations", c.warmup_iterations},
                     {"warmup_fraction", c.warmup_fraction},
                     {"lr", c.lr},
                     {"position_lr_final_ratio", c.position_lr_final_ratio},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"densify_interval", c.densify_interval},
                     {"densify_grad_threshold", c.densify_grad_threshold},
                     {"split_scale_threshold", c.split_scale_threshold},
                     {"split_factor", c.split_factor},
                     {"prune_opacity_threshold", c.prune_opacity_threshold},
                     {"densify_stop_fraction", c.densify_stop_fraction},
                     {"max_splats", c.max_splats},
                     {"init_count", c.init_count},
                     {"background", c.background}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.warmup_iterations = j.value("warmup_iterations", d.warmup_iterations);
  c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
  c.lr = j.value("lr", d.lr);
  c.position_lr_final_ratio = j.value("position_lr_final_ratio", d.position_lr_final_ratio);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.densify_interval = j.value("densify_interval", d.densify_interval);
  c.densify_grad_threshold = j.value("densify_grad_threshold", d.densify_grad_threshold);
  c.split_scale_threshold = j.value("split_scale_threshold", d.split_scale_threshold);
  c.split_factor = j.value("split_factor", d.split_factor);
  c.prune_opacity_threshold = j.value("prune_opacity_threshold", d.prune_opacity_threshold);
  c.densify_stop_fraction = j.value("densify_stop_fraction", d.densify_stop_fraction);
  c.max_splats = j.value("max_splats", d.max_splats);
  c.init_count = j.value("init_count", d.init_count);
  c.background = j.value("background", d.background);
}

void validate(const TrainConfig& c) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (c.iterations < 0) bad("iterations must be >= 0");
  if (c.warmup_iterations > c.iterations) bad("warm-up longer than training");
  if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction <= 1.0)) bad("warmup_fraction must be in [0, 1]");
  for (double lr : c.lr)
    if (!(lr > 0.0)) bad("learning rates must be > 0");
  if (!(c.position_lr_final_ratio > 0.0)) bad("position_lr_final_ratio must be > 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 &&
        c.adam_beta2 < 1.0 && c.adam_eps > 0.0)) {
    bad("invalid Adam moments");
  }
  if (c.densify_interval <= 0) bad("densify_interval must be > 0");
  if (!(c.densify_grad_threshold > 0.0)) bad("densify_grad_threshold must be > 0");
  if (!(c.split_scale_threshold > 0.0)) bad("split_scale_threshold must be > 0");
  if (!(c.split_factor > 0.0)) bad("split_factor must be > 0");
  if (!(c.prune_opacity_threshold > 0.0)) bad("prune_opacity_threshold must be > 0");
  if (!(c.densify_stop_fraction > 0.0 && c.densify_stop_fraction <= 1.0)) {
    bad("densify_stop_fraction must be in (0, 1]");
  }
  if (c.max_splats <= 0) bad("max_splats must be > 0");
  if (c.init_count < 1 || c.init_count > c.max_splats) bad("init_count must be in [1, max_splats]");
  for (double b : c.background)
    if (!(b >= 0.0 && b <= 1.0)) bad("background must be in [0, 1]");
}

void DensifyStats::reset(size_t n) {
  grad_sum.assign(n, 0.0);
  count.assign(n, 0);
}

DensifyResult densify_and_prune(const SplatSet& splats, const DensifyStats& stats,
                                const TrainConfig& cfg, double diagonal) {
  const size_t n = splats.size();
  if (stats.grad_sum.size() != n || stats.count.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, "densify statistics do not match the splats");
  }
  std::vector<uint8_t> keep(n);
  std::vector<int> candidates;
  int kept = 0;
  for (size_t i = 0; i < n; ++i) {
    keep[i] = splats.splats[i].opacity() >= cfg.prune_opacity_threshold;
    kept += keep[i];
    if (keep[i] && stats.mean(i) > cfg.densify_grad_threshold)
      candidates.push_back(static_cast<int>(i));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return stats.mean(a) > stats.mean(b); });
  const int room = std::max(0, cfg.max_splats - kept);
  if (static_cast<int>(candidates.size()) > room) candidates.resize(room);
  std::sort(candidates.begin(), candidates.end());

  std::vector<uint8_t> split(n, 0), clone(n, 0);
  const double split_above = cfg.split_scale_threshold * diagonal;
  for (int i : candidates) {
    const Splat& s = splats.splats[i];
    (std::max(s.scale1(), s.scale2()) > split_above ? split : clone)[i] = 1;
  }

  DensifyResult out;
  out.pruned = static_cast<int>(n) - kept;
  for (size_t i = 0; i < n; ++i) {
    if (!keep[i] || split[i]) continue;
    out.splats.splats.push_back(splats.splats[i]);
    out.origin.push_back(static_cast<int>(i));
  }
  const double shrink = std::log(cfg.split_factor);
  for (int i : candidates) {
    const Splat& s = splats.splats[i];
    if (clone[i]) {
      Splat c = s;
      c.depth_key = next_key(s.depth_key);
      out.splats.splats.push_back(c);
      out.origin.push_back(-1);
      ++out.clones;
      continue;
    }
    const bool first = s.scale1() >= s.scale2();
    const double major = first ? s.scale1() : s.scale2();
    const double th = s.theta() + (first ? 0.0 : M_PI_2);
    const double ox = 0.5 * major * std::cos(th), oy = 0.5 * major * std::sin(th);
    for (int side : {-1, 1}) {
      Splat c = s;
      c.p[kPosX] += side * ox;
      c.p[kPosY] += side * oy;
      c.p[kLogScale1] -= shrink;
      c.p[kLogScale2] -= shrink;
      if (side > 0) c.depth_key = next_key(s.depth_key);
      out.splats.splats.push_back(c);
      out.origin.push_back(-1);
    }
    ++out.splits;
  }
  return out;
}

SplatSet init_splats(const ImageBuffer& target, int count, uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "splat count must be >= 1");
  if (target.empty()) throw Error(ErrorCode::kEmptyInput, "empty target image");
  std::mt19937_64 rng(seed);
  const double scale =
      image_diagonal(target.width, target.height) / std::sqrt(static_cast<double>(count));
  SplatSet out;
  out.splats.resize(count);
  for (Splat& s : out.splats) {
    const double x = canonical(rng) * target.width;
    const double y = canonical(rng) * target.height;
    s.p[kPosX] = x;
    s.p[kPosY] = y;
    s.p[kLogScale1] = s.p[kLogScale2] = std::log(scale);
    s.p[kRotation] = 0.0;
    const int px = std::min(static_cast<int>(x), target.width - 1);
    const int py = std::min(static_cast<int>(y), target.height - 1);
    for (int c = 0; c < 3; ++c) {
      const double v = target.at(py, px, target.channels == 3 ? c : 0);
      s.p[kColorR + c] = logit(std::clamp(v, kInitColorMargin, 1.0 - kInitColorMargin));
    }
    s.p[kOpacity] = 0.0;
    s.depth_key = static_cast<float>(canonical(rng));
  }
  return out;
}

void fill_final_metrics(const ImageBuffer& target, const SplatSet& splats,
                        const Color& background, TrainReport& r) {
  const ImageBuffer img = render(splats, target.width, target.height, background).image;
  const ImageBuffer t = to_rgb(target);
  r.final_psnr = psnr(t, img);
  r.final_ssim = ssim_index(t, img);
  r.final_wd0 = wd_metric(t, img, 0.0);
  r.final_wd4 = wd_metric(t, img, 4.0);
  r.final_count = static_cast<int>(splats.size());
}

FitResult fit(const ImageBuffer& target_in, const SplatSet& init, const LossConfig& loss,
              const TrainConfig& cfg, uint64_t seed, const TrainHooks* hooks) {
  validate(cfg);
  validate(loss);
  validate_splats(init);
  const auto start = std::chrono::steady_clock::now();
  const ImageBuffer target = to_rgb(target_in);
  const int w = target.width, h = target.height;
  const double diag = image_diagonal(w, h);

  LossConfig warm_cfg = loss;
  warm_cfg.kind = LossKind::kOriginal;
  warm_cfg.gamma = 1.0;
  const int warmup = cfg.warmup();
  const int stop = cfg.densify_stop();
  std::optional<Objective> warm_obj, main_obj;
  if (warmup > 0) warm_obj.emplace(target, warm_cfg);
  if (cfg.iterations > warmup) main_obj.emplace(target, loss);

  FitResult res;
  res.splats = init;
  TrainReport& rep = res.report;
  rep.loss_name = loss_kind_name(loss.kind);
  rep.gamma = loss.gamma;
  rep.iterations = cfg.iterations;
  rep.warmup_iterations = warmup;
  rep.seed = seed;

  SplatSet& splats = res.splats;
  Adam adam;
  adam.resize(splats.size());
  DensifyStats stats;
  stats.reset(splats.size());
  double ratio_sum = 0.0;
  int ratio_n = 0;
  const double log_decay = std::log(cfg.position_lr_final_ratio);

  for (int it = 0; it < cfg.iterations; ++it) {
    const bool warm = it < warmup;
    const Objective& obj = warm ? *warm_obj : *main_obj;
    const SplatSet rendered =
        hooks && hooks->perturb ? hooks->perturb(splats, it) : SplatSet{};
    const SplatSet& rp = hooks && hooks->perturb ? rendered : splats;
    const RenderOutput ro = render(rp, w, h, cfg.background);
    const LossValue lv = obj.evaluate(ro.image);
    if (!std::isfinite(lv.value) || !all_finite(lv.grad)) {
      std::ostringstream msg;
      msg << "non-finite objective at iteration " << it << " with " << splats.size()
          << " splats (last loss "
          << (rep.loss.empty() ? std::numeric_limits<double>::quiet_NaN() : rep.loss.back())
          << ")";
      throw DivergenceError(msg.str(), splats, it);
    }
    SplatGradients g = render_backward(rp, w, h, cfg.background, lv.grad);
    if (lv.grad_ratio) {
      ratio_sum += *lv.grad_ratio;
      ++ratio_n;
    }

    const bool densify_window = !warm && it < stop;
    if (densify_window) {
      for (size_t i = 0; i < splats.size(); ++i) {
        if (!g.visible[i]) continue;
        stats.grad_sum[i] += g.position_grad_norm[i] * diag;
        ++stats.count[i];
      }
    }
    double total = lv.value;
    if (hooks && hooks->extra) total += hooks->extra(splats, rp, g.d, it);
    if (!std::isfinite(total)) {
      throw DivergenceError("non-finite extra objective at iteration " + std::to_string(it),
                            splats, it);
    }

    const double frac = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    std::array<double, kNumParamGroups> lr = cfg.lr;
    lr[0] *= diag * std::exp(log_decay * frac);
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    for (size_t i = 0; i < splats.size(); ++i) {
      const int t = ++adam.t[i];
      const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
      for (int k = 0; k < kNumSplatParams; ++k) {
        const double gk = g.d[i][k];
        double& m = adam.m[i][k];
        double& v = adam.v[i][k];
        m = b1 * m + (1.0 - b1) * gk;
        v = b2 * v + (1.0 - b2) * gk * gk;
        const double step = (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
        splats.splats[i].p[k] -= lr[static_cast<int>(group_of(k))] * step;
      }
    }
    rep.loss.push_back(total);

    if (densify_window && (it + 1 - warmup) % cfg.densify_interval == 0 && it + 1 < stop) {
      DensifyResult d = densify_and_prune(splats, stats, cfg, diag);
      adam.remap(d.origin);
      splats = std::move(d.splats);
      stats.reset(splats.size());
      rep.densify_events.push_back(
          {it, d.clones, d.splits, d.pruned, static_cast<int>(splats.size())});
    }
    rep.splat_count.push_back(static_cast<int>(splats.size()));
  }
  rep.mean_grad_ratio = ratio_n ? ratio_sum / ratio_n : 0.0;
  fill_final_metrics(target, splats, cfg.background, rep);
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

FitResult fit(const ImageBuffer& target, const LossConfig& loss, const TrainConfig& cfg,
              uint64_t seed, const TrainHooks* hooks) {
  validate(cfg);
  return fit(target, init_splats(target, cfg.init_count, seed), loss, cfg, seed, hooks);
}

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const DensifyEvent& e : r.densify_events)
    events.push_back({{"iteration", e.iteration},
                      {"clones", e.clones},
                      {"splits", e.splits},
                      {"pruned", e.pruned},
                      {"count_after", e.count_after}});
  return {{"loss_name", r.loss_name},
          {"gamma", r.gamma},
          {"iterations", r.iterations},
          {"warmup_iterations", r.warmup_iterations},
          {"seed", r.seed},
          {"loss", r.loss},
          {"splat_count", r.splat_count},
          {"densify_events", events},
          {"mean_grad_ratio", r.mean_grad_ratio},
          {"final",
           {{"psnr", std::isinf(r.final_psnr) ? nlohmann::json("inf") : nlohmann::json(r.final_psnr)},
            {"ssim", r.final_ssim},
            {"wd_sigma0", r.final_wd0},
            {"wd_sigma4", r.final_wd4},
            {"splat_count", r.final_count}}}};
}

std::string report_to_csv(const TrainReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,loss,splat_count\n";
  for (size_t i = 0; i < r.loss.size(); ++i)
    out << i << ',' << r.loss[i] << ',' << r.splat_count[i] << '\n';
  return out.str();
}

}  // namespace splatperc
