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


#include "splatperc/selftest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "splatperc/analysis.h"
#include "splatperc/elo.h"
#include "splatperc/features.h"
#include "splatperc/gradcheck.h"
#include "splatperc/losses.h"
#include "splatperc/range_coder.h"
#include "splatperc/ratecodec.h"
#include "splatperc/splat.h"

namespace splatperc {

namespace {

ImageBuffer random_image(int size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  ImageBuffer img(size, size, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Perturbed copy kept at least 0.01 away from the target so L1 is smooth.
ImageBuffer nearby(const ImageBuffer& x, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  ImageBuffer y = x;
  for (size_t i = 0; i < y.size(); ++i) {
    y.data[i] = std::clamp(x.data[i] + u(rng), 0.0, 1.0);
    if (std::abs(y.data[i] - x.data[i]) < 0.01) y.data[i] = std::clamp(x.data[i] + 0.05, 0.0, 1.0);
  }
  return y;
}

double probe(const std::function<LossValue(const ImageBuffer&)>& loss, ImageBuffer r,
             uint64_t seed, int probes = 48) {
  const LossValue v = loss(r);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_int_distribution<size_t> pick(0, r.size() - 1);
  std::vector<double> a, n;
  for (int i = 0; i < probes; ++i) {
    const size_t k = pick(rng);
    a.push_back(v.grad.data[k]);
    n.push_back(central_difference([&] { return loss(r).value; }, &r.data[k], 1e-3));
  }
  return relative_error(a, n);
}

SplatSet random_scene(int n, int size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.5);
  SplatSet set;
  for (int i = 0; i < n; ++i) {
    Splat s;
    s.p[kPosX] = 2.0 + u(rng) * (size - 4);
    s.p[kPosY] = 2.0 + u(rng) * (size - 4);
    s.p[kLogScale1] = std::log(1.0 + 3.0 * u(rng));
    s.p[kLogScale2] = std::log(1.0 + 3.0 * u(rng));
    s.p[kRotation] = (2.0 * u(rng) - 1.0) * std::numbers::pi;
    for (int c = 0; c < 3; ++c) s.p[kColorR + c] = normal(rng);
    s.p[kOpacity] = 4.0 * u(rng) - 2.0;
    s.depth_key = u(rng);
    set.splats.push_back(s);
  }
  return set;
}

// Worst per-group error of render_backward against central differences of
// <upstream, render>.
double render_error(int n, int size, uint64_t seed) {
  SplatSet scene = random_scene(n, size, seed);
  const Color bg = {0.1, 0.2, 0.3};
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageBuffer up(size, size, 3);
  for (double& v : up.data) v = normal(rng);
  auto f = [&] {
    const ImageBuffer img = render(scene, size, size, bg).image;
    double s = 0.0;
    for (size_t i = 0; i < img.size(); ++i) s += img.data[i] * up.data[i];
    return s;
  };
  const SplatGradients g = render_backward(scene, size, size, bg, up);
  double worst = 0.0;
  for (int group = 0; group < kNumParamGroups; ++group) {
    std::vector<double> a, num;
    for (size_t i = 0; i < scene.size(); ++i)
      for (int k = 0; k < kNumSplatParams; ++k) {
        if (static_cast<int>(group_of(k)) != group) continue;
        a.push_back(g.d[i][k]);
        num.push_back(central_difference(f, &scene.splats[i].p[k], 1e-3));
      }
    worst = std::max(worst, relative_error(a, num));
  }
  return worst;
}

LossConfig with_kind(LossKind kind, double sigma, double gamma) {
  LossConfig c;
  c.kind = kind;
  c.sigma = sigma;
  c.gamma = gamma;
  return c;
}

CheckRow row(const std::string& name, double value, double limit) {
  return {name, value, limit, std::isfinite(value) && value < limit};
}

}  // namespace

std::vector<CheckRow> gradient_suite(int seeds) {
  struct Case {
    std::string name;
    int size;
    std::function<LossValue(const ImageBuffer&, const ImageBuffer&)> loss;
  };
  const LossConfig wd4 = with_kind(LossKind::kWd, 4.0, 1.0);
  const LossConfig wdr = with_kind(LossKind::kWdR, 4.0, 0.025);
  const std::vector<Case> cases = {
      {"grad l1", 16, [](auto& t, auto& r) { return loss_l1(t, r); }},
      {"grad l2", 16, [](auto& t, auto& r) { return loss_l2(t, r); }},
      {"grad ssim", 16, [](auto& t, auto& r) { return loss_ssim(t, r); }},
      {"grad ms-ssim", 32, [](auto& t, auto& r) { return loss_msssim(t, r); }},
      {"grad feat_pointwise", 24, [](auto& t, auto& r) { return loss_feat_pointwise(t, r); }},
      {"grad wd", 24, [wd4](auto& t, auto& r) { return loss_wd(t, r, wd4); }},
      {"grad wd_r", 32, [wdr](auto& t, auto& r) { return loss_wd_r(t, r, wdr); }},
      {"grad original", 32, [](auto& t, auto& r) { return loss_original(t, r); }},
      {"grad composite", 32, [](auto& t, auto& r) { return loss_composite(t, r); }},
  };
  std::vector<CheckRow> rows;
  double single = 0.0, multi = 0.0;
  for (int s = 1; s <= seeds; ++s) {
    single = std::max(single, render_error(1, 12, s));
    multi = std::max(multi, render_error(6, 16, s + 1000));
  }
  rows.push_back(row("grad render single splat", single, 1e-4));
  rows.push_back(row("grad render multi splat", multi, 1e-3));
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int s = 1; s <= seeds; ++s) {
      const ImageBuffer t = random_image(c.size, s);
      const ImageBuffer r = nearby(t, s + 77);
      worst = std::max(worst, probe([&](const ImageBuffer& x) { return c.loss(t, x); }, r, s));
    }
    rows.push_back(row(c.name, worst, 1e-4));
  }
  return rows;
}

std::vector<CheckRow> oracle_suite() {
  std::vector<CheckRow> rows;
  const std::vector<double> id3 = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  rows.push_back(row("erank identity 3x3 = 3", std::abs(erank(id3, 3).value - 3.0), 1e-12));
  rows.push_back(row("erank diag(4,1) = 1.6493",
                     std::abs(erank({4, 0, 0, 1}, 2).value - 1.6493), 1e-4));

  RateModel unit;
  for (GroupPrior& g : unit.groups) g = {1.0, 0.0, 1.0};
  SplatSet one;
  one.splats.push_back(Splat{});
  rows.push_back(row("rate of centered unit bin = 1.38487 bits",
                     std::abs(rate_bits(one, unit, RateMode::kEval).bits / static_cast<int>(kNumSplatParams) -
                              1.38487),
                     1e-5));

  const double quoted[4][2] = {{150, 2.37}, {72, 1.51}, {105.7, 1.84}, {223.2, 3.61}};
  for (const auto& q : quoted) {
    char name[64];
    std::snprintf(name, sizeof name, "preference ratio %.1f Elo = %.2f", q[0], q[1]);
    rows.push_back(row(name, std::abs(elo_to_preference_ratio(q[0]) - q[1]), 0.01));
  }

  const ImageBuffer t = random_image(32, 3), r = random_image(32, 4);
  const FeatureStack ft = extract(t, FilterBankSpec{}), fr = extract(r, FilterBankSpec{});
  double expect = 0.0;
  for (size_t l = 0; l < ft.levels.size(); ++l) {
    double s = 0.0;
    size_t n = 0;
    for (size_t c = 0; c < ft.levels[l].channels.size(); ++c)
      for (size_t i = 0; i < ft.levels[l].channels[c].size(); ++i, ++n)
        s += std::abs(ft.levels[l].channels[c].data[i] - fr.levels[l].channels[c].data[i]);
    expect += s / n / ft.levels.size();
  }
  rows.push_back(row("wd at zero width = pointwise distance",
                     std::abs(wd_metric(t, r, 0.0) - expect), 1e-6));

  const SplatSet scene = random_scene(50, 32, 9);
  RateModel model;
  model.fit_prior(scene);
  const std::vector<uint8_t> bytes = encode_quantized(scene, model);
  const DecodedSplats d = decode_quantized(bytes);
  const SplatSet q = quantize(scene, model);
  const std::vector<int> order = blend_order(scene);
  double mismatch = d.splats.size() == q.size() ? 0.0 : 1.0;
  for (size_t j = 0; mismatch == 0.0 && j < order.size(); ++j)
    mismatch += d.splats.splats[j].p != q.splats[order[j]].p;
  rows.push_back(row("spq1 round trip mismatches", mismatch, 0.5));
  const double bits = rate_bits(scene, d.model, RateMode::kEval).bits;
  rows.push_back(row("spq1 payload bytes - (bits/8 + 64)",
                     static_cast<double>(spq1_payload_size(bytes)) - (std::ceil(bits) / 8 + 64),
                     1e-9));

  std::mt19937_64 rng(5);
  const FrequencyTable table = FrequencyTable::from_probabilities({0.6, 0.25, 0.1, 0.05});
  std::vector<int> msg(4000);
  for (int& m : msg) m = static_cast<int>(rng() % 4);
  RangeEncoder enc;
  for (int m : msg) enc.encode(table, m);
  const std::vector<uint8_t> coded = enc.finish();
  RangeDecoder dec(coded.data(), coded.size());
  double wrong = 0.0;
  for (int m : msg) wrong += static_cast<int>(dec.decode(table)) != m;
  rows.push_back(row("range coder round trip mismatches", wrong, 0.5));
  return rows;
}

std::string format_checks(const std::vector<CheckRow>& rows) {
  std::ostringstream out;
  size_t width = 0;
  for (const CheckRow& r : rows) width = std::max(width, r.name.size());
  for (const CheckRow& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-4s  %.3e  (limit %.1e)", r.pass ? "PASS" : "FAIL", r.value,
                  r.limit);
    out << r.name << std::string(width - r.name.size(), ' ') << buf << "\n";
  }
  return out.str();
}

bool all_pass(const std::vector<CheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

}  // namespace splatperc
