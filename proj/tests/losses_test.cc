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


#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "splatperc/error.h"
#include "splatperc/losses.h"
#include "splatperc/test_images.h"
#include "test_util.h"

using namespace splatperc;
using splatperc::testing::probe_gradient;
using splatperc::testing::random_image;

namespace {

ImageBuffer perturbed(const ImageBuffer& x, uint64_t seed, double amount) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amount, amount);
  ImageBuffer y = x;
  for (double& v : y.data) v = std::clamp(v + u(rng), 0.0, 1.0);
  return y;
}

// Per-window SSIM summed directly over the 11x11 window, no separability.
struct OracleSsim {
  double ssim = 0.0, cs = 0.0;
};
OracleSsim oracle_ssim_plane(const std::vector<double>& x, const std::vector<double>& y,
                             int h, int w) {
  double g[11], total = 0.0;
  for (int d = -5; d <= 5; ++d) total += g[d + 5] = std::exp(-d * d / (2 * 1.5 * 1.5));
  for (double& v : g) v /= total;
  OracleSsim o;
  int count = 0;
  for (int i = 5; i + 5 < h; ++i)
    for (int j = 5; j + 5 < w; ++j) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int a = -5; a <= 5; ++a)
        for (int b = -5; b <= 5; ++b) {
          const double wt = g[a + 5] * g[b + 5];
          const double xv = x[(i + a) * w + j + b], yv = y[(i + a) * w + j + b];
          mx += wt * xv;
          my += wt * yv;
          xx += wt * xv * xv;
          yy += wt * yv * yv;
          xy += wt * xv * yv;
        }
      const double c1 = 1e-4, c2 = 9e-4;
      const double cs = (2 * (xy - mx * my) + c2) / (xx - mx * mx + yy - my * my + c2);
      o.ssim += (2 * mx * my + c1) / (mx * mx + my * my + c1) * cs;
      o.cs += cs;
      ++count;
    }
  o.ssim /= count;
  o.cs /= count;
  return o;
}

std::vector<double> plane_of(const ImageBuffer& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
  return p;
}

std::vector<double> halve(const std::vector<double>& p, int& h, int& w) {
  const int h2 = h / 2, w2 = w / 2;
  std::vector<double> out(static_cast<size_t>(h2) * w2);
  for (int i = 0; i < h2; ++i)
    for (int j = 0; j < w2; ++j)
      out[i * w2 + j] = 0.25 * (p[2 * i * w + 2 * j] + p[2 * i * w + 2 * j + 1] +
                                p[(2 * i + 1) * w + 2 * j] + p[(2 * i + 1) * w + 2 * j + 1]);
  h = h2;
  w = w2;
  return out;
}

double oracle_msssim(const ImageBuffer& x, const ImageBuffer& y, int scales) {
  const double all[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double wsum = 0.0;
  for (int j = 0; j < scales; ++j) wsum += all[j];
  double mean = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    std::vector<double> px = plane_of(x, c), py = plane_of(y, c);
    int h = x.height, w = x.width;
    double prod = 1.0;
    for (int j = 0; j < scales; ++j) {
      const OracleSsim o = oracle_ssim_plane(px, py, h, w);
      const double t = j + 1 < scales ? o.cs : o.ssim;
      prod *= std::pow(t, all[j] / wsum);
      int h2 = h, w2 = w;
      px = halve(px, h2, w2);
      py = halve(py, h, w);
    }
    mean += prod / x.channels;
  }
  return mean;
}

FeatureStack single_plane_stack(const Plane& p) {
  FeatureStack f;
  f.levels.push_back(FeatureLevel{p.height, p.width, {p}});
  return f;
}

LossConfig wd_config(double sigma) {
  LossConfig cfg;
  cfg.kind = LossKind::kWd;
  cfg.sigma = sigma;
  return cfg;
}

constexpr double kPlaidPeriod = 9.0;

// Moves every pixel of each block x block tile to another position of the
// same tile (a cyclic shift along a random ordering).
ImageBuffer resample_blocks(const ImageBuffer& a, int block, uint64_t seed) {
  ImageBuffer b = a;
  std::mt19937_64 rng(seed);
  const int n = block * block;
  std::vector<int> order(n);
  for (int by = 0; by < a.height; by += block)
    for (int bx = 0; bx < a.width; bx += block) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int k = 0; k < n; ++k) {
        const int s = order[k], d = order[(k + 1) % n];
        for (int c = 0; c < a.channels; ++c)
          b.at(by + d / block, bx + d % block, c) = a.at(by + s / block, bx + s % block, c);
      }
    }
  return b;
}

}  // namespace

TEST_CASE("L1 and L2 closed forms") {
  const ImageBuffer x = random_image(8, 9, 3, 1);
  CHECK(loss_l1(x, x).value == 0.0);
  CHECK(loss_l2(x, x).value == 0.0);
  ImageBuffer a(6, 6, 3, 0.3), b(6, 6, 3, 0.4);
  CHECK(loss_l1(a, b).value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(loss_l2(a, b).value == doctest::Approx(0.01).epsilon(1e-12));
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(12, 12, 3, seed);
    ImageBuffer r = perturbed(t, seed + 100, 0.2);
    for (size_t i = 0; i < r.size(); ++i)
      if (std::abs(r.data[i] - t.data[i]) < 0.01) r.data[i] = t.data[i] + 0.05;
    const LossValue l1 = loss_l1(t, r), l2 = loss_l2(t, r);
    CHECK(probe_gradient([&] { return loss_l1(t, r).value; }, r, l1.grad, 64, seed).error() < 1e-5);
    CHECK(probe_gradient([&] { return loss_l2(t, r).value; }, r, l2.grad, 64, seed).error() < 1e-5);
  }
}

TEST_CASE("SSIM closed form, brute-force oracle and gradient") {
  const ImageBuffer x = random_image(20, 20, 3, 3);
  CHECK(std::abs(loss_ssim(x, x).value) < 1e-14);

  const ImageBuffer a(16, 16, 3, 0.5), b(16, 16, 3, 0.7);
  const double closed = (2 * 0.5 * 0.7 + 1e-4) / (0.25 + 0.49 + 1e-4);
  CHECK(1.0 - loss_ssim(a, b).value == doctest::Approx(closed).epsilon(1e-12));
  CHECK(loss_ssim(a, b).value == doctest::Approx(0.0541).epsilon(1e-3));

  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ImageBuffer t = random_image(23, 19, 3, seed);
    const ImageBuffer r = perturbed(t, seed, 0.3);
    double expect = 0.0;
    for (int c = 0; c < 3; ++c)
      expect += oracle_ssim_plane(plane_of(t, c), plane_of(r, c), 23, 19).ssim / 3;
    CHECK(1.0 - loss_ssim(t, r).value == doctest::Approx(expect).epsilon(1e-12));
  }

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(16, 18, seed % 3 == 0 ? 1 : 3, seed);
    ImageBuffer r = perturbed(t, seed + 7, 0.2);
    const LossValue v = loss_ssim(t, r);
    CHECK(probe_gradient([&] { return loss_ssim(t, r).value; }, r, v.grad, 64, seed).error() <
          1e-4);
  }
  CHECK_THROWS_AS(loss_ssim(ImageBuffer(10, 20, 1), ImageBuffer(10, 20, 1)), Error);
}

TEST_CASE("MS-SSIM matches a composed oracle and reduces to SSIM") {
  const ImageBuffer x = random_image(48, 48, 3, 5);
  CHECK(std::abs(loss_msssim(x, x).value) < 1e-14);
  CHECK(msssim_scale_count(48, 48, LossConfig{}) == 3);
  CHECK(msssim_scale_count(176, 200, LossConfig{}) == 5);
  CHECK(msssim_scale_count(10, 64, LossConfig{}) == 0);

  for (uint64_t seed = 1; seed <= 4; ++seed) {
    const ImageBuffer t = random_image(50, 46, 3, seed);
    const ImageBuffer r = perturbed(t, seed + 9, 0.25);
    const double ms = 1.0 - loss_msssim(t, r).value;
    CHECK(ms <= 1.0);
    CHECK(ms == doctest::Approx(oracle_msssim(t, r, 3)).epsilon(1e-12));
    CHECK(loss_msssim(t, r, LossConfig{}, 1).value ==
          doctest::Approx(loss_ssim(t, r).value).epsilon(1e-13));
  }

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(44, 44, 3, seed);
    ImageBuffer r = perturbed(t, seed + 3, 0.2);
    const LossValue v = loss_msssim(t, r);
    CHECK(probe_gradient([&] { return loss_msssim(t, r).value; }, r, v.grad, 64, seed)
              .error() < 1e-4);
  }
  CHECK_THROWS_AS(loss_msssim(ImageBuffer(8, 8, 1), ImageBuffer(8, 8, 1)), Error);
}

TEST_CASE("pointwise feature loss: zero, invariance and gradient") {
  const ImageBuffer x = random_image(24, 24, 3, 6);
  CHECK(loss_feat_pointwise(x, x).value == 0.0);

  const FeatureStack a = extract(x, FilterBankSpec{});
  const FeatureStack b = extract(perturbed(x, 2, 0.2), FilterBankSpec{});
  FeatureStack a2 = a, b2 = b;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> scale(0.5, 4.0);
  for (size_t l = 0; l < a.levels.size(); ++l)
    for (size_t i = 0; i < a.levels[l].channels[0].size(); ++i) {
      const double s = scale(rng);
      for (size_t c = 0; c < a.levels[l].channels.size(); ++c) {
        a2.levels[l].channels[c].data[i] *= s;
        b2.levels[l].channels[c].data[i] *= s;
      }
    }
  const double base = feature_pointwise_distance(a, b);
  CHECK(base > 1e-3);
  CHECK(feature_pointwise_distance(a2, b2) == doctest::Approx(base).epsilon(1e-6));

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(20, 20, 3, seed);
    ImageBuffer r = perturbed(t, seed + 1, 0.2);
    const LossValue v = loss_feat_pointwise(t, r);
    CHECK(v.value == doctest::Approx(feature_pointwise_distance(
                                         extract(t, FilterBankSpec{}), extract(r, FilterBankSpec{})))
                         .epsilon(1e-12));
    CHECK(probe_gradient([&] { return loss_feat_pointwise(t, r).value; }, r, v.grad, 64, seed)
              .error() < 1e-4);
  }
}

TEST_CASE("pool_stats limits") {
  Plane constant(20, 20, 0.7);
  for (double sigma : {0.0, 1.0, 3.5}) {
    const PooledStats s = pool_stats(single_plane_stack(constant), SigmaSpec{sigma});
    for (double v : s.levels[0].mu[0].data) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
    for (double v : s.levels[0].nu[0].data) CHECK(std::abs(v) < 1e-9);
  }
  const Plane f = [] {
    Plane p(17, 13);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (double& v : p.data) v = n(rng);
    return p;
  }();
  const PooledStats s0 = pool_stats(single_plane_stack(f), SigmaSpec{0.0});
  CHECK(s0.levels[0].mu[0].data == f.data);

  // Checkerboard under a wide window: mean -> 0 and spread -> 1.
  Plane board(96, 96);
  for (int i = 0; i < 96; ++i)
    for (int j = 0; j < 96; ++j) board.at(i, j) = (i + j) % 2 ? -1.0 : 1.0;
  const double sigma = 8.0;
  const PooledStats s = pool_stats(single_plane_stack(board), SigmaSpec{sigma});
  const int r = 24;
  for (auto [y, x] : {std::pair{0, 0}, std::pair{40, 51}, std::pair{95, 10}}) {
    double acc = 0.0, acc2 = 0.0, total = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        const double v = board.at(reflect_index(y + dy, 96), reflect_index(x + dx, 96));
        acc += w * v;
        acc2 += w * v * v;
        total += w;
      }
    const double mu = acc / total;
    const double nu = std::sqrt(acc2 / total - mu * mu + 1e-12) - 1e-6;
    CHECK(s.levels[0].mu[0].at(y, x) == doctest::Approx(mu).epsilon(1e-12));
    CHECK(s.levels[0].nu[0].at(y, x) == doctest::Approx(nu).epsilon(1e-12));
    CHECK(std::abs(mu) < 1e-3);
    CHECK(std::abs(nu - 1.0) < 1e-3);
  }
}

TEST_CASE("sigma pyramid area-averages and rescales") {
  Plane m(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) m.at(i, j) = i * 8 + j;
  const std::vector<Plane> p = sigma_pyramid(m, 3);
  REQUIRE(p.size() == 3);
  CHECK(p[1].height == 4);
  CHECK(p[1].at(0, 0) == doctest::Approx((0 + 1 + 8 + 9) / 4.0 / 2.0));
  CHECK(p[2].at(1, 1) == doctest::Approx((36 + 37 + 38 + 39 + 44 + 45 + 46 + 47 + 52 + 53 +
                                          54 + 55 + 60 + 61 + 62 + 63) /
                                         16.0 / 4.0));
}

TEST_CASE("WD: zero, pointwise limit, symmetry") {
  const ImageBuffer x = random_image(32, 32, 3, 8);
  CHECK(loss_wd(x, x, wd_config(4)).value == 0.0);
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ImageBuffer t = random_image(32, 32, 3, seed);
    const ImageBuffer r = random_image(32, 32, 3, seed + 50);
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
    CHECK(std::abs(wd_metric(t, r, 0.0) - expect) < 1e-6);
    const LossConfig c0 = wd_config(0);
    CHECK(loss_wd(t, r, c0).value ==
          doctest::Approx(c0.wd_scale * wd_metric(t, r, 0.0)).epsilon(1e-12));
    const double ab = loss_wd(t, r, wd_config(4)).value;
    const double ba = loss_wd(r, t, wd_config(4)).value;
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  }
}

TEST_CASE("WD treats a phase-shifted texture as a near metamer") {
  const ImageBuffer x = plaid(64, kPlaidPeriod, 0.0);
  const ImageBuffer shifted = plaid(64, kPlaidPeriod, M_PI);
  const ImageBuffer gray(64, 64, 3, 0.5);
  const ImageBuffer half = plaid(64, kPlaidPeriod, 0.0, 0.1);
  const double wd8 = loss_wd(x, shifted, wd_config(8)).value;
  CHECK(wd8 < 0.05 * loss_wd(x, gray, wd_config(8)).value);
  CHECK(wd8 < 0.05 * loss_wd(x, shifted, wd_config(0)).value);
  CHECK(loss_l2(x, shifted).value > 2.0 * loss_l2(x, half).value);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    const double v = loss_wd(x, shifted, wd_config(sigma)).value;
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("WD metamer property on stationary noise") {
  // b resamples a inside 4x4 blocks, so local statistics match while
  // every pixel moves; c is an independent draw.
  const ImageBuffer a = stationary_noise(64, 1, 0.0);
  const ImageBuffer b = resample_blocks(a, 4, 5);
  const ImageBuffer c = stationary_noise(64, 3, 0.0);
  CHECK(loss_wd(a, b, wd_config(8)).value <= 0.1 * loss_wd(a, b, wd_config(0)).value);
  const double l1_ab = loss_l1(a, b).value, l1_ac = loss_l1(a, c).value;
  CHECK(std::abs(l1_ab - l1_ac) <= 0.05 * l1_ac);
}

Plane ramp_map(int size, double lo, double hi) {
  Plane m(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) m.at(i, j) = lo + (hi - lo) * j / (size - 1.0);
  return m;
}

TEST_CASE("WD gradient: constant width and width map") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(24, 24, 3, seed);
    ImageBuffer r = perturbed(t, seed + 11, 0.3);
    LossConfig cfg = wd_config(seed % 2 ? 4.0 : 1.5);
    if (seed % 5 == 0) cfg.sigma_map = ramp_map(24, 2.0, 6.0);
    const LossValue v = loss_wd(t, r, cfg);
    CHECK(probe_gradient([&] { return loss_wd(t, r, cfg).value; }, r, v.grad, 64, seed).error() <
          1e-4);
  }
  // Sub-pixel widths: the local spread is a square root of a small variance,
  // so the check uses a smaller step.
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ImageBuffer t = random_image(24, 24, 3, seed);
    ImageBuffer r = perturbed(t, seed + 11, 0.3);
    LossConfig cfg = wd_config(0.0);
    cfg.sigma_map = ramp_map(24, 0.3, 3.5);
    const LossValue v = loss_wd(t, r, cfg);
    CHECK(probe_gradient([&] { return loss_wd(t, r, cfg).value; }, r, v.grad, 64, seed, 1e-5)
              .error() < 1e-6);
  }
  LossConfig bad = wd_config(4);
  bad.sigma_map = Plane(10, 10, 1.0);
  const ImageBuffer t = random_image(24, 24, 3, 1);
  CHECK_THROWS_AS(loss_wd(t, t, bad), Error);
}

TEST_CASE("original, WD-R and composite combine their parts") {
  CHECK(0.8 * 0.1 + 0.2 * 0.0541 == doctest::Approx(0.09082).epsilon(1e-12));
  CHECK(0.025 * (0.2 + (1.0 / 0.09) * 0.009) == doctest::Approx(0.0075).epsilon(1e-12));

  LossConfig cfg = wd_config(4);
  cfg.kind = LossKind::kWdR;
  cfg.gamma = 0.025;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ImageBuffer t = random_image(32, 32, 3, seed);
    const ImageBuffer r = perturbed(t, seed, 0.3);
    const double l1 = loss_l1(t, r).value, ss = loss_ssim(t, r).value;
    CHECK(loss_original(t, r).value == doctest::Approx(0.8 * l1 + 0.2 * ss).epsilon(1e-12));
    const double wd = loss_wd(t, r, cfg).value, orig = loss_original(t, r).value;
    const LossValue wdr = loss_wd_r(t, r, cfg);
    CHECK(wdr.value == doctest::Approx(0.025 * (wd + cfg.beta * orig)).epsilon(1e-12));
    REQUIRE(wdr.grad_ratio.has_value());
    CHECK(*wdr.grad_ratio > 0.0);
    LossConfig no_beta = cfg;
    no_beta.beta = 0.0;
    CHECK(loss_wd_r(t, r, no_beta).value == 0.025 * wd);

    const double l2 = loss_l2(t, r).value;
    const double ms = loss_msssim(t, r).value;
    const double fp = loss_feat_pointwise(t, r).value;
    CHECK(loss_composite(t, r).value ==
          doctest::Approx(0.05 * l1 + 0.30 * l2 + 0.60 * ms + 0.10 * fp).epsilon(1e-12));
    LossConfig zero;
    zero.omega = {0, 0, 0, 0};
    CHECK(loss_composite(t, r, zero).value == 0.0);
  }
}

TEST_CASE("original, WD-R and composite gradients") {
  LossConfig wdr = wd_config(4);
  wdr.kind = LossKind::kWdR;
  wdr.gamma = 0.025;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageBuffer t = random_image(32, 32, 3, seed);
    ImageBuffer r = perturbed(t, seed + 5, 0.2);
    for (size_t i = 0; i < r.size(); ++i)
      if (std::abs(r.data[i] - t.data[i]) < 0.01) r.data[i] = std::clamp(t.data[i] + 0.05, 0.0, 1.0);
    const LossValue o = loss_original(t, r);
    CHECK(probe_gradient([&] { return loss_original(t, r).value; }, r, o.grad, 64, seed)
              .error() < 1e-4);
    const LossValue c = loss_composite(t, r);
    CHECK(probe_gradient([&] { return loss_composite(t, r).value; }, r, c.grad, 64, seed)
              .error() < 1e-4);
    const LossValue w = loss_wd_r(t, r, wdr);
    CHECK(probe_gradient([&] { return loss_wd_r(t, r, wdr).value; }, r, w.grad, 64, seed)
              .error() < 1e-4);
  }
}

TEST_CASE("every loss is non-negative and vanishes at equality") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const ImageBuffer t = random_image(48, 48, 3, seed);
    const ImageBuffer r = random_image(48, 48, 3, seed + 99);
    LossConfig cfg = wd_config(4);
    cfg.kind = LossKind::kWdR;
    for (auto fn : {+[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig&) {
                      return loss_l1(a, b).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig&) {
                      return loss_l2(a, b).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_ssim(a, b, c).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_msssim(a, b, c).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_feat_pointwise(a, b, c.bank).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_wd(a, b, c).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_original(a, b, c).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_composite(a, b, c).value;
                    },
                    +[](const ImageBuffer& a, const ImageBuffer& b, const LossConfig& c) {
                      return loss_wd_r(a, b, c).value;
                    }}) {
      CHECK(fn(t, r, cfg) > 0.0);
      CHECK(std::abs(fn(t, t, cfg)) < 1e-14);
    }
  }
}

TEST_CASE("Objective applies gamma and reuses target work") {
  const ImageBuffer t = random_image(40, 40, 3, 1);
  const ImageBuffer r = perturbed(t, 2, 0.2);
  for (LossKind kind : {LossKind::kOriginal, LossKind::kComposite, LossKind::kWd,
                        LossKind::kWdR}) {
    LossConfig cfg = wd_config(4);
    cfg.kind = kind;
    cfg.gamma = 0.03;
    const Objective obj(t, cfg);
    const LossValue v = obj.evaluate(r);
    LossValue direct;
    switch (kind) {
      case LossKind::kOriginal: direct = loss_original(t, r, cfg); break;
      case LossKind::kComposite: direct = loss_composite(t, r, cfg); break;
      case LossKind::kWd: direct = loss_wd(t, r, cfg); break;
      case LossKind::kWdR: direct = loss_wd_r(t, r, cfg); break;
    }
    const double scale = kind == LossKind::kWdR ? 1.0 : 0.03;
    CHECK(v.value == doctest::Approx(scale * direct.value).epsilon(1e-13));
    for (size_t i = 0; i < v.grad.size(); i += 37)
      CHECK(v.grad.data[i] == doctest::Approx(scale * direct.grad.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("loss config JSON and validation") {
  LossConfig c;
  c.kind = LossKind::kWdR;
  c.gamma = 0.025;
  c.sigma = 2.0;
  c.omega = {0.1, 0.2, 0.3, 0.4};
  const nlohmann::json j = c;
  const LossConfig back = j.get<LossConfig>();
  CHECK(back.kind == LossKind::kWdR);
  CHECK(back.gamma == 0.025);
  CHECK(back.sigma == 2.0);
  CHECK(back.omega == c.omega);
  CHECK(back.beta == c.beta);
  CHECK(parse_loss_kind("composite") == LossKind::kComposite);
  CHECK_THROWS_AS(parse_loss_kind("lpips"), Error);
  LossConfig bad;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = LossConfig{};
  bad.msssim_weights = {0.5, 0.5, 0.5, 0.0, 0.0};
  CHECK_THROWS_AS(validate(bad), Error);
}
