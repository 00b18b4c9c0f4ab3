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


#include <cmath>
#include <random>

#include "doctest.h"
#include "splatperc/error.h"
#include "splatperc/features.h"
#include "test_util.h"

using namespace splatperc;
using splatperc::testing::probe_gradient;
using splatperc::testing::random_image;

namespace {

// Kernels written out from their closed forms, independent of the bank code.
Kernel2D oracle_gaussian(double sigma, int radius) {
  Kernel2D k{radius, {}};
  double total = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      k.taps.push_back(v);
      total += v;
    }
  for (double& t : k.taps) t /= total;
  return k;
}

Kernel2D oracle_derivative(double angle_deg, double sigma, int radius) {
  const double c = std::cos(angle_deg * M_PI / 180.0);
  const double s = std::sin(angle_deg * M_PI / 180.0);
  Kernel2D k{radius, {}};
  double ramp = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double u = c * dx + s * dy;
      const double v = u * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      k.taps.push_back(v);
      ramp += v * u;
    }
  for (double& t : k.taps) t /= ramp;
  return k;
}

std::vector<Kernel2D> oracle_bank() {
  Kernel2D dog = oracle_gaussian(1.0, 6);
  const Kernel2D surround = oracle_gaussian(2.0, 6);
  for (size_t i = 0; i < dog.taps.size(); ++i) dog.taps[i] -= surround.taps[i];
  return {Kernel2D{0, {1.0}}, dog,
          oracle_derivative(0, 1.0, 3), oracle_derivative(45, 1.0, 3),
          oracle_derivative(90, 1.0, 3), oracle_derivative(135, 1.0, 3)};
}

Plane oracle_luminance(const ImageBuffer& img) {
  Plane y(img.height, img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j)
      y.at(i, j) = 0.299 * img.at(i, j, 0) + 0.587 * img.at(i, j, 1) +
                   0.114 * img.at(i, j, 2);
  return y;
}

Plane oracle_downsample(const Plane& p) {
  Plane out(p.height / 2, p.width / 2);
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j)
      out.at(i, j) = 0.25 * (p.at(2 * i, 2 * j) + p.at(2 * i + 1, 2 * j) +
                             p.at(2 * i, 2 * j + 1) + p.at(2 * i + 1, 2 * j + 1));
  return out;
}

FeatureStack random_upstream(const FeatureStack& like, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureStack u = zero_features_like(like);
  for (FeatureLevel& l : u.levels)
    for (Plane& p : l.channels)
      for (double& v : p.data) v = n(rng);
  return u;
}

double inner(const FeatureStack& a, const FeatureStack& b) {
  double s = 0.0;
  for (size_t l = 0; l < a.levels.size(); ++l)
    for (size_t c = 0; c < a.levels[l].channels.size(); ++c)
      for (size_t i = 0; i < a.levels[l].channels[c].size(); ++i)
        s += a.levels[l].channels[c].data[i] * b.levels[l].channels[c].data[i];
  return s;
}

}  // namespace

TEST_CASE("bank kernels match their closed forms and sum rules") {
  const FilterBankSpec spec;
  const std::vector<Kernel2D> bank = bank_kernels(spec);
  const std::vector<Kernel2D> oracle = oracle_bank();
  for (int c = 0; c < kChannelsPerLevel; ++c) {
    REQUIRE(bank[c].radius == oracle[c].radius);
    for (size_t i = 0; i < bank[c].taps.size(); ++i)
      CHECK(bank[c].taps[i] == doctest::Approx(oracle[c].taps[i]).epsilon(1e-12));
  }
  CHECK(bank[kCenterSurround].radius == 6);
  CHECK(bank[kDeriv0].radius == 3);
  for (int c = kCenterSurround; c <= kDeriv135; ++c)
    CHECK(std::abs(bank[c].sum()) < 1e-10);
}

TEST_CASE("level features equal direct 2D convolution of the pyramid") {
  const FilterBankSpec spec;
  const ImageBuffer img = random_image(40, 36, 3, 5);
  const FeatureStack f = extract(img, spec);
  REQUIRE(f.levels.size() == 3);
  const std::vector<Kernel2D> oracle = oracle_bank();
  Plane lum = oracle_luminance(img);
  for (int l = 0; l < 3; ++l) {
    if (l > 0) lum = oracle_downsample(lum);
    const FeatureLevel& fl = f.levels[l];
    CHECK(fl.height == lum.height);
    CHECK(fl.width == lum.width);
    CHECK(fl.channels.size() == (l == 0 ? 8u : 6u));
    for (int c = 0; c < kChannelsPerLevel; ++c) {
      Plane expect = reference::correlate(lum, oracle[c]);
      if (c != kLuminance)
        for (double& v : expect.data) v = std::sqrt(v * v + 1e-6) - 1e-3;
      double worst = 0.0;
      for (size_t i = 0; i < expect.size(); ++i)
        worst = std::max(worst, std::abs(expect.data[i] - fl.channels[c].data[i]));
      CHECK(worst < 1e-12);
    }
  }
  const Plane y = oracle_luminance(img);
  for (int i = 0; i < img.height; i += 7)
    for (int j = 0; j < img.width; j += 5) {
      CHECK(f.levels[0].channels[kChromaBlue].at(i, j) ==
            doctest::Approx(img.at(i, j, 2) - y.at(i, j)).epsilon(1e-14));
      CHECK(f.levels[0].channels[kChromaRed].at(i, j) ==
            doctest::Approx(img.at(i, j, 0) - y.at(i, j)).epsilon(1e-14));
    }
}

TEST_CASE("constant image has silent filter channels") {
  const ImageBuffer img(32, 32, 3, 0.37);
  const FeatureStack f = extract(img, FilterBankSpec{});
  for (const FeatureLevel& l : f.levels) {
    for (double v : l.channels[kLuminance].data) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    for (int c = kCenterSurround; c <= kDeriv135; ++c)
      for (double v : l.channels[c].data) CHECK(std::abs(v) < 1e-12);
  }
  for (double v : f.levels[0].channels[kChromaBlue].data) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("horizontal edge excites the 90 degree channel more than 0 degrees") {
  ImageBuffer img(32, 32, 1, 0.2);
  for (int i = 16; i < 32; ++i)
    for (int j = 0; j < 32; ++j) img.at(i, j, 0) = 0.8;
  const FeatureStack f = extract(img, FilterBankSpec{});
  const std::vector<Kernel2D> oracle = oracle_bank();
  Plane lum(32, 32);
  lum.data = img.data;
  const Plane d90 = reference::correlate(lum, oracle[kDeriv90]);
  const Plane d0 = reference::correlate(lum, oracle[kDeriv0]);
  for (int j = 0; j < 32; ++j) {
    for (int i : {15, 16}) {
      CHECK(std::abs(d90.at(i, j)) > std::abs(d0.at(i, j)) + 0.1);
      CHECK(f.levels[0].channels[kDeriv90].at(i, j) >
            f.levels[0].channels[kDeriv0].at(i, j) + 0.1);
    }
  }
}

TEST_CASE("per-channel Lipschitz bound under max-norm perturbations") {
  const FilterBankSpec spec;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageBuffer a = random_image(32, 32, 3, 100 + trial);
    ImageBuffer b = a;
    const double eta = 0.01 * (trial + 1);
    for (double& v : b.data) v += eta * u(rng);
    const FeatureStack fa = extract(a, spec), fb = extract(b, spec);
    for (int l = 0; l < spec.num_levels; ++l)
      for (size_t c = 0; c < fa.levels[l].channels.size(); ++c) {
        double worst = 0.0;
        const Plane& pa = fa.levels[l].channels[c];
        const Plane& pb = fb.levels[l].channels[c];
        for (size_t i = 0; i < pa.size(); ++i)
          worst = std::max(worst, std::abs(pa.data[i] - pb.data[i]));
        CHECK(worst <= channel_lipschitz_bound(spec, l, static_cast<int>(c), 3) * eta);
      }
  }
  CHECK(channel_lipschitz_bound(spec, 0, kLuminance, 3) == 1.0);
  CHECK(channel_lipschitz_bound(spec, 0, kChromaBlue, 3) == doctest::Approx(1.772));
  CHECK(channel_lipschitz_bound(spec, 0, kChromaRed, 3) == doctest::Approx(1.402));
}

TEST_CASE("extract_backward: zero upstream gives zero gradient") {
  const FilterBankSpec spec;
  const ImageBuffer img = random_image(24, 24, 3, 1);
  const ImageBuffer g = extract_backward(img, spec, zero_features_like(extract(img, spec)));
  for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("extract_backward matches central differences") {
  const FilterBankSpec spec;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const int c = seed % 4 == 0 ? 1 : 3;
    ImageBuffer img = random_image(24, 20, c, seed);
    const FeatureStack u = random_upstream(extract(img, spec), seed + 1000);
    const ImageBuffer g = extract_backward(img, spec, u);
    auto f = [&] { return inner(extract(img, spec), u); };
    const auto r = probe_gradient(f, img, g, 64, seed, 1e-5);
    CHECK(r.error() < 1e-4);
  }
}

TEST_CASE("linear bank: extract_backward is the exact adjoint") {
  FilterBankSpec spec;
  spec.rectify = false;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const ImageBuffer x = random_image(33, 29, 3, seed);
    const FeatureStack fx = extract(x, spec);
    const FeatureStack u = random_upstream(fx, seed + 50);
    const ImageBuffer g = extract_backward(x, spec, u);
    double rhs = 0.0;
    for (size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * g.data[i];
    const double lhs = inner(fx, u);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("level-0 features are translation covariant in the interior") {
  const ImageBuffer big = random_image(48, 48, 3, 77);
  const int sy = 3, sx = 5, side = 32;
  ImageBuffer a(side, side, 3), b(side, side, 3);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      for (int c = 0; c < 3; ++c) {
        a.at(i, j, c) = big.at(i + 8, j + 8, c);
        b.at(i, j, c) = big.at(i + 8 + sy, j + 8 + sx, c);
      }
  const FeatureStack fa = extract(a, FilterBankSpec{});
  const FeatureStack fb = extract(b, FilterBankSpec{});
  for (size_t c = 0; c < fa.levels[0].channels.size(); ++c)
    for (int i = 6; i < side - 6 - sy; ++i)
      for (int j = 6; j < side - 6 - sx; ++j)
        CHECK(fa.levels[0].channels[c].at(i + sy, j + sx) ==
              doctest::Approx(fb.levels[0].channels[c].at(i, j)).epsilon(1e-12));
}

TEST_CASE("extract is deterministic and validates its input") {
  const ImageBuffer img = random_image(16, 16, 3, 4);
  const FeatureStack a = extract(img, FilterBankSpec{});
  const FeatureStack b = extract(img, FilterBankSpec{});
  for (size_t l = 0; l < a.levels.size(); ++l)
    for (size_t c = 0; c < a.levels[l].channels.size(); ++c)
      CHECK(a.levels[l].channels[c].data == b.levels[l].channels[c].data);

  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kCorruptStream;
  };
  CHECK(code_of([] { extract(ImageBuffer(7, 16, 3), FilterBankSpec{}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([] { extract(ImageBuffer(16, 16, 2), FilterBankSpec{}); }) ==
        ErrorCode::kInvalidArgument);
  FeatureStack wrong = zero_features_like(a);
  wrong.levels.pop_back();
  CHECK(code_of([&] { extract_backward(img, FilterBankSpec{}, wrong); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("filter bank spec JSON round trip") {
  FilterBankSpec s;
  s.num_levels = 2;
  s.rectifier_eps = 2e-3;
  s.chroma = false;
  const nlohmann::json j = s;
  CHECK(j.get<FilterBankSpec>() == s);
  CHECK(nlohmann::json::object().get<FilterBankSpec>() == FilterBankSpec{});
}
