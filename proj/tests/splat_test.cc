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
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "splatperc/error.h"
#include "splatperc/gradcheck.h"
#include "splatperc/splat.h"

using namespace splatperc;

namespace {

SplatSet random_scene(int n, int width, int height, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.5);
  SplatSet set;
  for (int i = 0; i < n; ++i) {
    Splat s;
    s.p[kPosX] = 2.0 + u(rng) * (width - 4);
    s.p[kPosY] = 2.0 + u(rng) * (height - 4);
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

ImageBuffer random_upstream(int width, int height, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageBuffer g(height, width, 3);
  for (double& v : g.data) v = normal(rng);
  return g;
}

double weighted_sum(const ImageBuffer& img, const ImageBuffer& g) {
  double s = 0.0;
  for (size_t i = 0; i < img.size(); ++i) s += img.data[i] * g.data[i];
  return s;
}

// Worst per-group norm-wise relative error between analytic and central
// finite-difference gradients.
double worst_group_error(SplatSet scene, int width, int height, const Color& bg,
                         const ImageBuffer& upstream) {
  const SplatGradients analytic = render_backward(scene, width, height, bg, upstream);
  double worst = 0.0;
  for (int group = 0; group < kNumParamGroups; ++group) {
    std::vector<double> a, n;
    for (size_t i = 0; i < scene.size(); ++i) {
      for (int k = 0; k < kNumSplatParams; ++k) {
        if (static_cast<int>(group_of(k)) != group) continue;
        a.push_back(analytic.d[i][k]);
        n.push_back(central_difference(
            [&] { return weighted_sum(render(scene, width, height, bg).image, upstream); },
            &scene.splats[i].p[k], 1e-3));
      }
    }
    worst = std::max(worst, relative_error(a, n));
  }
  return worst;
}

}  // namespace

TEST_CASE("empty set renders the background") {
  const RenderOutput out = render(SplatSet{}, 5, 4, {0.1, 0.2, 0.3});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      CHECK(out.image.at(y, x, 0) == 0.1);
      CHECK(out.image.at(y, x, 2) == 0.3);
      CHECK(out.transmittance.at(y, x) == 1.0);
    }
}

TEST_CASE("opaque red splat on a black background") {
  Splat s;
  s.p[kPosX] = 3.5;  // center of pixel (3, 3)
  s.p[kPosY] = 3.5;
  s.p[kLogScale1] = s.p[kLogScale2] = std::log(1.5);
  s.p[kColorR] = 12.0;
  s.p[kColorG] = s.p[kColorB] = -12.0;
  s.p[kOpacity] = 12.0;
  const RenderOutput out = render(SplatSet{{s}}, 7, 7);
  CHECK(std::abs(out.image.at(3, 3, 0) - 1.0) < 1e-4);
  CHECK(std::abs(out.image.at(3, 3, 1)) < 1e-4);
  CHECK(std::abs(out.image.at(3, 3, 2)) < 1e-4);
}

TEST_CASE("blend order follows depth keys") {
  SplatSet scene = random_scene(2, 12, 12, 1);
  for (Splat& s : scene.splats) {
    s.p[kPosX] = s.p[kPosY] = 6.0;
    s.p[kOpacity] = 1.0;
  }
  scene.splats[0].p[kColorR] = 3.0;
  scene.splats[1].p[kColorR] = -3.0;
  scene.splats[0].depth_key = 0.1;
  scene.splats[1].depth_key = 0.2;
  const ImageBuffer a = render(scene, 12, 12).image;
  std::swap(scene.splats[0].depth_key, scene.splats[1].depth_key);
  const ImageBuffer b = render(scene, 12, 12).image;
  CHECK(a.data != b.data);
}

TEST_CASE("equal depth keys fall back to index order") {
  SplatSet scene = random_scene(3, 10, 10, 2);
  for (Splat& s : scene.splats) s.depth_key = 0.5;
  CHECK(blend_order(scene) == std::vector<int>{0, 1, 2});
}

TEST_CASE("tiled kernels match the serial reference") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const int w = 37, h = 29;
    const SplatSet scene = random_scene(40, w, h, seed);
    const Color bg{0.2, 0.5, 0.1};
    const RenderOutput fast = render(scene, w, h, bg);
    const RenderOutput ref = reference::render(scene, w, h, bg);
    CHECK(fast.image.data == ref.image.data);
    CHECK(fast.transmittance.data == ref.transmittance.data);

    const ImageBuffer g = random_upstream(w, h, seed + 100);
    const SplatGradients gf = render_backward(scene, w, h, bg, g);
    const SplatGradients gr = reference::render_backward(scene, w, h, bg, g);
    for (size_t i = 0; i < scene.size(); ++i) {
      CHECK(relative_error(gf.d[i], gr.d[i]) < 1e-10);
      CHECK(gf.visible[i] == gr.visible[i]);
    }
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  const SplatSet scene = random_scene(5, 16, 16, 3);
  const SplatGradients g = render_backward(scene, 16, 16, {0, 0, 0}, ImageBuffer(16, 16, 3));
  for (const ParamVector& d : g.d)
    for (double v : d) CHECK(v == 0.0);
  for (double v : g.position_grad_norm) CHECK(v == 0.0);
}

TEST_CASE("single-splat gradients match finite differences") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SplatSet scene = random_scene(1, 20, 18, seed);
    const ImageBuffer g = random_upstream(20, 18, seed + 7);
    CHECK(worst_group_error(scene, 20, 18, {0.3, 0.6, 0.9}, g) < 1e-4);
  }
}

TEST_CASE("multi-splat gradients match finite differences over 100 seeds") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const SplatSet scene = random_scene(20, 24, 20, 1000 + seed);
    const ImageBuffer g = random_upstream(24, 20, seed);
    worst = std::max(worst, worst_group_error(scene, 24, 20, {0.5, 0.2, 0.7}, g));
  }
  MESSAGE("worst multi-splat relative error " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("compositing conserves weight") {
  const SplatSet scene = random_scene(30, 20, 20, 9);
  for (int y = 0; y < 20; y += 3) {
    for (int x = 0; x < 20; x += 3) {
      const PixelBlend b = blend_at_pixel(scene, x, y);
      double total = b.transmittance;
      for (double w : b.weights) total += w;
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
  const RenderOutput out = render(scene, 20, 20);
  CHECK(blend_at_pixel(scene, 7, 11).transmittance == out.transmittance.at(11, 7));
}

TEST_CASE("disjoint splats commute") {
  SplatSet scene = random_scene(4, 40, 40, 4);
  const double centers[4][2] = {{8, 8}, {30, 8}, {8, 30}, {30, 30}};
  for (int i = 0; i < 4; ++i) {
    scene.splats[i].p[kPosX] = centers[i][0];
    scene.splats[i].p[kPosY] = centers[i][1];
    scene.splats[i].p[kLogScale1] = scene.splats[i].p[kLogScale2] = std::log(2.0);
  }
  const ImageBuffer a = render(scene, 40, 40).image;
  SplatSet permuted;
  for (int i : {2, 0, 3, 1}) permuted.splats.push_back(scene.splats[i]);
  for (int i = 0; i < 4; ++i) permuted.splats[i].depth_key = 1.0 - 0.1 * i;
  CHECK(render(permuted, 40, 40).image.data == a.data);
}

TEST_CASE("rotating by pi leaves the render unchanged") {
  SplatSet scene = random_scene(10, 24, 24, 12);
  const ImageBuffer a = render(scene, 24, 24).image;
  for (Splat& s : scene.splats) s.p[kRotation] += std::numbers::pi;
  const ImageBuffer b = render(scene, 24, 24).image;
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-12);
}

TEST_CASE("non-finite parameters are rejected") {
  SplatSet scene = random_scene(2, 8, 8, 1);
  scene.splats[1].p[kLogScale1] = std::nan("");
  CHECK_THROWS_AS(render(scene, 8, 8), Error);
}

TEST_CASE("falloff is C1 at the cutoff") {
  CHECK(splat_falloff(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(splat_falloff(kCutoffQ - 1e-9)) < 1e-10);
  CHECK(std::abs(splat_falloff_derivative(kCutoffQ - 1e-9)) < 1e-10);
  const double h = 1e-6, q = 3.7;
  CHECK(splat_falloff_derivative(q) ==
        doctest::Approx((splat_falloff(q + h) - splat_falloff(q - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("checkpoint format") {
  const std::vector<uint8_t> empty = serialize_splats(SplatSet{});
  CHECK(empty.size() == 16);
  CHECK(deserialize_splats(empty).empty());

  const SplatSet scene = round_to_checkpoint_precision(random_scene(1000, 64, 64, 5));
  const std::vector<uint8_t> bytes = serialize_splats(scene);
  CHECK(bytes.size() == 16 + 1000 * 44);
  const SplatSet back = deserialize_splats(bytes);
  CHECK(back == scene);
  CHECK(serialize_splats(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "splatperc_ckpt.spl2";
  save_splats(scene, path, nlohmann::json{{"loss", "original"}});
  CHECK(load_splats(path) == scene);
  CHECK(std::filesystem::exists(path.string() + ".meta.json"));

  auto code_of = [](std::vector<uint8_t> b) {
    try {
      deserialize_splats(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK(code_of(bad) == ErrorCode::kBadMagic);
  bad = bytes;
  bad[4] = 2;
  CHECK(code_of(bad) == ErrorCode::kVersionMismatch);
  bad.assign(bytes.begin(), bytes.end() - 3);
  CHECK(code_of(bad) == ErrorCode::kTruncated);
}
