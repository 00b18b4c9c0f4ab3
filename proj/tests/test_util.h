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


#ifndef SPLATPERC_TESTS_TEST_UTIL_H_
#define SPLATPERC_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "splatperc/gradcheck.h"
#include "splatperc/image.h"

namespace splatperc::testing {

inline ImageBuffer random_image(int h, int w, int c, uint64_t seed,
                                double lo = 0.05, double hi = 0.95) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ImageBuffer img(h, w, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Smooth random image: a few random low-frequency cosines per channel.
inline ImageBuffer smooth_random_image(int h, int w, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(h, w, c, 0.5);
  for (int ch = 0; ch < c; ++ch) {
    for (int t = 0; t < 4; ++t) {
      const double fx = 6.0 * u(rng) / w, fy = 6.0 * u(rng) / h;
      const double ph = 6.283 * u(rng), a = 0.1 * u(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          img.at(y, x, ch) += a * std::cos(6.283185307 * (fx * x + fy * y) + ph);
    }
  }
  return img;
}

struct ProbeResult {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double error() const { return relative_error(analytic, numeric); }
};

// Compares grad against central differences of f at `probes` random samples.
template <class F>
ProbeResult probe_gradient(F&& f, ImageBuffer& x, const ImageBuffer& grad,
                           int probes, uint64_t seed, double h = 1e-3) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<size_t> pick(0, x.size() - 1);
  ProbeResult r;
  for (int i = 0; i < probes; ++i) {
    const size_t k = pick(rng);
    r.analytic.push_back(grad.data[k]);
    r.numeric.push_back(central_difference(f, &x.data[k], h));
  }
  return r;
}

}  // namespace splatperc::testing

#endif  // SPLATPERC_TESTS_TEST_UTIL_H_
