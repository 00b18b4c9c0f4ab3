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

#ifndef SPLATPERC_KERNELS_H_
#define SPLATPERC_KERNELS_H_

// Data-parallel raster kernels. Every kernel in this header runs under
// OpenMP and produces results that do not depend on the thread count. The
// `reference` namespace holds straightforward serial versions of the same
// operators; they exist for tests and benchmarks.

#include <cstddef>
#include <vector>

namespace splatperc {

// Single-channel row-major raster.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Plane& o) const {
    return height == o.height && width == o.width;
  }
};

// Square 2D kernel of side 2*radius+1, row-major, correlation orientation:
// out(y,x) = sum_{dy,dx} taps(dy,dx) * in(y+dy, x+dx).
struct Kernel2D {
  int radius = 0;
  std::vector<double> taps;

  double at(int dy, int dx) const {
    const int side = 2 * radius + 1;
    return taps[static_cast<size_t>(dy + radius) * side + (dx + radius)];
  }
  double abs_sum() const;
  double sum() const;
};

struct Kernel1D {
  int radius = 0;
  std::vector<double> taps;

  double at(int d) const { return taps[static_cast<size_t>(d + radius)]; }
};

// Mirror index without edge repeat: -1 -> 1, n -> n-2. Works for any offset.
int reflect_index(int i, int n);

// Normalized 1D Gaussian truncated at radius ceil(3 sigma); sigma <= 0 gives
// the identity kernel.
Kernel1D gaussian_kernel_1d(double sigma);
Kernel1D gaussian_kernel_1d(double sigma, int radius);

// Reflect-padded "same" correlation and its exact adjoint.
Plane correlate(const Plane& in, const Kernel2D& k);
Plane correlate_adjoint(const Plane& grad_out, const Kernel2D& k);

// Reflect-padded separable correlation (rows with kx, then columns with ky).
Plane correlate_separable(const Plane& in, const Kernel1D& kx,
                          const Kernel1D& ky);
Plane correlate_separable_adjoint(const Plane& grad_out, const Kernel1D& kx,
                                  const Kernel1D& ky);

// "Valid" separable correlation: output is (H-2r) x (W-2r).
Plane correlate_valid(const Plane& in, const Kernel1D& k);
Plane correlate_valid_adjoint(const Plane& grad_out, const Kernel1D& k,
                              int in_height, int in_width);

// Gaussian pooling whose width varies per output pixel (reflect padded,
// truncated at 3 sigma and renormalized).
Plane pool_variable(const Plane& in, const Plane& sigma);
Plane pool_variable_adjoint(const Plane& grad_out, const Plane& sigma);

// 2x2 box average; odd trailing rows/columns are dropped.
Plane downsample2x(const Plane& in);
Plane downsample2x_adjoint(const Plane& grad_out, int in_height, int in_width);

namespace reference {

Plane correlate(const Plane& in, const Kernel2D& k);
Plane correlate_adjoint(const Plane& grad_out, const Kernel2D& k);
Plane correlate_separable(const Plane& in, const Kernel1D& kx,
                          const Kernel1D& ky);
Plane correlate_separable_adjoint(const Plane& grad_out, const Kernel1D& kx,
                                  const Kernel1D& ky);
Plane pool_variable(const Plane& in, const Plane& sigma);

}  // namespace reference

}  // namespace splatperc

#endif  // SPLATPERC_KERNELS_H_
