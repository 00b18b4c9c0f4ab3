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

#include "splatperc/kernels.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>

#include "splatperc/error.h"

namespace splatperc {

double Kernel2D::abs_sum() const {
  double s = 0.0;
  for (double t : taps) s += std::abs(t);
  return s;
}

double Kernel2D::sum() const {
  return std::accumulate(taps.begin(), taps.end(), 0.0);
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

Kernel1D gaussian_kernel_1d(double sigma, int radius) {
  Kernel1D k;
  if (sigma <= 0.0 || radius <= 0) {
    k.radius = 0;
    k.taps = {1.0};
    return k;
  }
  k.radius = radius;
  k.taps.resize(2 * radius + 1);
  double total = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    const double v = std::exp(-0.5 * d * d / (sigma * sigma));
    k.taps[d + radius] = v;
    total += v;
  }
  for (double& t : k.taps) t /= total;
  return k;
}

Kernel1D gaussian_kernel_1d(double sigma) {
  if (sigma <= 0.0) return gaussian_kernel_1d(0.0, 0);
  return gaussian_kernel_1d(sigma, static_cast<int>(std::ceil(3.0 * sigma)));
}

namespace {

Plane reflect_pad(const Plane& in, int r) {
  Plane padded(in.height + 2 * r, in.width + 2 * r);
#pragma omp parallel for schedule(static)
  for (int py = 0; py < padded.height; ++py) {
    const int sy = reflect_index(py - r, in.height);
    for (int px = 0; px < padded.width; ++px) {
      padded.at(py, px) = in.at(sy, reflect_index(px - r, in.width));
    }
  }
  return padded;
}

// Adjoint of reflect_pad: every padded cell is added back to its source.
Plane fold_padding(const Plane& padded, int r, int height, int width) {
  Plane out(height, width);
  for (int py = 0; py < padded.height; ++py) {
    const int sy = reflect_index(py - r, height);
    for (int px = 0; px < padded.width; ++px) {
      out.at(sy, reflect_index(px - r, width)) += padded.at(py, px);
    }
  }
  return out;
}

std::vector<int> reflect_table(int n, int r) {
  std::vector<int> t(n + 2 * r);
  for (int i = 0; i < n + 2 * r; ++i) t[i] = reflect_index(i - r, n);
  return t;
}

// Row pass of a reflect-padded 1D correlation.
Plane correlate_rows(const Plane& in, const Kernel1D& k) {
  Plane out(in.height, in.width);
  const int r = k.radius, w = in.width, side = 2 * r + 1;
  const std::vector<int> src = reflect_table(w, r);
  const double* taps = k.taps.data();
#pragma omp parallel
  {
    std::vector<double> row(w + 2 * r);
#pragma omp for schedule(static)
    for (int y = 0; y < in.height; ++y) {
      const double* line = &in.data[static_cast<size_t>(y) * w];
      for (int i = 0; i < w + 2 * r; ++i) row[i] = line[src[i]];
      double* o = &out.data[static_cast<size_t>(y) * w];
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = 0; t < side; ++t) acc += taps[t] * row[x + t];
        o[x] = acc;
      }
    }
  }
  return out;
}

Plane correlate_cols(const Plane& in, const Kernel1D& k) {
  Plane out(in.height, in.width);
  const int r = k.radius, w = in.width;
  const std::vector<int> src = reflect_table(in.height, r);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) {
    double* o = &out.data[static_cast<size_t>(y) * w];
    for (int d = -r; d <= r; ++d) {
      const double wt = k.at(d);
      const double* line = &in.data[static_cast<size_t>(src[y + d + r]) * w];
      for (int x = 0; x < w; ++x) o[x] += wt * line[x];
    }
  }
  return out;
}

// Adjoints scatter into a padded buffer (one row or column band per thread)
// and then fold the padding back serially, so the result is independent of
// the thread count.
Plane correlate_rows_adjoint(const Plane& g, const Kernel1D& k) {
  const int r = k.radius, w = g.width, side = 2 * r + 1;
  const int pw = w + 2 * r;
  const std::vector<int> dst = reflect_table(w, r);
  const double* taps = k.taps.data();
  Plane out(g.height, w);
#pragma omp parallel
  {
    std::vector<double> row(pw);
#pragma omp for schedule(static)
    for (int y = 0; y < g.height; ++y) {
      std::fill(row.begin(), row.end(), 0.0);
      const double* line = &g.data[static_cast<size_t>(y) * w];
      for (int x = 0; x < w; ++x) {
        const double v = line[x];
        for (int t = 0; t < side; ++t) row[x + t] += taps[t] * v;
      }
      double* o = &out.data[static_cast<size_t>(y) * w];
      for (int i = 0; i < pw; ++i) o[dst[i]] += row[i];
    }
  }
  return out;
}

Plane correlate_cols_adjoint(const Plane& g, const Kernel1D& k) {
  const int r = k.radius, w = g.width;
  Plane padded(g.height + 2 * r, w);
#pragma omp parallel for schedule(static)
  for (int py = 0; py < padded.height; ++py) {
    double* o = &padded.data[static_cast<size_t>(py) * w];
    for (int d = -r; d <= r; ++d) {
      const int y = py - r - d;
      if (y < 0 || y >= g.height) continue;
      const double wt = k.at(d);
      const double* line = &g.data[static_cast<size_t>(y) * w];
      for (int x = 0; x < w; ++x) o[x] += wt * line[x];
    }
  }
  const std::vector<int> dst = reflect_table(g.height, r);
  Plane out(g.height, w);
  for (int py = 0; py < padded.height; ++py) {
    double* o = &out.data[static_cast<size_t>(dst[py]) * w];
    const double* line = &padded.data[static_cast<size_t>(py) * w];
    for (int x = 0; x < w; ++x) o[x] += line[x];
  }
  return out;
}

struct PoolWindow {
  int radius = 0;
  std::vector<double> w;  // normalized 1D weights, size 2*radius+1
};

PoolWindow pool_window(double sigma) {
  PoolWindow pw;
  if (!(sigma > 0.0)) {
    pw.w = {1.0};
    return pw;
  }
  const Kernel1D k = gaussian_kernel_1d(sigma);
  pw.radius = k.radius;
  pw.w = k.taps;
  return pw;
}

// One window per distinct width in the map.
class PoolWindows {
 public:
  explicit PoolWindows(const Plane& sigma) : index_(sigma.size()) {
    std::map<double, int> seen;
    for (size_t i = 0; i < sigma.size(); ++i) {
      auto [it, fresh] = seen.emplace(sigma.data[i], static_cast<int>(windows_.size()));
      if (fresh) windows_.push_back(pool_window(sigma.data[i]));
      index_[i] = it->second;
    }
  }
  const PoolWindow& at(size_t i) const { return windows_[index_[i]]; }
  int max_radius() const {
    int r = 0;
    for (const PoolWindow& w : windows_) r = std::max(r, w.radius);
    return r;
  }

 private:
  std::vector<PoolWindow> windows_;
  std::vector<int> index_;
};

void check_sigma(const Plane& in, const Plane& sigma) {
  if (!in.same_shape(sigma)) {
    throw Error(ErrorCode::kShapeMismatch, "sigma map does not match plane");
  }
}

}  // namespace

Plane correlate(const Plane& in, const Kernel2D& k) {
  const int r = k.radius;
  const Plane padded = reflect_pad(in, r);
  Plane out(in.height, in.width);
  const int side = 2 * r + 1;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) {
    for (int ky = 0; ky < side; ++ky) {
      const double* row = &padded.data[static_cast<size_t>(y + ky) * padded.width];
      const double* taps = &k.taps[static_cast<size_t>(ky) * side];
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (int kx = 0; kx < side; ++kx) acc += taps[kx] * row[x + kx];
        out.at(y, x) += acc;
      }
    }
  }
  return out;
}

Plane correlate_adjoint(const Plane& g, const Kernel2D& k) {
  const int r = k.radius;
  const int side = 2 * r + 1;
  Plane padded(g.height + 2 * r, g.width + 2 * r);
#pragma omp parallel for schedule(static)
  for (int py = 0; py < padded.height; ++py) {
    for (int ky = 0; ky < side; ++ky) {
      const int y = py - ky;
      if (y < 0 || y >= g.height) continue;
      const double* taps = &k.taps[static_cast<size_t>(ky) * side];
      for (int px = 0; px < padded.width; ++px) {
        double acc = 0.0;
        const int x_lo = std::max(0, px - side + 1);
        const int x_hi = std::min(g.width - 1, px);
        for (int x = x_lo; x <= x_hi; ++x) acc += taps[px - x] * g.at(y, x);
        padded.at(py, px) += acc;
      }
    }
  }
  return fold_padding(padded, r, g.height, g.width);
}

Plane correlate_separable(const Plane& in, const Kernel1D& kx,
                          const Kernel1D& ky) {
  return correlate_cols(correlate_rows(in, kx), ky);
}

Plane correlate_separable_adjoint(const Plane& g, const Kernel1D& kx,
                                  const Kernel1D& ky) {
  return correlate_rows_adjoint(correlate_cols_adjoint(g, ky), kx);
}

Plane correlate_valid(const Plane& in, const Kernel1D& k) {
  const int r = k.radius;
  const int oh = in.height - 2 * r;
  const int ow = in.width - 2 * r;
  if (oh <= 0 || ow <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "plane smaller than window");
  }
  Plane tmp(in.height, ow);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) acc += k.at(d) * in.at(y, x + r + d);
      tmp.at(y, x) = acc;
    }
  }
  Plane out(oh, ow);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    for (int d = -r; d <= r; ++d) {
      const double w = k.at(d);
      for (int x = 0; x < ow; ++x) out.at(y, x) += w * tmp.at(y + r + d, x);
    }
  }
  return out;
}

Plane correlate_valid_adjoint(const Plane& g, const Kernel1D& k, int in_height,
                              int in_width) {
  const int r = k.radius;
  Plane gtmp(in_height, g.width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in_height; ++y) {
    for (int d = -r; d <= r; ++d) {
      const int oy = y - r - d;
      if (oy < 0 || oy >= g.height) continue;
      const double w = k.at(d);
      for (int x = 0; x < g.width; ++x) gtmp.at(y, x) += w * g.at(oy, x);
    }
  }
  Plane out(in_height, in_width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in_height; ++y) {
    for (int x = 0; x < in_width; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int ox = x - r - d;
        if (ox >= 0 && ox < g.width) acc += k.at(d) * gtmp.at(y, ox);
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

Plane pool_variable(const Plane& in, const Plane& sigma) {
  check_sigma(in, sigma);
  const PoolWindows windows(sigma);
  const int pr = windows.max_radius();
  const Plane padded = reflect_pad(in, pr);
  Plane out(in.height, in.width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const PoolWindow& pw = windows.at(static_cast<size_t>(y) * in.width + x);
      const int r = pw.radius;
      const double* w = pw.w.data();
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const double* line = &padded.data[static_cast<size_t>(y + dy + pr) * padded.width +
                                          (x - r + pr)];
        double row = 0.0;
        for (int t = 0; t <= 2 * r; ++t) row += w[t] * line[t];
        acc += w[dy + r] * row;
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

Plane pool_variable_adjoint(const Plane& g, const Plane& sigma) {
  check_sigma(g, sigma);
  // Serial scatter: windows differ per pixel so there is no cheap gather.
  const PoolWindows windows(sigma);
  const int pr = windows.max_radius();
  Plane padded(g.height + 2 * pr, g.width + 2 * pr);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double gv = g.at(y, x);
      if (gv == 0.0) continue;
      const PoolWindow& pw = windows.at(static_cast<size_t>(y) * g.width + x);
      const int r = pw.radius;
      const double* w = pw.w.data();
      for (int dy = -r; dy <= r; ++dy) {
        double* line = &padded.data[static_cast<size_t>(y + dy + pr) * padded.width +
                                    (x - r + pr)];
        const double wy = w[dy + r] * gv;
        for (int t = 0; t <= 2 * r; ++t) line[t] += wy * w[t];
      }
    }
  }
  return fold_padding(padded, pr, g.height, g.width);
}

Plane downsample2x(const Plane& in) {
  Plane out(in.height / 2, in.width / 2);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(y, x) = 0.25 * (in.at(2 * y, 2 * x) + in.at(2 * y, 2 * x + 1) +
                             in.at(2 * y + 1, 2 * x) + in.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

Plane downsample2x_adjoint(const Plane& g, int in_height, int in_width) {
  Plane out(in_height, in_width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double v = 0.25 * g.at(y, x);
      out.at(2 * y, 2 * x) = v;
      out.at(2 * y, 2 * x + 1) = v;
      out.at(2 * y + 1, 2 * x) = v;
      out.at(2 * y + 1, 2 * x + 1) = v;
    }
  }
  return out;
}

namespace reference {

Plane correlate(const Plane& in, const Kernel2D& k) {
  const int r = k.radius;
  Plane out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          acc += k.at(dy, dx) * in.at(reflect_index(y + dy, in.height),
                                      reflect_index(x + dx, in.width));
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

Plane correlate_adjoint(const Plane& g, const Kernel2D& k) {
  const int r = k.radius;
  Plane out(g.height, g.width);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          out.at(reflect_index(y + dy, g.height), reflect_index(x + dx, g.width)) +=
              k.at(dy, dx) * g.at(y, x);
        }
      }
    }
  }
  return out;
}

Plane correlate_separable(const Plane& in, const Kernel1D& kx,
                          const Kernel1D& ky) {
  Kernel2D k;
  k.radius = std::max(kx.radius, ky.radius);
  const int side = 2 * k.radius + 1;
  k.taps.assign(static_cast<size_t>(side) * side, 0.0);
  for (int dy = -ky.radius; dy <= ky.radius; ++dy) {
    for (int dx = -kx.radius; dx <= kx.radius; ++dx) {
      k.taps[static_cast<size_t>(dy + k.radius) * side + dx + k.radius] =
          ky.at(dy) * kx.at(dx);
    }
  }
  return reference::correlate(in, k);
}

Plane correlate_separable_adjoint(const Plane& g, const Kernel1D& kx,
                                  const Kernel1D& ky) {
  Kernel2D k;
  k.radius = std::max(kx.radius, ky.radius);
  const int side = 2 * k.radius + 1;
  k.taps.assign(static_cast<size_t>(side) * side, 0.0);
  for (int dy = -ky.radius; dy <= ky.radius; ++dy) {
    for (int dx = -kx.radius; dx <= kx.radius; ++dx) {
      k.taps[static_cast<size_t>(dy + k.radius) * side + dx + k.radius] =
          ky.at(dy) * kx.at(dx);
    }
  }
  return reference::correlate_adjoint(g, k);
}

Plane pool_variable(const Plane& in, const Plane& sigma) {
  check_sigma(in, sigma);
  Plane out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const double s = sigma.at(y, x);
      if (!(s > 0.0)) {
        out.at(y, x) = in.at(y, x);
        continue;
      }
      const int r = static_cast<int>(std::ceil(3.0 * s));
      double acc = 0.0, total = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (s * s));
          total += w;
          acc += w * in.at(reflect_index(y + dy, in.height),
                           reflect_index(x + dx, in.width));
        }
      }
      out.at(y, x) = acc / total;
    }
  }
  return out;
}

}  // namespace reference

}  // namespace splatperc
