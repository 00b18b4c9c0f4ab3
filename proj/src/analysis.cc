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


#include "splatperc/analysis.h"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "splatperc/error.h"
#include "splatperc/losses.h"

namespace splatperc {
namespace {

constexpr double kEigenFloor = 1e-12;
constexpr double kSymmetryTol = 1e-9;

// exp(-sum q log q) written as total * exp(-sum q log lambda), which is exact
// for equal unit eigenvalues; rounding is kept inside [1, d].
double entropy_rank(const double* lambda, int d) {
  double total = 0.0;
  for (int i = 0; i < d; ++i) total += lambda[i];
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += lambda[i] / total * std::log(lambda[i]);
  return std::clamp(total * std::exp(-s), 1.0, static_cast<double>(d));
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

ErankValue erank(const std::vector<double>& cov, int d) {
  if (d != 2 && d != 3) throw Error(ErrorCode::kInvalidArgument, "erank needs d in {2, 3}");
  if (static_cast<int>(cov.size()) != d * d) {
    throw Error(ErrorCode::kShapeMismatch, "covariance must have d*d entries");
  }
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  double scale = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double v = cov[i * d + j];
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite covariance");
      m(i, j) = v;
      scale = std::max(scale, std::abs(v));
    }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(m(i, j) - m(j, i)) > kSymmetryTol * std::max(1.0, scale)) {
        throw Error(ErrorCode::kNotSymmetric, "covariance is not symmetric");
      }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.topLeftCorner(d, d));
  double lambda[3];
  ErankValue out;
  for (int i = 0; i < d; ++i) {
    double l = eig.eigenvalues()(i);
    if (l < -kSymmetryTol * std::max(1.0, scale)) {
      throw Error(ErrorCode::kNotPositiveSemidefinite, "covariance is not positive semi-definite");
    }
    if (l < kEigenFloor) {
      l = kEigenFloor;
      out.clamped = true;
    }
    lambda[i] = l;
  }
  out.value = entropy_rank(lambda, d);
  return out;
}

double erank(const Covariance2& c) { return erank({c.xx, c.xy, c.xy, c.yy}, 2).value; }

double erank_from_scales(double s1, double s2) {
  const double lambda[2] = {std::max(s1 * s1, kEigenFloor), std::max(s2 * s2, kEigenFloor)};
  return entropy_rank(lambda, 2);
}

ErankResult erank_histogram(const SplatSet& splats, int bins) {
  if (splats.empty()) throw Error(ErrorCode::kEmptyInput, "no splats");
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 1");
  ErankResult r;
  r.counts.assign(bins, 0);
  for (const Splat& s : splats.splats) {
    const double a = s.scale1() * s.scale1(), b = s.scale2() * s.scale2();
    r.energies.push_back({a, b});
    r.normalized.push_back({a / (a + b), b / (a + b)});
    const double e = erank_from_scales(s.scale1(), s.scale2());
    r.values.push_back(e);
    const int bin = static_cast<int>((e - r.lo) / (r.hi - r.lo) * bins);
    ++r.counts[std::clamp(bin, 0, bins - 1)];
  }
  std::vector<double> sorted = r.values;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double sum = 0.0;
  for (double v : r.values) sum += v;
  r.mean = sum / n;
  const int peak = *std::max_element(r.counts.begin(), r.counts.end());
  for (int c : r.counts) r.histogram.push_back(static_cast<double>(c) / peak);
  return r;
}

std::string histogram_gnuplot(const ErankResult& r) {
  std::ostringstream out;
  out.precision(10);
  out << "# erank  relative_frequency  (median " << r.median << ")\n";
  const double width = (r.hi - r.lo) / r.histogram.size();
  for (size_t i = 0; i < r.histogram.size(); ++i)
    out << r.lo + (i + 0.5) * width << ' ' << r.histogram[i] << '\n';
  return out.str();
}

nlohmann::json erank_to_json(const ErankResult& r) {
  return {{"count", r.values.size()}, {"median", r.median}, {"mean", r.mean},
          {"range", {r.lo, r.hi}},   {"counts", r.counts},  {"histogram", r.histogram},
          {"values", r.values}};
}

std::vector<CompareRow> compare_report(
    const ImageBuffer& target, const std::vector<std::pair<std::string, SplatSet>>& fits,
    const Color& background) {
  const ImageBuffer t = to_rgb(target);
  std::vector<CompareRow> rows;
  for (const auto& [name, splats] : fits) {
    const ImageBuffer img = render(splats, t.width, t.height, background).image;
    CompareRow row;
    row.name = name;
    row.count = static_cast<int>(splats.size());
    row.psnr = psnr(t, img);
    row.ssim = ssim_index(t, img);
    row.wd0 = wd_metric(t, img, 0.0);
    row.wd4 = wd_metric(t, img, 4.0);
    row.median_erank = splats.empty() ? 0.0 : erank_histogram(splats).median;
    rows.push_back(row);
  }
  return rows;
}

std::string compare_to_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "name,splats,psnr,ssim,wd_sigma0,wd_sigma4,median_erank\n";
  for (const CompareRow& r : rows)
    out << r.name << ',' << r.count << ',' << number(r.psnr) << ',' << number(r.ssim) << ','
        << number(r.wd0) << ',' << number(r.wd4) << ',' << number(r.median_erank) << '\n';
  return out.str();
}

nlohmann::json compare_to_json(const std::vector<CompareRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const CompareRow& r : rows)
    out.push_back({{"name", r.name},
                   {"splats", r.count},
                   {"psnr", std::isinf(r.psnr) ? nlohmann::json("inf") : nlohmann::json(r.psnr)},
                   {"ssim", r.ssim},
                   {"wd_sigma0", r.wd0},
                   {"wd_sigma4", r.wd4},
                   {"median_erank", r.median_erank}});
  return out;
}

}  // namespace splatperc
