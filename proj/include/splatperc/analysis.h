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


#ifndef SPLATPERC_ANALYSIS_H_
#define SPLATPERC_ANALYSIS_H_

// Anisotropy statistics of fitted splats and side-by-side metric reports.

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "splatperc/image.h"
#include "splatperc/splat.h"

namespace splatperc {

struct ErankValue {
  double value = 0.0;
  // True when an eigenvalue was raised to the 1e-12 floor.
  bool clamped = false;
};

// Effective rank exp(-sum q log q), q = eigenvalues / trace, of a symmetric
// positive semi-definite d x d matrix given row-major, d in {2, 3}.
ErankValue erank(const std::vector<double>& cov, int d);
double erank(const Covariance2& cov);
// Same, from the squared axis scales of a splat.
double erank_from_scales(double s1, double s2);

struct ErankResult {
  std::vector<double> values;
  // Per splat: eigen-energies (s1^2, s2^2) and their normalized form.
  std::vector<std::array<double, 2>> energies;
  std::vector<std::array<double, 2>> normalized;
  double median = 0.0;
  double mean = 0.0;
  double lo = 1.0, hi = 2.0;
  std::vector<int> counts;
  // counts divided by the largest count.
  std::vector<double> histogram;
};

ErankResult erank_histogram(const SplatSet& splats, int bins = 50);
// Two columns: bin center, normalized frequency.
std::string histogram_gnuplot(const ErankResult& r);
nlohmann::json erank_to_json(const ErankResult& r);

struct CompareRow {
  std::string name;
  int count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double wd0 = 0.0;
  double wd4 = 0.0;
  double median_erank = 0.0;
};

std::vector<CompareRow> compare_report(
    const ImageBuffer& target, const std::vector<std::pair<std::string, SplatSet>>& fits,
    const Color& background = {0.0, 0.0, 0.0});
std::string compare_to_csv(const std::vector<CompareRow>& rows);
nlohmann::json compare_to_json(const std::vector<CompareRow>& rows);

}  // namespace splatperc

#endif  // SPLATPERC_ANALYSIS_H_
