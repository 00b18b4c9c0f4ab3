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


#ifndef SPLATPERC_FEATURES_H_
#define SPLATPERC_FEATURES_H_

// Fixed multi-scale filter bank. Each pyramid level carries, in order:
//   0 luminance
//   1 rectified center-surround (difference of Gaussians)
//   2..5 rectified oriented first derivatives at 0, 45, 90 and 135 degrees
// and level 0 of a color input appends B-Y and R-Y. Orientation 0 is the
// derivative along x (it responds to vertical edges); 90 is along y.

#include <vector>

#include "json.hpp"
#include "splatperc/image.h"
#include "splatperc/kernels.h"

namespace splatperc {

struct FilterBankSpec {
  int num_levels = 3;
  double dog_sigma_center = 1.0;
  double dog_sigma_surround = 2.0;
  double derivative_sigma = 1.0;
  int dog_radius = 6;          // 13x13
  int derivative_radius = 3;   // 7x7
  double rectifier_eps = 1e-3;
  // Off turns the bank into a linear map (rectifier replaced by identity).
  bool rectify = true;
  bool chroma = true;

  bool operator==(const FilterBankSpec&) const = default;
};

void to_json(nlohmann::json& j, const FilterBankSpec& s);
void from_json(const nlohmann::json& j, FilterBankSpec& s);
void validate(const FilterBankSpec& s);

enum FeatureChannel : int {
  kLuminance = 0,
  kCenterSurround,
  kDeriv0,
  kDeriv45,
  kDeriv90,
  kDeriv135,
  kChromaBlue,
  kChromaRed,
};
inline constexpr int kChannelsPerLevel = 6;

struct FeatureLevel {
  int height = 0;
  int width = 0;
  std::vector<Plane> channels;
};

struct FeatureStack {
  std::vector<FeatureLevel> levels;

  size_t total_size() const;
  bool same_shape(const FeatureStack& o) const;
};

// Number of channels on a level for an input with `input_channels` planes.
int feature_channel_count(const FilterBankSpec& spec, int level,
                          int input_channels);

FeatureStack extract(const ImageBuffer& img, const FilterBankSpec& spec);

// Gradient of <upstream, extract(img)> with respect to img.
ImageBuffer extract_backward(const ImageBuffer& img, const FilterBankSpec& spec,
                             const FeatureStack& upstream);

// Zero stack with the shape extract() would produce.
FeatureStack zero_features_like(const FeatureStack& f);

// The 2D kernels the bank applies to luminance, indexed by FeatureChannel
// (pass-through channels get the 1x1 identity).
std::vector<Kernel2D> bank_kernels(const FilterBankSpec& spec);

// Upper bound on max |extract(a) - extract(b)| on one channel in terms of
// max |a - b|: the absolute sum of the channel's kernel times the absolute
// sum of the color weights feeding it.
double channel_lipschitz_bound(const FilterBankSpec& spec, int level,
                               int channel, int input_channels);

}  // namespace splatperc

#endif  // SPLATPERC_FEATURES_H_
