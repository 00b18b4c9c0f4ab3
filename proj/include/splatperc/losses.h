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


#ifndef SPLATPERC_LOSSES_H_
#define SPLATPERC_LOSSES_H_

// Distortion objectives between a reference x and a rendering x_hat. Every
// loss returns its value and the gradient with respect to x_hat.

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "splatperc/features.h"
#include "splatperc/image.h"
#include "splatperc/kernels.h"

namespace splatperc {

enum class LossKind { kOriginal, kComposite, kWd, kWdR };

const char* loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::kOriginal;
  double gamma = 1.0;
  std::array<double, 4> omega = {0.05, 0.30, 0.60, 0.10};
  double beta = 1.0 / 0.09;
  double sigma = 4.0;  // level-0 pixels
  // Gain on d_WD inside the wd and wd_r losses. WD is 1-homogeneous in the
  // features, so this is the feature-space scale; wd_metric uses 1.
  double wd_scale = 190.0;
  // Optional per-pixel pooling width at input resolution; overrides sigma.
  std::optional<Plane> sigma_map;
  // Provenance only; the CLI fills sigma_map from this file.
  std::string sigma_map_path;
  double sigma_map_scale = 8.0;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  std::array<double, 5> msssim_weights = {0.0448, 0.2856, 0.3001, 0.2363,
                                          0.1333};
  int msssim_max_scales = 5;
  FilterBankSpec bank;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void validate(const LossConfig& c);

struct LossValue {
  double value = 0.0;
  ImageBuffer grad;
  // Only for WD-R: ||grad wd|| / ||grad (beta * original)||.
  std::optional<double> grad_ratio;
};

LossValue loss_l1(const ImageBuffer& x, const ImageBuffer& x_hat);
LossValue loss_l2(const ImageBuffer& x, const ImageBuffer& x_hat);
// 1 - mean SSIM over "valid" windows and channels.
LossValue loss_ssim(const ImageBuffer& x, const ImageBuffer& x_hat,
                    const LossConfig& cfg = {});
// 1 - MS-SSIM. `scales` = 0 picks the largest count the image supports.
LossValue loss_msssim(const ImageBuffer& x, const ImageBuffer& x_hat,
                      const LossConfig& cfg = {}, int scales = 0);
int msssim_scale_count(int height, int width, const LossConfig& cfg);
LossValue loss_feat_pointwise(const ImageBuffer& x, const ImageBuffer& x_hat,
                              const FilterBankSpec& bank = {});
LossValue loss_wd(const ImageBuffer& x, const ImageBuffer& x_hat,
                  const LossConfig& cfg);
LossValue loss_original(const ImageBuffer& x, const ImageBuffer& x_hat,
                        const LossConfig& cfg = {});
LossValue loss_composite(const ImageBuffer& x, const ImageBuffer& x_hat,
                         const LossConfig& cfg = {});
LossValue loss_wd_r(const ImageBuffer& x, const ImageBuffer& x_hat,
                    const LossConfig& cfg);

double ssim_index(const ImageBuffer& x, const ImageBuffer& x_hat);
// WD metric at a constant pooling width, default filter bank.
double wd_metric(const ImageBuffer& x, const ImageBuffer& x_hat, double sigma);

// Mean over levels of the mean squared difference between per-location
// unit-normalized channel vectors.
double feature_pointwise_distance(const FeatureStack& a, const FeatureStack& b);

struct PooledLevel {
  std::vector<Plane> mu;
  std::vector<Plane> nu;
};
struct PooledStats {
  std::vector<PooledLevel> levels;
};

// Pooling width at each pyramid level.
struct SigmaSpec {
  double sigma = 0.0;
  const Plane* map = nullptr;  // level-0 resolution when set
};

PooledStats pool_stats(const FeatureStack& f, const SigmaSpec& sigma);

// Level-l width map: area-averaged l times, divided by 2^l, clamped at 0.
std::vector<Plane> sigma_pyramid(const Plane& map, int levels);

// Evaluates gamma * D(x, x_hat) for the configured kind (WD-R already
// carries gamma). Target-side work is done once at construction.
class Objective {
 public:
  Objective(const ImageBuffer& target, const LossConfig& cfg);
  ~Objective();
  Objective(Objective&&) noexcept;
  Objective& operator=(Objective&&) noexcept;

  LossValue evaluate(const ImageBuffer& x_hat) const;
  const LossConfig& config() const { return cfg_; }
  const ImageBuffer& target() const { return target_; }

 private:
  struct Cache;
  ImageBuffer target_;
  LossConfig cfg_;
  std::unique_ptr<Cache> cache_;
};

}  // namespace splatperc

#endif  // SPLATPERC_LOSSES_H_
