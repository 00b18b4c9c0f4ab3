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


#ifndef SPLATPERC_RATECODEC_H_
#define SPLATPERC_RATECODEC_H_

// Rate model for splat parameters: per-group uniform quantization with a
// Gaussian prior, additive-noise training, rate-distortion fitting and the
// SPQ1 range-coded file format.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "splatperc/image.h"
#include "splatperc/losses.h"
#include "splatperc/splat.h"
#include "splatperc/trainer.h"

namespace splatperc {

struct GroupPrior {
  double step = 0.125;  // quantization step, a power of two
  double mean = 0.0;
  double scale = 1.0;  // >= kMinPriorScale
};

inline constexpr double kMinPriorScale = 1e-4;

struct RateModel {
  // Indexed by ParamGroup.
  std::array<GroupPrior, kNumParamGroups> groups;

  RateModel();
  const GroupPrior& prior(int param) const { return groups[static_cast<int>(group_of(param))]; }
  // Sets each group's mean and scale from the sample moments of `splats`;
  // the scale is at least one quantization step.
  void fit_prior(const SplatSet& splats);
};

void to_json(nlohmann::json& j, const RateModel& m);
void from_json(const nlohmann::json& j, RateModel& m);
void validate(const RateModel& m);

// Rotation folded into [-pi/2, pi/2); the covariance is unchanged.
double wrap_rotation(double theta);

// Parameters as coded: wrapped rotation, then step * round(value / step).
SplatSet quantize(const SplatSet& splats, const RateModel& model);
// Wrapped parameters plus independent U(-step/2, step/2) noise.
SplatSet add_quantization_noise(const SplatSet& splats, const RateModel& model, uint64_t seed);

enum class RateMode { kTrain, kEval };

struct RateResult {
  double bits = 0.0;
  // d bits / d parameter, passed straight through the noise or rounding.
  std::vector<ParamVector> grad;
  std::array<double, kNumParamGroups> grad_mean{};
  std::array<double, kNumParamGroups> grad_scale{};
};

// Bits of parameter values already perturbed or quantized.
RateResult rate_at(const SplatSet& coded_values, const RateModel& model);
// Train mode draws noise from `seed`; eval mode quantizes.
RateResult rate_bits(const SplatSet& splats, const RateModel& model, RateMode mode,
                     uint64_t seed = 0);

// SPQ1 container. Splats are stored in blend order; decoding assigns depth
// keys (i + 0.5) / n, which preserves that order.
std::vector<uint8_t> encode_quantized(const SplatSet& splats, const RateModel& model);
struct DecodedSplats {
  SplatSet splats;
  RateModel model;
};
DecodedSplats decode_quantized(const std::vector<uint8_t>& bytes);
void save_quantized(const SplatSet& splats, const RateModel& model,
                    const std::filesystem::path& path);
DecodedSplats load_quantized(const std::filesystem::path& path);
// Bytes of the range-coded payload inside an SPQ1 buffer.
size_t spq1_payload_size(const std::vector<uint8_t>& bytes);
inline constexpr size_t kSpq1HeaderBytes = 16 + kNumParamGroups * 20 + 4;

struct RdConfig {
  double lambda = 1.0 / 9.0;
  std::vector<double> sweep = {1.0 / 9.0, 1.0 / 27.0, 1.0 / 81.0, 1.0 / 243.0};
  TrainConfig train;
  LossConfig loss;
  RateModel model;
  // Adam step for the prior means and log scales.
  double prior_lr = 5e-2;
};

void to_json(nlohmann::json& j, const RdConfig& c);
void from_json(const nlohmann::json& j, RdConfig& c);
void validate(const RdConfig& c);

struct RdReport {
  double lambda = 0.0;
  double eval_bits = 0.0;
  double bits_per_pixel = 0.0;
  size_t bytes = 0;
  // Metrics of the dequantized splats against the target.
  double psnr = 0.0;
  double ssim = 0.0;
  double wd0 = 0.0;
  double wd4 = 0.0;
  TrainReport train;
};

struct RdResult {
  SplatSet splats;
  RateModel model;
  RdReport report;
};

// Minimizes distortion + lambda * bits per pixel, training the prior jointly.
// lambda = 0 reduces to fit; the prior is then set from the final moments.
RdResult fit_rd(const ImageBuffer& target, const RdConfig& cfg, double lambda, uint64_t seed);
// One fit per sweep value, in increasing lambda.
std::vector<RdResult> rd_sweep(const ImageBuffer& target, const RdConfig& cfg, uint64_t seed);
nlohmann::json rd_report_to_json(const RdReport& r);

}  // namespace splatperc

#endif  // SPLATPERC_RATECODEC_H_
