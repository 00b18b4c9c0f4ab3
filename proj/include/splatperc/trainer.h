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


#ifndef SPLATPERC_TRAINER_H_
#define SPLATPERC_TRAINER_H_

// Fitting loop: Adam over splat parameters, warm-up with the original loss,
// and gradient-driven densification with opacity pruning.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "splatperc/error.h"
#include "splatperc/image.h"
#include "splatperc/losses.h"
#include "splatperc/splat.h"

namespace splatperc {

struct TrainConfig {
  int iterations = 2000;
  // Negative: use warmup_fraction of iterations.
  int warmup_iterations = -1;
  double warmup_fraction = 0.15;
  // Per ParamGroup (position, log_scale, rotation, color, opacity). The
  // position rate is in units of the image diagonal per step and decays
  // exponentially to position_lr_final_ratio of itself.
  std::array<double, 5> lr = {2e-3, 5e-3, 1e-2, 1e-2, 2.5e-2};
  double position_lr_final_ratio = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int densify_interval = 100;
  // Threshold on the mean |dL/d position| of visible iterations, with the
  // position measured in image diagonals.
  double densify_grad_threshold = 2e-4;
  // Largest axis above this fraction of the diagonal: split, else clone.
  double split_scale_threshold = 0.01;
  double split_factor = 1.6;
  double prune_opacity_threshold = 0.005;
  double densify_stop_fraction = 0.5;
  int max_splats = 4096;
  int init_count = 64;
  Color background = {0.0, 0.0, 0.0};

  int warmup() const;
  int densify_stop() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void validate(const TrainConfig& c);

// Running sums of per-splat positional gradient magnitudes.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<int> count;

  void reset(size_t n);
  double mean(size_t i) const { return count[i] ? grad_sum[i] / count[i] : 0.0; }
};

struct DensifyResult {
  SplatSet splats;
  // Per output splat: index of the input splat it continues (same
  // optimizer state), or -1 for a newly created splat.
  std::vector<int> origin;
  int clones = 0;
  int splits = 0;
  int pruned = 0;
};

DensifyResult densify_and_prune(const SplatSet& splats, const DensifyStats& stats,
                                const TrainConfig& cfg, double diagonal);

SplatSet init_splats(const ImageBuffer& target, int count, uint64_t seed);

struct DensifyEvent {
  int iteration = 0;
  int clones = 0, splits = 0, pruned = 0, count_after = 0;
};

struct TrainReport {
  std::string loss_name;
  double gamma = 1.0;
  int iterations = 0;
  int warmup_iterations = 0;
  uint64_t seed = 0;
  std::vector<double> loss;
  std::vector<int> splat_count;
  std::vector<DensifyEvent> densify_events;
  // Mean of the WD-R gradient ratio over post-warm-up iterations (WD-R only).
  double mean_grad_ratio = 0.0;
  double final_psnr = 0.0;
  double final_ssim = 0.0;
  double final_wd0 = 0.0;
  double final_wd4 = 0.0;
  int final_count = 0;
  // Not written by report_to_json: it is the only non-reproducible field.
  double wall_time_s = 0.0;
};

nlohmann::json report_to_json(const TrainReport& r);
std::string report_to_csv(const TrainReport& r);

// Extension points used by rate-distortion training.
struct TrainHooks {
  // Parameters to render with at this iteration (default: the splats).
  std::function<SplatSet(const SplatSet&, int iteration)> perturb;
  // Adds an extra objective's gradient (w.r.t. the stored parameters) into
  // grads and returns its value. `rendered` is what perturb returned.
  std::function<double(const SplatSet& splats, const SplatSet& rendered,
                       std::vector<ParamVector>& grads, int iteration)>
      extra;
};

// Thrown when the objective becomes non-finite; carries the offending state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, SplatSet state, int iteration)
      : Error(ErrorCode::kDivergence, what), state_(std::move(state)),
        iteration_(iteration) {}
  const SplatSet& state() const { return state_; }
  int iteration() const { return iteration_; }

 private:
  SplatSet state_;
  int iteration_;
};

struct FitResult {
  SplatSet splats;
  TrainReport report;
};

FitResult fit(const ImageBuffer& target, const SplatSet& init, const LossConfig& loss,
              const TrainConfig& cfg, uint64_t seed, const TrainHooks* hooks = nullptr);
// Initializes cfg.init_count splats from `seed` first.
FitResult fit(const ImageBuffer& target, const LossConfig& loss, const TrainConfig& cfg,
              uint64_t seed, const TrainHooks* hooks = nullptr);

// PSNR, SSIM, WD(0), WD(4) and count of a fitted set against the target.
void fill_final_metrics(const ImageBuffer& target, const SplatSet& splats,
                        const Color& background, TrainReport& r);

double image_diagonal(int width, int height);

}  // namespace splatperc

#endif  // SPLATPERC_TRAINER_H_
