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


#include "splatperc/ratecodec.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "splatperc/error.h"
#include "splatperc/range_coder.h"

namespace splatperc {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'Q', '1'};
constexpr uint32_t kVersion = 1;
constexpr size_t kMaxBins = kFreqTotal / 2;

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double upper_tail(double z) { return 0.5 * std::erfc(z * M_SQRT1_2); }
double density(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// log P(b < Z < a) for standard normal Z and its partials in a and b.
struct LogBin {
  double logp, da, db;
};

// Far right tail, b > 0 large: Mills-ratio expansion of log Q(b).
LogBin far_tail(double a, double b) {
  const double log_qb = -0.5 * b * b - std::log(b * std::sqrt(2.0 * M_PI));
  const double ratio = std::exp(-0.5 * (a * a - b * b)) * b / a;
  return {log_qb + std::log1p(-std::min(ratio, 1.0 - 1e-16)), 0.0, -b - 1.0 / b};
}

LogBin log_bin(double a, double b) {
  double p;
  if (b > 0.0) {
    p = upper_tail(b) - upper_tail(a);
  } else if (a < 0.0) {
    p = upper_tail(-a) - upper_tail(-b);
  } else {
    p = 1.0 - upper_tail(a) - upper_tail(-b);
  }
  if (p > 1e-280) return {std::log(p), density(a) / p, -density(b) / p};
  if (b > 0.0) return far_tail(a, b);
  const LogBin m = far_tail(-b, -a);
  return {m.logp, -m.db, -m.da};
}

void check_step(double step) {
  int e;
  if (!(step > 0.0) || !std::isfinite(step) || std::frexp(step, &e) != 0.5) {
    throw Error(ErrorCode::kInvalidArgument, "quantization steps must be powers of two");
  }
}

int64_t bin_index(double value, double step) { return std::llround(value / step); }

double coded_value(const Splat& s, int k) {
  return k == kRotation ? wrap_rotation(s.p[k]) : s.p[k];
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

// Model as stored in the file; encoder and decoder both build tables from it.
GroupPrior stored(const GroupPrior& g) {
  return {static_cast<float>(g.step), static_cast<float>(g.mean), static_cast<float>(g.scale)};
}

FrequencyTable bin_table(const GroupPrior& g, int64_t kmin, int64_t kmax) {
  const size_t n = static_cast<size_t>(kmax - kmin + 1);
  if (kmax < kmin || n > kMaxBins) {
    throw Error(ErrorCode::kInvalidArgument,
                "quantized range spans " + std::to_string(kmax - kmin + 1) +
                    " bins; at most " + std::to_string(kMaxBins) + " are supported");
  }
  std::vector<double> p(n);
  for (size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(kmin + static_cast<int64_t>(i)) * g.step;
    const double a = (c + 0.5 * g.step - g.mean) / g.scale;
    const double b = (c - 0.5 * g.step - g.mean) / g.scale;
    p[i] = std::exp(log_bin(a, b).logp);
  }
  return FrequencyTable::from_probabilities(p);
}

struct PriorAdam {
  std::array<double, 2 * kNumParamGroups> m{}, v{};
  int t = 0;
};

}  // namespace

RateModel::RateModel() {
  groups[static_cast<int>(ParamGroup::kPosition)].step = 0.125;
  groups[static_cast<int>(ParamGroup::kLogScale)].step = 1.0 / 32.0;
  groups[static_cast<int>(ParamGroup::kRotation)].step = 1.0 / 32.0;
  groups[static_cast<int>(ParamGroup::kColor)].step = 1.0 / 16.0;
  groups[static_cast<int>(ParamGroup::kOpacity)].step = 1.0 / 16.0;
}

void RateModel::fit_prior(const SplatSet& splats) {
  std::array<double, kNumParamGroups> sum{}, sq{};
  std::array<int, kNumParamGroups> count{};
  for (const Splat& s : splats.splats)
    for (int k = 0; k < kNumSplatParams; ++k) {
      const int g = static_cast<int>(group_of(k));
      const double v = coded_value(s, k);
      sum[g] += v;
      sq[g] += v * v;
      ++count[g];
    }
  for (int g = 0; g < kNumParamGroups; ++g) {
    if (count[g] == 0) continue;
    const double mean = sum[g] / count[g];
    groups[g].mean = mean;
    // A degenerate sample (e.g. identical initial scales) starts one step wide.
    groups[g].scale = std::max({std::sqrt(std::max(sq[g] / count[g] - mean * mean, 0.0)),
                                groups[g].step, kMinPriorScale});
  }
}

void to_json(nlohmann::json& j, const RateModel& m) {
  j = nlohmann::json::object();
  for (int g = 0; g < kNumParamGroups; ++g) {
    const GroupPrior& p = m.groups[g];
    j[group_name(static_cast<ParamGroup>(g))] = {
        {"step", p.step}, {"mean", p.mean}, {"scale", p.scale}};
  }
}

void from_json(const nlohmann::json& j, RateModel& m) {
  m = RateModel();
  for (int g = 0; g < kNumParamGroups; ++g) {
    const char* name = group_name(static_cast<ParamGroup>(g));
    if (!j.contains(name)) continue;
    GroupPrior& p = m.groups[g];
    p.step = j[name].value("step", p.step);
    p.mean = j[name].value("mean", p.mean);
    p.scale = j[name].value("scale", p.scale);
  }
}

void validate(const RateModel& m) {
  for (const GroupPrior& g : m.groups) {
    check_step(g.step);
    if (!std::isfinite(g.mean)) throw Error(ErrorCode::kNonFinite, "prior mean is not finite");
    if (!(g.scale >= kMinPriorScale) || !std::isfinite(g.scale)) {
      throw Error(ErrorCode::kInvalidArgument, "prior scale must be >= 1e-4");
    }
  }
}

double wrap_rotation(double theta) { return theta - M_PI * std::floor(theta / M_PI + 0.5); }

SplatSet quantize(const SplatSet& splats, const RateModel& model) {
  validate(model);
  SplatSet out = splats;
  for (Splat& s : out.splats)
    for (int k = 0; k < kNumSplatParams; ++k) {
      const double step = model.prior(k).step;
      s.p[k] = step * static_cast<double>(bin_index(coded_value(s, k), step));
    }
  return out;
}

SplatSet add_quantization_noise(const SplatSet& splats, const RateModel& model, uint64_t seed) {
  validate(model);
  std::mt19937_64 rng(seed);
  SplatSet out = splats;
  for (Splat& s : out.splats)
    for (int k = 0; k < kNumSplatParams; ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
      s.p[k] = coded_value(s, k) + u * model.prior(k).step;
    }
  return out;
}

RateResult rate_at(const SplatSet& values, const RateModel& model) {
  validate(model);
  RateResult r;
  r.grad.assign(values.size(), ParamVector{});
  const double inv_ln2 = 1.0 / std::log(2.0);
  for (size_t i = 0; i < values.size(); ++i)
    for (int k = 0; k < kNumSplatParams; ++k) {
      const double v = values.splats[i].p[k];
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite splat parameter");
      const int g = static_cast<int>(group_of(k));
      const GroupPrior& p = model.groups[g];
      const double a = (v + 0.5 * p.step - p.mean) / p.scale;
      const double b = (v - 0.5 * p.step - p.mean) / p.scale;
      const LogBin lb = log_bin(a, b);
      r.bits -= lb.logp * inv_ln2;
      const double dv = -(lb.da + lb.db) / p.scale * inv_ln2;
      r.grad[i][k] = dv;
      r.grad_mean[g] -= dv;
      r.grad_scale[g] += (lb.da * a + lb.db * b) / p.scale * inv_ln2;
    }
  return r;
}

RateResult rate_bits(const SplatSet& splats, const RateModel& model, RateMode mode,
                     uint64_t seed) {
  return rate_at(mode == RateMode::kEval ? quantize(splats, model)
                                         : add_quantization_noise(splats, model, seed),
                 model);
}

std::vector<uint8_t> encode_quantized(const SplatSet& splats, const RateModel& model) {
  validate(model);
  validate_splats(splats);
  const std::vector<int> order = blend_order(splats);
  std::array<GroupPrior, kNumParamGroups> priors;
  for (int g = 0; g < kNumParamGroups; ++g) priors[g] = stored(model.groups[g]);

  std::vector<int64_t> idx;
  idx.reserve(splats.size() * kNumSplatParams);
  std::array<int64_t, kNumParamGroups> kmin, kmax;
  kmin.fill(splats.empty() ? 0 : INT64_MAX);
  kmax.fill(splats.empty() ? 0 : INT64_MIN);
  for (int i : order)
    for (int k = 0; k < kNumSplatParams; ++k) {
      const int g = static_cast<int>(group_of(k));
      const int64_t q = bin_index(coded_value(splats.splats[i], k), priors[g].step);
      kmin[g] = std::min(kmin[g], q);
      kmax[g] = std::max(kmax[g], q);
      idx.push_back(q);
    }
  for (int g = 0; g < kNumParamGroups; ++g)
    if (kmin[g] < INT32_MIN || kmax[g] > INT32_MAX) {
      throw Error(ErrorCode::kInvalidArgument, "quantized index out of range");
    }

  std::vector<uint8_t> payload;
  if (!splats.empty()) {
    std::vector<FrequencyTable> tables;
    for (int g = 0; g < kNumParamGroups; ++g)
      tables.push_back(bin_table(priors[g], kmin[g], kmax[g]));
    RangeEncoder enc;
    for (size_t j = 0; j < idx.size(); ++j) {
      const int g = static_cast<int>(group_of(static_cast<int>(j % kNumSplatParams)));
      enc.encode(tables[g], static_cast<size_t>(idx[j] - kmin[g]));
    }
    payload = enc.finish();
  }

  std::vector<uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(splats.size()));
  put_u32(out, kNumSplatParams);
  for (int g = 0; g < kNumParamGroups; ++g) {
    put_f32(out, static_cast<float>(priors[g].step));
    put_f32(out, static_cast<float>(priors[g].mean));
    put_f32(out, static_cast<float>(priors[g].scale));
    put_u32(out, static_cast<uint32_t>(static_cast<int32_t>(kmin[g])));
    put_u32(out, static_cast<uint32_t>(static_cast<int32_t>(kmax[g])));
  }
  put_u32(out, static_cast<uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

size_t spq1_payload_size(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kSpq1HeaderBytes) throw Error(ErrorCode::kTruncated, "SPQ1 header is short");
  return get_u32(bytes.data() + kSpq1HeaderBytes - 4);
}

DecodedSplats decode_quantized(const std::vector<uint8_t>& bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an SPQ1 file");
  }
  if (bytes.size() < kSpq1HeaderBytes) throw Error(ErrorCode::kTruncated, "SPQ1 header is short");
  if (get_u32(bytes.data() + 4) != kVersion) {
    throw Error(ErrorCode::kVersionMismatch, "SPQ1 version " + std::to_string(get_u32(bytes.data() + 4)));
  }
  const uint32_t n = get_u32(bytes.data() + 8);
  if (get_u32(bytes.data() + 12) != kNumSplatParams) {
    throw Error(ErrorCode::kVersionMismatch, "unexpected SPQ1 parameter count");
  }
  DecodedSplats out;
  std::array<int64_t, kNumParamGroups> kmin, kmax;
  const uint8_t* p = bytes.data() + 16;
  for (int g = 0; g < kNumParamGroups; ++g, p += 20) {
    GroupPrior& gp = out.model.groups[g];
    gp.step = get_f32(p);
    gp.mean = get_f32(p + 4);
    gp.scale = get_f32(p + 8);
    kmin[g] = static_cast<int32_t>(get_u32(p + 12));
    kmax[g] = static_cast<int32_t>(get_u32(p + 16));
  }
  try {
    validate(out.model);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptStream, std::string("SPQ1 model: ") + e.what());
  }
  const size_t payload = get_u32(p);
  if (bytes.size() < kSpq1HeaderBytes + payload) {
    throw Error(ErrorCode::kTruncated, "SPQ1 payload is short");
  }
  out.splats.splats.resize(n);
  if (n == 0) return out;
  std::vector<FrequencyTable> tables;
  for (int g = 0; g < kNumParamGroups; ++g) {
    if (kmax[g] < kmin[g] || static_cast<size_t>(kmax[g] - kmin[g] + 1) > kMaxBins) {
      throw Error(ErrorCode::kCorruptStream, "SPQ1 index range is invalid");
    }
    tables.push_back(bin_table(out.model.groups[g], kmin[g], kmax[g]));
  }
  RangeDecoder dec(bytes.data() + kSpq1HeaderBytes, payload);
  for (uint32_t i = 0; i < n; ++i) {
    Splat& s = out.splats.splats[i];
    for (int k = 0; k < kNumSplatParams; ++k) {
      const int g = static_cast<int>(group_of(k));
      const int64_t q = kmin[g] + static_cast<int64_t>(dec.decode(tables[g]));
      s.p[k] = out.model.groups[g].step * static_cast<double>(q);
    }
    s.depth_key = static_cast<float>((i + 0.5) / n);
  }
  return out;
}

void save_quantized(const SplatSet& splats, const RateModel& model,
                    const std::filesystem::path& path) {
  write_file_bytes(path, encode_quantized(splats, model));
}

DecodedSplats load_quantized(const std::filesystem::path& path) {
  return decode_quantized(read_file_bytes(path));
}

void to_json(nlohmann::json& j, const RdConfig& c) {
  j = nlohmann::json{{"lambda", c.lambda}, {"sweep", c.sweep},   {"train", c.train},
                     {"loss", c.loss},     {"model", c.model},   {"prior_lr", c.prior_lr}};
}

void from_json(const nlohmann::json& j, RdConfig& c) {
  const RdConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.sweep = j.value("sweep", d.sweep);
  c.train = j.value("train", d.train);
  c.loss = j.value("loss", d.loss);
  c.model = j.value("model", d.model);
  c.prior_lr = j.value("prior_lr", d.prior_lr);
}

void validate(const RdConfig& c) {
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  }
  if (c.sweep.empty()) throw Error(ErrorCode::kInvalidArgument, "empty lambda sweep");
  for (double l : c.sweep)
    if (!(l > 0.0) || !std::isfinite(l)) {
      throw Error(ErrorCode::kInvalidArgument, "sweep values must be > 0");
    }
  if (!(c.prior_lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "prior_lr must be > 0");
  validate(c.train);
  validate(c.loss);
  validate(c.model);
}

RdResult fit_rd(const ImageBuffer& target_in, const RdConfig& cfg, double lambda, uint64_t seed) {
  validate(cfg);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  }
  const ImageBuffer target = to_rgb(target_in);
  const double pixels = static_cast<double>(target.pixel_count());
  const SplatSet init = init_splats(target, cfg.train.init_count, seed);
  RdResult res;
  res.model = cfg.model;
  res.model.fit_prior(init);

  RateModel& model = res.model;
  PriorAdam adam;
  TrainHooks hooks;
  hooks.perturb = [&](const SplatSet& s, int it) {
    return add_quantization_noise(s, model, splitmix(seed ^ splitmix(static_cast<uint64_t>(it))));
  };
  hooks.extra = [&](const SplatSet&, const SplatSet& rendered, std::vector<ParamVector>& grads,
                    int) {
    const RateResult r = rate_at(rendered, model);
    const double w = lambda / pixels;
    for (size_t i = 0; i < grads.size(); ++i)
      for (int k = 0; k < kNumSplatParams; ++k) grads[i][k] += w * r.grad[i][k];
    const double b1 = cfg.train.adam_beta1, b2 = cfg.train.adam_beta2;
    ++adam.t;
    const double c1 = 1.0 - std::pow(b1, adam.t), c2 = 1.0 - std::pow(b2, adam.t);
    auto adam_step = [&](int slot, double grad) {
      adam.m[slot] = b1 * adam.m[slot] + (1.0 - b1) * grad;
      adam.v[slot] = b2 * adam.v[slot] + (1.0 - b2) * grad * grad;
      return cfg.prior_lr * (adam.m[slot] / c1) /
             (std::sqrt(adam.v[slot] / c2) + cfg.train.adam_eps);
    };
    // The prior only enters the rate, so it descends d bits directly; the
    // scale moves in log space.
    for (int g = 0; g < kNumParamGroups; ++g) {
      GroupPrior& gp = model.groups[g];
      gp.mean -= adam_step(2 * g, r.grad_mean[g]);
      gp.scale = std::max(gp.scale * std::exp(-adam_step(2 * g + 1, r.grad_scale[g] * gp.scale)),
                          kMinPriorScale);
    }
    return w * r.bits;
  };
  FitResult f = fit(target, init, cfg.loss, cfg.train, seed, lambda > 0.0 ? &hooks : nullptr);
  if (lambda == 0.0) model.fit_prior(f.splats);

  res.splats = std::move(f.splats);
  RdReport& rep = res.report;
  rep.lambda = lambda;
  rep.train = std::move(f.report);
  rep.eval_bits = rate_bits(res.splats, model, RateMode::kEval).bits;
  rep.bits_per_pixel = rep.eval_bits / pixels;
  rep.bytes = encode_quantized(res.splats, model).size();
  TrainReport q;
  fill_final_metrics(target, quantize(res.splats, model), cfg.train.background, q);
  rep.psnr = q.final_psnr;
  rep.ssim = q.final_ssim;
  rep.wd0 = q.final_wd0;
  rep.wd4 = q.final_wd4;
  return res;
}

std::vector<RdResult> rd_sweep(const ImageBuffer& target, const RdConfig& cfg, uint64_t seed) {
  validate(cfg);
  std::vector<double> lambdas = cfg.sweep;
  std::sort(lambdas.begin(), lambdas.end());
  std::vector<RdResult> out;
  for (double l : lambdas) out.push_back(fit_rd(target, cfg, l, seed));
  return out;
}

nlohmann::json rd_report_to_json(const RdReport& r) {
  return {{"lambda", r.lambda},
          {"eval_bits", r.eval_bits},
          {"bits_per_pixel", r.bits_per_pixel},
          {"bytes", r.bytes},
          {"psnr", std::isinf(r.psnr) ? nlohmann::json("inf") : nlohmann::json(r.psnr)},
          {"ssim", r.ssim},
          {"wd_sigma0", r.wd0},
          {"wd_sigma4", r.wd4},
          {"train", report_to_json(r.train)}};
}

}  // namespace splatperc
