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


#include "splatperc/range_coder.h"

#include <algorithm>
#include <cmath>

#include "splatperc/error.h"

namespace splatperc {
namespace {

constexpr uint32_t kTop = 1u << 24;

}  // namespace

FrequencyTable FrequencyTable::from_probabilities(const std::vector<double>& p) {
  const size_t n = p.size();
  if (n == 0 || n > kFreqTotal / 2) {
    throw Error(ErrorCode::kInvalidArgument, "frequency table needs 1.." +
                                                 std::to_string(kFreqTotal / 2) + " symbols");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid symbol probability");
    }
    sum += v;
  }
  std::vector<uint32_t> f(n, 1);
  const double spare = static_cast<double>(kFreqTotal - n);
  uint32_t used = static_cast<uint32_t>(n);
  if (sum > 0.0) {
    for (size_t i = 0; i < n; ++i) {
      const uint32_t extra = static_cast<uint32_t>(std::floor(p[i] / sum * spare));
      f[i] += extra;
      used += extra;
    }
  }
  const size_t top = std::max_element(p.begin(), p.end()) - p.begin();
  f[top] += kFreqTotal - used;
  FrequencyTable t;
  t.cum_.resize(n + 1, 0);
  for (size_t i = 0; i < n; ++i) t.cum_[i + 1] = t.cum_[i] + f[i];
  return t;
}

size_t FrequencyTable::find(uint32_t v) const {
  return std::upper_bound(cum_.begin(), cum_.end(), v) - cum_.begin() - 1;
}

void RangeEncoder::encode(const FrequencyTable& t, size_t symbol) {
  const uint32_t r = range_ >> kFreqBits;
  low_ += static_cast<uint64_t>(r) * t.cum(symbol);
  range_ = r * t.freq(symbol);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  if (next() != 0) throw Error(ErrorCode::kCorruptStream, "range-coded stream has a bad lead byte");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

uint8_t RangeDecoder::next() {
  if (pos_ >= size_) throw Error(ErrorCode::kTruncated, "range-coded stream is truncated");
  return data_[pos_++];
}

size_t RangeDecoder::decode(const FrequencyTable& t) {
  const uint32_t r = range_ >> kFreqBits;
  const uint32_t v = code_ / r;
  if (v >= kFreqTotal) throw Error(ErrorCode::kCorruptStream, "range-coded stream is corrupt");
  const size_t s = t.find(v);
  code_ -= r * t.cum(s);
  range_ = r * t.freq(s);
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next();
  }
  return s;
}

}  // namespace splatperc
