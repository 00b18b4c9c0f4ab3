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


#ifndef SPLATPERC_RANGE_CODER_H_
#define SPLATPERC_RANGE_CODER_H_

// Byte-oriented range coder with carry propagation, driven by integer
// frequency tables of fixed total 2^kFreqBits.

#include <cstdint>
#include <vector>

namespace splatperc {

inline constexpr int kFreqBits = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqBits;

class FrequencyTable {
 public:
  // Every symbol gets at least 1 / kFreqTotal; at most kFreqTotal / 2 symbols.
  static FrequencyTable from_probabilities(const std::vector<double>& p);

  size_t size() const { return cum_.size() - 1; }
  uint32_t cum(size_t s) const { return cum_[s]; }
  uint32_t freq(size_t s) const { return cum_[s + 1] - cum_[s]; }
  // Symbol whose interval contains v in [0, kFreqTotal).
  size_t find(uint32_t v) const;

 private:
  std::vector<uint32_t> cum_;
};

class RangeEncoder {
 public:
  void encode(const FrequencyTable& t, size_t symbol);
  std::vector<uint8_t> finish();

 private:
  void shift_low();

  std::vector<uint8_t> out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size);
  size_t decode(const FrequencyTable& t);

 private:
  uint8_t next();

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace splatperc

#endif  // SPLATPERC_RANGE_CODER_H_
