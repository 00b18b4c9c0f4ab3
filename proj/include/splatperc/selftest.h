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


#ifndef SPLATPERC_SELFTEST_H_
#define SPLATPERC_SELFTEST_H_

// Finite-difference and closed-form checks runnable from the command line.

#include <string>
#include <vector>

namespace splatperc {

struct CheckRow {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

// Central-difference gradient checks of the renderer and every loss; each
// row holds the worst norm-wise relative error over `seeds` seeds.
std::vector<CheckRow> gradient_suite(int seeds);
// Closed-form values: erank, bin rate, preference ratios, WD at zero width,
// SPQ1 and range-coder round trips.
std::vector<CheckRow> oracle_suite();

std::string format_checks(const std::vector<CheckRow>& rows);
bool all_pass(const std::vector<CheckRow>& rows);

}  // namespace splatperc

#endif  // SPLATPERC_SELFTEST_H_
