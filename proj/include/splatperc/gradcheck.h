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

#ifndef SPLATPERC_GRADCHECK_H_
#define SPLATPERC_GRADCHECK_H_

// Finite-difference helpers used by the self-test command and the test
// suites. They only evaluate the forward functions they are handed.

#include <algorithm>
#include <cmath>
#include <span>

namespace splatperc {

// Central difference of f() with respect to *x; *x is restored afterwards.
template <class F>
double central_difference(F&& f, double* x, double h) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

// Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 when both vanish.
inline double relative_error(std::span<const double> analytic,
                             std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace splatperc

#endif  // SPLATPERC_GRADCHECK_H_
