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


#include "doctest.h"
#include "splatperc/selftest.h"

using namespace splatperc;

TEST_CASE("self-test suites pass") {
  const std::vector<CheckRow> g = gradient_suite(2);
  const std::vector<CheckRow> o = oracle_suite();
  MESSAGE("\n" << format_checks(g) << format_checks(o));
  CHECK(g.size() == 11);
  CHECK(all_pass(g));
  CHECK(all_pass(o));
  CHECK(format_checks({{"x", 2.0, 1.0, false}}).find("FAIL") != std::string::npos);
}
