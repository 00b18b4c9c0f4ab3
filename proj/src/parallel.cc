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

#include "splatperc/parallel.h"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace splatperc {

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void configure_threads_from_env() {
  const char* env = std::getenv("SPLATPERC_THREADS");
  if (env == nullptr) return;
  const int threads = std::atoi(env);
  if (threads > 0) set_thread_count(threads);
}

}  // namespace splatperc
