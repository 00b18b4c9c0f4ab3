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

#ifndef SPLATPERC_PARALLEL_H_
#define SPLATPERC_PARALLEL_H_

namespace splatperc {

// Worker threads used by the OpenMP kernels. Reads SPLATPERC_THREADS on first
// use (0 or unset = OpenMP default).
int thread_count();
void set_thread_count(int threads);

// Applies SPLATPERC_THREADS to the OpenMP runtime. Called by the CLI.
void configure_threads_from_env();

}  // namespace splatperc

#endif  // SPLATPERC_PARALLEL_H_
