// Copyright 2026 The sqsm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace sqsm::nn {

/// Worst finite-difference result of one differentiable op or block over all
/// seeds it was checked with.
struct GradSuiteCase {
  std::string name;
  int seeds = 0;
  double max_relative_error = 0.0;
  std::string worst_entry;
};

struct GradSuiteReport {
  std::vector<GradSuiteCase> cases;
  double max_relative_error = 0.0;
  double seconds = 0.0;
};

/// Float64 central-difference checks (step 1e-5) of every differentiable op
/// and both DoubleConv blocks, in train and infer mode where it applies, each
/// over `seeds` random draws.
GradSuiteReport gradient_suite(int seeds = 20);

}  // namespace sqsm::nn
