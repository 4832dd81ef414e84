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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sqsm/autograd.hpp"

namespace sqsm {

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
  /// Check at most this many entries (sampled uniformly); 0 checks all.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_entry;
};

using GraphBuilder = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central finite differences.
///
/// `build` records a graph reading the parameters in `wrt` through
/// Tape::param. Non-scalar outputs are reduced with a fixed random projection
/// so every output element contributes. Throws NumericError on non-finite
/// values.
GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Parameter<double>*>& wrt,
                           const GradCheckOptions& options = {});

using TensorOp = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Convenience form: differentiates `op` with respect to every input tensor.
GradCheckResult grad_check(const TensorOp& op, const std::vector<TensorD>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace sqsm
