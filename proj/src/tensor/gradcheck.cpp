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

#include "sqsm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sqsm/rng.hpp"

namespace sqsm {
namespace {

double projected(const TensorD& y, const TensorD& r) {
  double s = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw NumericError("grad_check: non-finite output value");
    s += y[i] * r[i];
  }
  return s;
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Parameter<double>*>& wrt,
                           const GradCheckOptions& options) {
  Rng rng(options.seed);
  for (auto* p : wrt) p->zero_grad();

  TensorD projection;
  {
    Tape<double> tape;
    Var<double> y = build(tape);
    projection = TensorD(y.shape());
    for (auto& v : projection.data()) v = rng.normal();
    projected(y.value(), projection);
    tape.backward(y, projection);
  }

  struct Entry {
    std::size_t param;
    std::int64_t index;
  };
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < wrt.size(); ++p) {
    for (std::int64_t i = 0; i < wrt[p]->numel(); ++i) entries.push_back({p, i});
  }
  if (options.max_entries > 0 && entries.size() > options.max_entries) {
    // Partial Fisher-Yates: the first max_entries slots become a uniform sample.
    for (std::size_t i = 0; i < options.max_entries; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(entries.size() - i));
      std::swap(entries[i], entries[j]);
    }
    entries.resize(options.max_entries);
  }

  auto evaluate = [&]() {
    Tape<double> tape(false);
    Var<double> y = build(tape);
    return projected(y.value(), projection);
  };

  GradCheckResult result;
  for (const Entry& e : entries) {
    Parameter<double>& p = *wrt[e.param];
    const double analytic = p.grad[e.index];
    if (!std::isfinite(analytic)) throw NumericError("grad_check: non-finite analytic gradient");
    const double original = p.value[e.index];
    p.value[e.index] = original + options.step;
    const double up = evaluate();
    p.value[e.index] = original - options.step;
    const double down = evaluate();
    p.value[e.index] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double abs_err = std::abs(analytic - numeric);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
    const double rel = abs_err / denom;
    result.max_abs_error = std::max(result.max_abs_error, abs_err);
    if (rel > result.max_relative_error || result.entries_checked == 0) {
      result.max_relative_error = std::max(result.max_relative_error, rel);
      result.worst_entry = (p.name.empty() ? "param" + std::to_string(e.param) : p.name) + "[" +
                           std::to_string(e.index) + "] analytic=" + std::to_string(analytic) +
                           " numeric=" + std::to_string(numeric);
    }
    ++result.entries_checked;
  }
  return result;
}

GradCheckResult grad_check(const TensorOp& op, const std::vector<TensorD>& inputs,
                           const GradCheckOptions& options) {
  std::vector<Parameter<double>> params;
  params.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params.emplace_back("input" + std::to_string(i), inputs[i]);
  }
  std::vector<Parameter<double>*> wrt;
  for (auto& p : params) wrt.push_back(&p);
  return grad_check(
      [&](Tape<double>& tape) {
        std::vector<Var<double>> vars;
        for (auto& p : params) vars.push_back(tape.param(p));
        return op(tape, vars);
      },
      wrt, options);
}

}  // namespace sqsm
