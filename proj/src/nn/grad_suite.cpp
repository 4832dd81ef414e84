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

#include "sqsm/grad_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "sqsm/gradcheck.hpp"
#include "sqsm/nn.hpp"

namespace sqsm::nn {
namespace {

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void randomize_bn(BatchNorm2d<double>& bn, Rng& rng) {
  for (double& v : bn.gamma.value.data()) v = rng.uniform(0.5, 2.0);
  for (double& v : bn.beta.value.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : bn.running_mean.data()) v = rng.uniform(-0.5, 0.5);
  for (double& v : bn.running_var.data()) v = rng.uniform(0.2, 3.0);
}

// Smallest |pre-activation| of a ConvBnRelu unit; `out` receives its output.
// Finite differences are only meaningful away from the ReLU kink.
double relu_margin(ConvBnRelu<double>& unit, const TensorD& x, ops::Mode mode, TensorD* out) {
  Tape<double> tape(false);
  auto z = unit.bn.forward(tape, unit.conv.forward(tape, tape.constant(x)), mode);
  double m = 1e300;
  for (double v : z.value().data()) m = std::min(m, std::abs(v));
  *out = ops::relu(z).value();
  return m;
}

constexpr double kMargin = 1e-3;
constexpr int kRedraws = 200;

using SeedCheck = std::function<GradCheckResult(int seed)>;

// Throws NumericError when no kink-free input exists within kRedraws draws.
GradCheckResult check_down(int seed, ops::Mode mode) {
  Rng rng(1000 + seed);
  DoubleConvDown<double> down("d", 2, 3, rng);
  randomize_bn(down.first.bn, rng);
  randomize_bn(down.second.bn, rng);
  Parameter<double> x;
  int draws = 0;
  for (; draws < kRedraws; ++draws) {
    x = Parameter<double>("x", random_tensor(rng, {2, 2, 4, 4}));
    TensorD h1, h2;
    if (relu_margin(down.first, x.value, mode, &h1) >= kMargin &&
        relu_margin(down.second, h1, mode, &h2) >= kMargin) {
      break;
    }
  }
  if (draws == kRedraws) throw NumericError("no kink-free DoubleConvDown input");
  StateList<double> s;
  down.collect(s);
  s.params.push_back(&x);
  return grad_check([&](Tape<double>& t) { return down.forward(t, t.param(x), mode); }, s.params,
                    {.seed = static_cast<std::uint64_t>(seed)});
}

GradCheckResult check_up(int seed, ops::Mode mode) {
  Rng rng(2000 + seed);
  DoubleConvUp<double> up("u", 4, 2, 3, rng);
  randomize_bn(up.first.bn, rng);
  randomize_bn(up.second.bn, rng);
  Parameter<double> x, skip;
  int draws = 0;
  for (; draws < kRedraws; ++draws) {
    x = Parameter<double>("x", random_tensor(rng, {2, 4, 2, 2}));
    skip = Parameter<double>("skip", random_tensor(rng, {2, 2, 4, 4}));
    Tape<double> tape(false);
    auto u = up.up.forward(tape, tape.constant(x.value));
    const TensorD cat = ops::concat<double>({u, tape.constant(skip.value)}, 1).value();
    TensorD h1, h2;
    if (relu_margin(up.first, cat, mode, &h1) >= kMargin &&
        relu_margin(up.second, h1, mode, &h2) >= kMargin) {
      break;
    }
  }
  if (draws == kRedraws) throw NumericError("no kink-free DoubleConvUp input");
  StateList<double> s;
  up.collect(s);
  s.params.push_back(&x);
  s.params.push_back(&skip);
  return grad_check(
      [&](Tape<double>& t) { return up.forward(t, t.param(x), t.param(skip), mode); }, s.params,
      {.seed = static_cast<std::uint64_t>(seed)});
}

// Relu inputs are kept at least kMargin away from zero.
TensorD away_from_zero(Rng& rng, Shape shape) {
  TensorD t = random_tensor(rng, std::move(shape));
  for (double& v : t.data()) {
    if (std::abs(v) < kMargin) v = v < 0 ? -0.5 : 0.5;
  }
  return t;
}

GradCheckResult check_op(const TensorOp& op, const std::vector<TensorD>& inputs, int seed) {
  return grad_check(op, inputs, {.seed = static_cast<std::uint64_t>(seed)});
}

std::vector<std::pair<std::string, SeedCheck>> suite() {
  using V = std::vector<Var<double>>;
  std::vector<std::pair<std::string, SeedCheck>> c;
  c.emplace_back("conv2d", [](int seed) {
    Rng rng(100 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); },
                    {random_tensor(rng, {2, 2, 5, 5}), random_tensor(rng, {3, 2, 3, 3}),
                     random_tensor(rng, {3})},
                    seed);
  });
  c.emplace_back("conv_transpose2d", [](int seed) {
    Rng rng(200 + seed);
    return check_op(
        [](Tape<double>&, const V& v) { return ops::conv_transpose2d(v[0], v[1], v[2], 2); },
        {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {3, 2, 2, 2}),
         random_tensor(rng, {2})},
        seed);
  });
  for (const ops::Mode mode : {ops::Mode::kTrain, ops::Mode::kInfer}) {
    const std::string suffix = mode == ops::Mode::kTrain ? "[train]" : "[infer]";
    c.emplace_back("batchnorm2d" + suffix, [mode](int seed) {
      Rng rng(300 + seed);
      TensorD rm = random_tensor(rng, {3});
      TensorD rv = random_tensor(rng, {3}, 0.5, 2.0);
      return check_op(
          [&](Tape<double>&, const V& v) {
            return ops::batchnorm2d(v[0], v[1], v[2], rm, rv, mode, 0.1, 1e-5);
          },
          {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {3}, 0.5, 2.0),
           random_tensor(rng, {3})},
          seed);
    });
  }
  c.emplace_back("relu", [](int seed) {
    Rng rng(400 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::relu(v[0]); },
                    {away_from_zero(rng, {3, 7})}, seed);
  });
  c.emplace_back("gelu", [](int seed) {
    Rng rng(500 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::gelu(v[0]); },
                    {random_tensor(rng, {3, 7}, -3.0, 3.0)}, seed);
  });
  c.emplace_back("linear", [](int seed) {
    Rng rng(600 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::linear(v[0], v[1], v[2]); },
                    {random_tensor(rng, {3, 5}), random_tensor(rng, {4, 5}), random_tensor(rng, {4})},
                    seed);
  });
  c.emplace_back("attention", [](int seed) {
    Rng rng(700 + seed);
    std::vector<TensorD> in{random_tensor(rng, {4, 8})};
    for (int i = 0; i < 4; ++i) in.push_back(random_tensor(rng, {8, 8}));
    return check_op(
        [](Tape<double>&, const V& v) { return ops::attention(v[0], v[1], v[2], v[3], v[4], 2); },
        in, seed);
  });
  c.emplace_back("add/sub/mul/scale", [](int seed) {
    Rng rng(800 + seed);
    return check_op(
        [](Tape<double>&, const V& v) {
          return ops::scale(ops::add(ops::mul(v[0], v[1]), ops::sub(v[0], v[1])), 0.75);
        },
        {random_tensor(rng, {2, 3, 2}), random_tensor(rng, {2, 3, 2})}, seed);
  });
  c.emplace_back("sum/mean", [](int seed) {
    Rng rng(900 + seed);
    return check_op(
        [](Tape<double>&, const V& v) {
          return ops::add(ops::sum(ops::mul(v[0], v[0])), ops::mean(v[1]));
        },
        {random_tensor(rng, {2, 5}), random_tensor(rng, {3, 2})}, seed);
  });
  c.emplace_back("reshape/concat/slice", [](int seed) {
    Rng rng(1100 + seed);
    return check_op(
        [](Tape<double>&, const V& v) {
          auto cat = ops::concat<double>({v[0], v[1]}, 1);
          return ops::reshape(ops::slice(cat, 1, 1, 3), {2, 12});
        },
        {random_tensor(rng, {2, 3, 2, 2}), random_tensor(rng, {2, 1, 2, 2})}, seed);
  });
  c.emplace_back("gather_rows", [](int seed) {
    Rng rng(1200 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::gather_rows(v[0], {2, 0, 2, 1}); },
                    {random_tensor(rng, {3, 5})}, seed);
  });
  c.emplace_back("hyper_dot", [](int seed) {
    Rng rng(1300 + seed);
    return check_op([](Tape<double>&, const V& v) { return ops::hyper_dot(v[0], v[1]); },
                    {random_tensor(rng, {2, 4, 3, 2}), random_tensor(rng, {2, 3, 4})}, seed);
  });
  for (const ops::Mode mode : {ops::Mode::kTrain, ops::Mode::kInfer}) {
    const std::string suffix = mode == ops::Mode::kTrain ? "[train]" : "[infer]";
    c.emplace_back("DoubleConvDown" + suffix, [mode](int seed) { return check_down(seed, mode); });
    c.emplace_back("DoubleConvUp" + suffix, [mode](int seed) { return check_up(seed, mode); });
  }
  return c;
}

}  // namespace

GradSuiteReport gradient_suite(int seeds) {
  const auto start = std::chrono::steady_clock::now();
  GradSuiteReport report;
  for (const auto& [name, check] : suite()) {
    GradSuiteCase row;
    row.name = name;
    row.seeds = seeds;
    for (int seed = 0; seed < seeds; ++seed) {
      const GradCheckResult r = check(seed);
      if (r.max_relative_error >= row.max_relative_error) {
        row.max_relative_error = r.max_relative_error;
        row.worst_entry = "seed " + std::to_string(seed) + " " + r.worst_entry;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, row.max_relative_error);
    report.cases.push_back(std::move(row));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace sqsm::nn
