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

// sqsm: train, evaluate, quantize and serve SqueezeSAM models.

#include <cmath>
#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sqsm/data.hpp"
#include "sqsm/grad_suite.hpp"
#include "sqsm/quant.hpp"
#include "sqsm/service.hpp"
#include "sqsm/train.hpp"

namespace fs = std::filesystem;
using namespace sqsm;

namespace {

// Thrown for invalid flag combinations that CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;

std::vector<data::Sample> samples_of(const std::vector<data::SyntheticScene>& scenes) {
  std::vector<data::Sample> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.sample);
  return out;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

// Dataset directory, or the held-out synthetic toy scenes when empty.
std::vector<data::Sample> dataset_or_toy(const std::string& dir) {
  if (dir.empty()) {
    return samples_of(
        data::generate_synthetic_set(train::kToyTestSceneSeed, train::kToyTestScenes, {}));
  }
  require_file(dir, "dataset");
  return data::load_dataset(dir);
}

// The model file, or the oracle test double when `path` is "oracle".
struct LoadedSegmenter {
  std::optional<SqueezeSam<float>> model;
  std::unique_ptr<train::Segmenter> segmenter;
};

LoadedSegmenter load_segmenter(const std::string& path, const std::vector<data::Sample>& dataset,
                               std::optional<double> merge_tau) {
  LoadedSegmenter s;
  if (path == "oracle") {
    const int size = dataset.empty() ? 64 : dataset.front().image.height;
    s.segmenter = std::make_unique<train::OracleSegmenter>(dataset, size, merge_tau);
    return s;
  }
  require_file(path, "model");
  s.model.emplace(quant::load_model(path));
  s.segmenter = std::make_unique<train::ModelSegmenter>(*s.model);
  return s;
}

// Empty buckets print as n/a.
std::string bucket(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_summary(const train::EvalSummary& s) {
  std::printf("mIOU overall %s  small %s  medium %s  large %s  (%lld masks, %lld excluded, seed %llu)\n",
              bucket(s.overall).c_str(), bucket(s.small).c_str(), bucket(s.medium).c_str(),
              bucket(s.large).c_str(), static_cast<long long>(s.count),
              static_cast<long long>(s.excluded_count), static_cast<unsigned long long>(s.seed));
}

Click parse_click(const std::string& text) {
  // x,y[,fg|bg]
  Click c;
  const auto a = text.find(',');
  if (a == std::string::npos) throw UsageError("click '" + text + "' is not x,y[,fg|bg]");
  const auto b = text.find(',', a + 1);
  try {
    c.x = std::stoi(text.substr(0, a));
    c.y = std::stoi(text.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1));
  } catch (const std::exception&) {
    throw UsageError("click '" + text + "' is not x,y[,fg|bg]");
  }
  c.polarity = b == std::string::npos ? Polarity::kForeground : parse_polarity(text.substr(b + 1));
  return c;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = train::kToyTrainSceneSeed;
  int count = train::kToyTrainScenes;
  int size = 64;
  std::string out;
};

int gen_data(const GenDataArgs& a) {
  if (a.count < 1) throw UsageError("--count must be positive");
  data::SceneSpec spec;
  spec.size = a.size;
  const auto scenes = data::generate_synthetic_set(a.seed, a.count, spec);
  data::save_dataset(a.out, samples_of(scenes));
  std::printf("wrote %d scenes (seed %llu) to %s\n", a.count, static_cast<unsigned long long>(a.seed),
              a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::uint64_t seed = 0;
  int steps = 2000;
  std::string out;
  std::string dataset;
  bool no_merge = false;
  std::optional<double> lr;
};

int train_toy(const TrainArgs& a) {
  std::vector<data::Sample> train_set =
      a.dataset.empty()
          ? samples_of(data::generate_synthetic_set(train::kToyTrainSceneSeed, train::kToyTrainScenes, {}))
          : (require_file(a.dataset, "dataset"), data::load_dataset(a.dataset));
  train::TrainConfig cfg = train::toy_train_config(a.seed, !a.no_merge, a.steps);
  if (a.lr) cfg.lr = *a.lr;
  SqueezeSam<float> model(ModelConfig::toy(), a.seed);
  std::printf("training toy model: %lld parameters, %d steps, merge %s, seed %llu\n",
              static_cast<long long>(model.param_count()), cfg.steps, cfg.merge_masks ? "on" : "off",
              static_cast<unsigned long long>(a.seed));
  const train::TrainResult r = train::train_loop(model, train_set, cfg, [](const train::StepLog& l) {
    std::printf("step %5d  lr %.2e  loss %.4f  focal %.4f  dice %.4f  iou_mse %.4f\n", l.step, l.lr,
                l.loss, l.focal, l.dice, l.iou_mse);
    std::fflush(stdout);
  });
  quant::save_model(a.out, model);
  std::printf("trained in %.1f s; wrote %s\n", r.seconds, a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string dataset;
  int clicks = 3;
  std::uint64_t seed = 0;
  std::optional<double> merge_tau;
  std::string report;
};

int eval(const EvalArgs& a) {
  if (a.clicks < 1) throw UsageError("--clicks must be positive");
  const auto dataset = dataset_or_toy(a.dataset);
  LoadedSegmenter seg = load_segmenter(a.model, dataset, a.merge_tau);
  train::MiouOptions o;
  o.clicks_per_mask = a.clicks;
  o.seed = a.seed;
  o.merge_tau = a.merge_tau;
  const train::EvalReport rep = train::miou_eval(*seg.segmenter, dataset, o);
  print_summary(rep.summary);
  if (!a.report.empty()) train::write_report(a.report, rep);
  return 0;
}

struct SaliencyArgs {
  std::string model;
  std::string dataset;
  int clicks = 1;
  bool grid = false;
  bool no_fine = false;
  std::string report;
};

int saliency_eval(const SaliencyArgs& a) {
  if (a.clicks != 1 && a.clicks != 3) throw UsageError("--clicks must be 1 or 3");
  const auto dataset = dataset_or_toy(a.dataset);
  LoadedSegmenter seg = load_segmenter(a.model, dataset, std::nullopt);
  train::SaliencyEvalOptions o;
  o.clicks = a.clicks;
  o.strategy = a.grid ? saliency::ClickStrategy::kGrid : saliency::ClickStrategy::kCenterOfMass;
  o.use_fine_masks = !a.no_fine;
  const train::SaliencyEvalReport rep = train::saliency_eval(*seg.segmenter, dataset, o);
  print_summary(rep.eval.summary);
  std::printf("images %zu  ambiguous %lld  no salient blob %lld\n", dataset.size(),
              static_cast<long long>(rep.ambiguous), static_cast<long long>(rep.no_blob));
  if (!a.report.empty()) train::write_report(a.report, rep.eval);
  return 0;
}

struct SegmentArgs {
  std::string model;
  std::string image;
  std::string heatmap;
  std::vector<std::string> clicks;
  std::string out;
  std::optional<int> candidate;
};

int segment(const SegmentArgs& a) {
  require_file(a.model, "model");
  require_file(a.image, "image");
  std::optional<saliency::Heatmap> heatmap;
  if (!a.heatmap.empty()) {
    require_file(a.heatmap, "heatmap");
    heatmap = data::read_heatmap(a.heatmap);
  }
  std::vector<Click> clicks;
  for (const std::string& c : a.clicks) clicks.push_back(parse_click(c));
  service::Engine engine(quant::load_model(a.model), {.max_sessions = 1});
  service::SessionState s = engine.create_session(data::read_image(a.image), heatmap);
  for (const Click& c : clicks) s = engine.add_click(s.id, c);
  std::cout << service::session_json(s) << "\n";
  if (!s.output) {
    std::fprintf(stderr, "no salient region found; pass --click to segment\n");
    return kFailureExit;
  }
  if (!a.out.empty()) {
    const std::vector<std::uint8_t> png = data::encode_mask_png(service::output_mask(s, a.candidate));
    std::ofstream f(a.out, std::ios::binary);
    f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!f) throw std::runtime_error("cannot write " + a.out);
  }
  return 0;
}

struct QuantizeArgs {
  std::string in;
  std::string out;
  std::string dataset;
  int clicks = 3;
  std::optional<double> merge_tau;
};

int quantize(const QuantizeArgs& a) {
  require_file(a.in, "model");
  SqueezeSam<float> model = quant::load_model(a.in);
  const quant::ModelFile file = quant::quantize_model(model);
  quant::write_file(a.out, file);
  SqueezeSam<float> q = quant::instantiate(quant::read_file(a.out));
  SqueezeSam<float> f = quant::load_model(a.in);
  std::printf("wrote %s (%llu bytes, was %llu)\n", a.out.c_str(),
              static_cast<unsigned long long>(fs::file_size(a.out)),
              static_cast<unsigned long long>(fs::file_size(a.in)));

  const auto dataset = dataset_or_toy(a.dataset);
  train::MiouOptions o;
  o.clicks_per_mask = a.clicks;
  o.merge_tau = a.merge_tau;
  train::ModelSegmenter fs_(f), qs(q);
  const double before = train::miou_eval(fs_, dataset, o).summary.overall;
  const double after = train::miou_eval(qs, dataset, o).summary.overall;
  std::printf("mIOU float %.4f  int8 %.4f  drop %.4f\n", before, after, before - after);
  return 0;
}

struct GradcheckArgs {
  int seeds = 20;
  double tolerance = 1e-4;
};

int gradcheck(const GradcheckArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be positive");
  const nn::GradSuiteReport r = nn::gradient_suite(a.seeds);
  for (const nn::GradSuiteCase& c : r.cases) {
    std::printf("%-24s seeds %3d  max rel-err %.3e  %s\n", c.name.c_str(), c.seeds,
                c.max_relative_error, c.max_relative_error < a.tolerance ? "ok" : "FAIL");
  }
  std::printf("max rel-err %.3e over %zu cases in %.1f s\n", r.max_relative_error, r.cases.size(),
              r.seconds);
  return r.max_relative_error < a.tolerance ? 0 : kFailureExit;
}

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  std::optional<int> port;
  std::size_t max_sessions = 64;
};

int serve(const ServeArgs& a) {
  require_file(a.model, "model");
  const int port = a.port.value_or(service::port_from_env(8080));
  service::Engine engine(quant::load_model(a.model), {.max_sessions = a.max_sessions});
  httplib::Server server;
  service::register_routes(server, engine);
  std::printf("serving %s on http://%s:%d/v1\n", a.model.c_str(), a.host.c_str(), port);
  std::fflush(stdout);
  if (!server.listen(a.host, port)) {
    std::fprintf(stderr, "cannot listen on %s:%d\n", a.host.c_str(), port);
    return kFailureExit;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SqueezeSAM interactive segmentation: training, evaluation, quantization, serving"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic nested-shapes dataset");
  gen->add_option("--seed", gd.seed, "Base seed; scene i uses seed + i")->capture_default_str();
  gen->add_option("--count", gd.count, "Number of scenes")->capture_default_str();
  gen->add_option("--size", gd.size, "Scene side in pixels")->capture_default_str();
  gen->add_option("--out", gd.out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train the 64 px toy model");
  tr->add_option("--seed", ta.seed, "Model and sampling seed")->capture_default_str();
  tr->add_option("--steps", ta.steps, "Training steps")->capture_default_str();
  tr->add_option("--out", ta.out, "Output model file")->required();
  tr->add_option("--dataset", ta.dataset, "Dataset directory (default: the synthetic toy set)");
  tr->add_flag("--no-merge", ta.no_merge, "Disable mask merging");
  tr->add_option("--lr", ta.lr, "Override the base learning rate");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Click-simulation mIOU");
  ev->add_option("--model", ea.model, "Model file, or 'oracle' for the test double")->required();
  ev->add_option("--dataset", ea.dataset, "Dataset directory (default: held-out synthetic scenes)");
  ev->add_option("--clicks", ea.clicks, "Clicks per mask")->capture_default_str();
  ev->add_option("--seed", ea.seed, "Click sampling seed")->capture_default_str();
  ev->add_option("--merge-tau", ea.merge_tau, "Evaluate against merged masks");
  ev->add_option("--report", ea.report, "Summary JSON path (records go next to it as .jsonl)");

  SaliencyArgs sa;
  auto* se = app.add_subcommand("saliency-eval", "Saliency-seeded evaluation protocol");
  se->add_option("--model", sa.model, "Model file, or 'oracle'")->required();
  se->add_option("--dataset", sa.dataset, "Dataset directory (default: held-out synthetic scenes)");
  se->add_option("--clicks", sa.clicks, "1 or 3 saliency clicks")->capture_default_str();
  se->add_flag("--grid", sa.grid, "Grid click sampling instead of centre of mass");
  se->add_flag("--no-fine", sa.no_fine, "Skip fine-mask substitution");
  se->add_option("--report", sa.report, "Summary JSON path");

  SegmentArgs sg;
  auto* seg = app.add_subcommand("segment", "Segment one image from saliency and optional clicks");
  seg->add_option("--model", sg.model, "Model file")->required();
  seg->add_option("--image", sg.image, "Input image")->required();
  seg->add_option("--heatmap", sg.heatmap, "Grayscale saliency heatmap (default: built-in saliency)");
  seg->add_option("--click", sg.clicks, "Extra click x,y[,fg|bg] in image pixels (repeatable)");
  seg->add_option("--out", sg.out, "Mask PNG path");
  seg->add_option("--candidate", sg.candidate, "Mask candidate to write (default: best)");

  QuantizeArgs qa;
  auto* qu = app.add_subcommand("quantize", "Int8 per-channel weight quantization");
  qu->add_option("--in", qa.in, "Float model file")->required();
  qu->add_option("--out", qa.out, "Quantized model file")->required();
  qu->add_option("--dataset", qa.dataset, "Dataset for the mIOU comparison (default: held-out synthetic)");
  qu->add_option("--clicks", qa.clicks, "Clicks per mask")->capture_default_str();
  qu->add_option("--merge-tau", qa.merge_tau, "Evaluate against merged masks");

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and block");
  gc->add_option("--seeds", ga.seeds, "Seeds per case")->capture_default_str();
  gc->add_option("--tolerance", ga.tolerance, "Maximum relative error")->capture_default_str();

  ServeArgs va;
  auto* sv = app.add_subcommand("serve", "Run the /v1 HTTP service (port from SQSM_PORT)");
  sv->add_option("--model", va.model, "Model file")->required();
  sv->add_option("--host", va.host, "Bind address")->capture_default_str();
  sv->add_option("--port", va.port, "Port (overrides SQSM_PORT)");
  sv->add_option("--max-sessions", va.max_sessions, "Sessions kept before LRU eviction")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(gd);
    if (*tr) return train_toy(ta);
    if (*ev) return eval(ea);
    if (*se) return saliency_eval(sa);
    if (*seg) return segment(sg);
    if (*qu) return quantize(qa);
    if (*gc) return gradcheck(ga);
    if (*sv) return serve(va);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsageExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailureExit;
  }
  return kUsageExit;
}
