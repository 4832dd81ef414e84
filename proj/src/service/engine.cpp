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

#include <algorithm>
#include <cstdio>
#include <random>

#include "sqsm/data.hpp"
#include "sqsm/service.hpp"

namespace sqsm::service {

int model_to_image(int v, int model_size, int image_extent) {
  const long long p = (2LL * v + 1) * image_extent / (2LL * model_size);
  return static_cast<int>(std::clamp<long long>(p, 0, image_extent - 1));
}

int image_to_model(int v, int image_extent, int model_size) {
  const long long p = (2LL * v + 1) * model_size / (2LL * image_extent);
  return static_cast<int>(std::clamp<long long>(p, 0, model_size - 1));
}

namespace {

saliency::Heatmap resize_heatmap(const saliency::Heatmap& h, int size) {
  if (h.height == size && h.width == size) return h;
  saliency::Heatmap out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      out.at(y, x) = h.at(model_to_image(y, size, h.height), model_to_image(x, size, h.width));
    }
  }
  return out;
}

}  // namespace

Engine::Engine(SqueezeSam<float> model, EngineConfig config)
    : model_(std::move(model)), config_(config) {
  if (config_.max_sessions == 0) throw ValidationError("max_sessions must be positive");
}

std::string Engine::fresh_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%04llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(++counter_ & 0xFFFF));
  return buf;
}

std::optional<SegmentationOutput> Engine::run(const Session& s) {
  PromptSet prompts;
  prompts.clicks = s.auto_model;
  const int size = input_size();
  for (const Click& c : s.clicks) {
    prompts.clicks.push_back(
        {image_to_model(c.x, s.width, size), image_to_model(c.y, s.height, size), c.polarity});
  }
  if (prompts.clicks.empty()) return std::nullopt;
  std::lock_guard<std::mutex> lock(model_mu_);
  return model_.predict(s.image, prompts);
}

SessionState Engine::snapshot(const Session& s) {
  SessionState out;
  out.id = s.id;
  out.width = s.width;
  out.height = s.height;
  out.auto_clicks = s.auto_image;
  out.clicks = s.clicks;
  out.output = s.output;
  return out;
}

SessionState Engine::create_session(const Image& image,
                                    const std::optional<saliency::Heatmap>& heatmap) {
  if (image.empty() || image.height <= 0 || image.width <= 0) {
    throw ValidationError("session image is empty");
  }
  const int size = input_size();
  auto s = std::make_shared<Session>();
  s->width = image.width;
  s->height = image.height;
  s->image = (image.height == size && image.width == size) ? image
                                                          : data::resize_image(image, size, size);
  saliency::Heatmap map;
  if (heatmap) {
    heatmap->validate();
    map = resize_heatmap(*heatmap, size);
  } else {
    map = saliency::baseline_saliency(s->image);
  }
  try {
    const saliency::AutoClicks autos = saliency::synthesize_clicks(map);
    for (const saliency::Point& p : autos.points) {
      s->auto_model.push_back({p.x, p.y, Polarity::kForeground});
      s->auto_image.push_back(
          {model_to_image(p.x, size, image.width), model_to_image(p.y, size, image.height)});
    }
  } catch (const saliency::NoSalientRegion&) {
    // The user has to make the first click.
  }
  s->output = run(*s);

  std::lock_guard<std::mutex> lock(store_mu_);
  s->id = fresh_id();
  while (sessions_.size() >= config_.max_sessions) {
    sessions_.erase(lru_.back());
    lru_.pop_back();
  }
  lru_.push_front(s->id);
  sessions_[s->id] = {s, lru_.begin()};
  return snapshot(*s);
}

std::shared_ptr<Engine::Session> Engine::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(store_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound(id);
  lru_.splice(lru_.begin(), lru_, it->second.second);
  return it->second.first;
}

SessionState Engine::add_click(const std::string& id, const Click& click) {
  const std::shared_ptr<Session> s = find(id);
  std::lock_guard<std::mutex> lock(s->mu);
  if (click.x < 0 || click.x >= s->width || click.y < 0 || click.y >= s->height) {
    throw ValidationError("click (" + std::to_string(click.x) + ", " + std::to_string(click.y) +
                          ") is outside the " + std::to_string(s->width) + "x" +
                          std::to_string(s->height) + " image");
  }
  s->clicks.push_back(click);
  s->output = run(*s);
  return snapshot(*s);
}

SessionState Engine::undo_click(const std::string& id) {
  const std::shared_ptr<Session> s = find(id);
  std::lock_guard<std::mutex> lock(s->mu);
  if (s->clicks.empty()) throw ValidationError("session " + id + " has no click to undo");
  s->clicks.pop_back();
  s->output = run(*s);
  return snapshot(*s);
}

SessionState Engine::get(const std::string& id) {
  const std::shared_ptr<Session> s = find(id);
  std::lock_guard<std::mutex> lock(s->mu);
  return snapshot(*s);
}

bool Engine::remove(const std::string& id) {
  std::lock_guard<std::mutex> lock(store_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return false;
  lru_.erase(it->second.second);
  sessions_.erase(it);
  return true;
}

std::optional<SegmentationOutput> Engine::replay(const std::string& id) {
  const std::shared_ptr<Session> s = find(id);
  std::lock_guard<std::mutex> lock(s->mu);
  return run(*s);
}

BinaryMask Engine::mask(const std::string& id, std::optional<int> index) {
  return output_mask(get(id), index);
}

std::size_t Engine::session_count() {
  std::lock_guard<std::mutex> lock(store_mu_);
  return sessions_.size();
}

BinaryMask output_mask(const SessionState& s, std::optional<int> index) {
  if (!s.output) throw ValidationError("session " + s.id + " has no mask yet");
  const int k = static_cast<int>(s.output->iou_scores.size());
  const int i = index.value_or(s.output->best_index);
  if (i < 0 || i >= k) {
    throw ValidationError("candidate " + std::to_string(i) + " out of range [0, " + std::to_string(k) + ")");
  }
  const BinaryMask m = candidate_mask(*s.output, i);
  if (m.height == s.height && m.width == s.width) return m;
  return data::resize_mask(m, s.height, s.width);
}

}  // namespace sqsm::service
