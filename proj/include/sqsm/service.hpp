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
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqsm/model.hpp"
#include "sqsm/saliency.hpp"

namespace httplib {
class Server;
}

namespace sqsm::service {

class SessionNotFound : public std::out_of_range {
 public:
  explicit SessionNotFound(const std::string& id) : std::out_of_range("unknown session " + id) {}
};

/// Snapshot of one session. Click coordinates are in the uploaded image's
/// pixel frame; `output` is in the model's S x S frame.
struct SessionState {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<saliency::Point> auto_clicks;  // empty when no salient region was found
  std::vector<Click> clicks;                 // user edits, oldest first
  std::optional<SegmentationOutput> output;
};

struct EngineConfig {
  std::size_t max_sessions = 64;
};

/// Saliency-seeded interactive segmentation over in-memory sessions. Sessions
/// are evicted least-recently-used first. Calls on different sessions may run
/// concurrently; edits to one session are serialised, and model inference is
/// serialised across sessions.
class Engine {
 public:
  Engine(SqueezeSam<float> model, EngineConfig config = {});

  /// Resizes the image to the model input, computes (or takes) the saliency
  /// map, synthesises five clicks and runs the model on them.
  SessionState create_session(const Image& image,
                              const std::optional<saliency::Heatmap>& heatmap = std::nullopt);
  SessionState add_click(const std::string& id, const Click& click);
  /// Drops the latest user click; throws ValidationError when there is none.
  SessionState undo_click(const std::string& id);
  SessionState get(const std::string& id);
  bool remove(const std::string& id);

  /// Recomputes the output from the stored image and click history.
  std::optional<SegmentationOutput> replay(const std::string& id);

  /// Candidate `index` (default: best) resized to the uploaded image size.
  BinaryMask mask(const std::string& id, std::optional<int> index = std::nullopt);

  int input_size() const { return model_.config().input_size; }
  std::size_t session_count();

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    int width = 0, height = 0;
    Image image;  // S x S
    std::vector<Click> auto_model;  // auto clicks in the model frame
    std::vector<saliency::Point> auto_image;
    std::vector<Click> clicks;  // image frame
    std::optional<SegmentationOutput> output;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::optional<SegmentationOutput> run(const Session& s);
  static SessionState snapshot(const Session& s);
  std::string fresh_id();

  SqueezeSam<float> model_;
  EngineConfig config_;
  std::mutex model_mu_;
  std::mutex store_mu_;
  std::list<std::string> lru_;  // most recent first
  std::map<std::string, std::pair<std::shared_ptr<Session>, std::list<std::string>::iterator>> sessions_;
  std::uint64_t counter_ = 0;
};

/// Maps an S x S model-frame point to the pixel frame of a W x H image and back.
int model_to_image(int v, int model_size, int image_extent);
int image_to_model(int v, int image_extent, int model_size);

/// Candidate `index` (default: best) of a snapshot, resized to the image size.
/// Throws ValidationError when the session has no output or the index is out
/// of range.
BinaryMask output_mask(const SessionState& s, std::optional<int> index = std::nullopt);

/// JSON body returned by the session endpoints; `mask_png`, when given, is
/// inlined as base64.
std::string session_json(const SessionState& s, const std::vector<std::uint8_t>* mask_png = nullptr);

/// Registers every /v1 route on the server.
void register_routes(httplib::Server& server, Engine& engine);

/// Port from SQSM_PORT when set, otherwise `fallback`.
int port_from_env(int fallback);

}  // namespace sqsm::service
