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

#include <cstdlib>
#include <httplib.h>
#include <json.hpp>

#include "sqsm/data.hpp"
#include "sqsm/service.hpp"

namespace sqsm::service {

using nlohmann::ordered_json;

std::string session_json(const SessionState& s, const std::vector<std::uint8_t>* mask_png) {
  ordered_json j;
  j["session_id"] = s.id;
  j["width"] = s.width;
  j["height"] = s.height;
  j["auto_clicks"] = ordered_json::array();
  for (const saliency::Point& p : s.auto_clicks) j["auto_clicks"].push_back({{"x", p.x}, {"y", p.y}});
  j["clicks"] = ordered_json::array();
  for (const Click& c : s.clicks) {
    j["clicks"].push_back({{"x", c.x}, {"y", c.y}, {"polarity", polarity_name(c.polarity)}});
  }
  j["has_mask"] = s.output.has_value();
  if (s.output) {
    j["mask_url"] = "/v1/session/" + s.id + "/mask.png";
    j["iou_scores"] = s.output->iou_scores;
    j["best_index"] = s.output->best_index;
  } else {
    j["mask_url"] = nullptr;
    j["iou_scores"] = ordered_json::array();
    j["best_index"] = nullptr;
  }
  if (mask_png) {
    const std::string raw(mask_png->begin(), mask_png->end());
    j["mask_png_base64"] = httplib::detail::base64_encode(raw);
  }
  return j.dump();
}

int port_from_env(int fallback) {
  const char* v = std::getenv("SQSM_PORT");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) throw ValidationError(std::string("bad SQSM_PORT value '") + v + "'");
  return static_cast<int>(p);
}

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(ordered_json{{"error", message}}.dump(), "application/json");
}

// Runs `fn`, translating library exceptions to HTTP errors.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionNotFound& e) {
    send_error(res, 404, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const FormatError& e) {
    send_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("bad JSON body: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void reply(const httplib::Request& req, httplib::Response& res, const SessionState& s) {
  std::vector<std::uint8_t> png;
  const bool inline_mask = req.has_param("mask") && req.get_param_value("mask") == "base64";
  if (inline_mask && s.output) png = data::encode_mask_png(output_mask(s));
  res.set_content(session_json(s, inline_mask && s.output ? &png : nullptr), "application/json");
}

}  // namespace

void register_routes(httplib::Server& server, Engine& engine) {
  server.Get("/v1/health", [&engine](const httplib::Request&, httplib::Response& res) {
    res.set_content(ordered_json{{"status", "ok"}, {"input_size", engine.input_size()}}.dump(),
                    "application/json");
  });

  // Body: the raw image, or multipart with an "image" file and an optional
  // grayscale "heatmap" file.
  server.Post("/v1/session", [&engine](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<saliency::Heatmap> heatmap;
      std::vector<std::uint8_t> image_bytes;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) throw ValidationError("multipart upload needs an 'image' part");
        image_bytes = bytes_of(req.get_file_value("image").content);
        if (req.has_file("heatmap")) heatmap = data::decode_heatmap(bytes_of(req.get_file_value("heatmap").content));
      } else {
        image_bytes = bytes_of(req.body);
      }
      reply(req, res, engine.create_session(data::decode_image(image_bytes), heatmap));
    });
  });

  server.Get(R"(/v1/session/([0-9a-f]+))", [&engine](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(req, res, engine.get(req.matches[1])); });
  });

  server.Delete(R"(/v1/session/([0-9a-f]+))", [&engine](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!engine.remove(req.matches[1])) throw SessionNotFound(req.matches[1]);
      res.status = 204;
    });
  });

  server.Post(R"(/v1/session/([0-9a-f]+)/clicks)", [&engine](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const nlohmann::json body = nlohmann::json::parse(req.body);
      Click c;
      c.x = body.at("x").get<int>();
      c.y = body.at("y").get<int>();
      c.polarity = parse_polarity(body.value("polarity", std::string("fg")));
      reply(req, res, engine.add_click(req.matches[1], c));
    });
  });

  server.Delete(R"(/v1/session/([0-9a-f]+)/clicks/last)",
                [&engine](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] { reply(req, res, engine.undo_click(req.matches[1])); });
                });

  server.Get(R"(/v1/session/([0-9a-f]+)/mask\.png)", [&engine](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<int> index;
      if (req.has_param("candidate")) {
        const std::string v = req.get_param_value("candidate");
        try {
          index = std::stoi(v);
        } catch (const std::exception&) {
          throw ValidationError("candidate must be an integer, got '" + v + "'");
        }
      }
      const SessionState s = engine.get(req.matches[1]);
      if (!s.output) throw SessionNotFound(std::string(req.matches[1]) + " mask (no clicks yet)");
      const std::vector<std::uint8_t> png = data::encode_mask_png(output_mask(s, index));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });
}

}  // namespace sqsm::service
