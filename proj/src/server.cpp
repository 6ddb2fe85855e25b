// Copyright 2026 The promptseg Authors
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

#include "promptseg/server.hpp"

#include <httplib.h>

#include <chrono>
#include <list>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "promptseg/evalkit.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/session.hpp"

namespace promptseg
{

namespace
{

struct Entry
{
  std::mutex mutex;
  SessionState state;
  std::uint64_t mask_version = 0;
  std::chrono::system_clock::time_point created;
};

struct HttpError
{
  int status;
  std::string message;
};

void send_json(httplib::Response & res, const nlohmann::json & body, int status = 200)
{
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct SegmentationServer::Impl
{
  std::shared_ptr<const Predictor> model;
  ServerConfig cfg;
  httplib::Server http;
  int bound_port = -1;
  std::thread worker;

  mutable std::mutex table_mutex;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions;
  std::list<std::string> lru;  // front = most recent
  std::mt19937_64 id_rng{std::random_device{}()};

  void touch(const std::string & id)
  {
    lru.remove(id);
    lru.push_front(id);
  }

  std::shared_ptr<Entry> find(const std::string & id)
  {
    std::lock_guard<std::mutex> lock(table_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) {
      throw HttpError{404, "unknown session '" + id + "'"};
    }
    touch(id);
    return it->second;
  }

  std::string insert(std::shared_ptr<Entry> e)
  {
    std::lock_guard<std::mutex> lock(table_mutex);
    while (sessions.size() >= cfg.max_sessions) {
      // evict the least recently used idle session
      bool evicted = false;
      for (auto it = lru.rbegin(); it != lru.rend(); ++it) {
        auto & victim = sessions.at(*it);
        std::unique_lock<std::mutex> busy(victim->mutex, std::try_to_lock);
        if (busy.owns_lock()) {
          busy.unlock();
          sessions.erase(*it);
          lru.erase(std::next(it).base());
          evicted = true;
          break;
        }
      }
      if (!evicted) {
        throw HttpError{503, "session capacity reached"};
      }
    }
    std::string id;
    do {
      std::ostringstream os;
      os << std::hex << id_rng();
      id = os.str();
    } while (sessions.count(id));
    sessions.emplace(id, std::move(e));
    lru.push_front(id);
    return id;
  }

  void remove(const std::string & id)
  {
    std::lock_guard<std::mutex> lock(table_mutex);
    if (!sessions.erase(id)) {
      throw HttpError{404, "unknown session '" + id + "'"};
    }
    lru.remove(id);
  }

  template <typename F>
  void guarded(httplib::Response & res, F && f)
  {
    try {
      f();
    } catch (const HttpError & e) {
      send_json(res, {{"error", e.message}}, e.status);
    } catch (const StateError & e) {
      send_json(res, {{"error", e.what()}}, 409);
    } catch (const std::exception & e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  }

  void routes()
  {
    http.Get("/v1/health", [this](const httplib::Request &, httplib::Response & res) {
      std::size_t n = 0;
      {
        std::lock_guard<std::mutex> lock(table_mutex);
        n = sessions.size();
      }
      send_json(res, {{"status", "ok"}, {"sessions", n}, {"channels", model->guidance().total_channels()}});
    });

    http.Post("/v1/sessions", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        PreparedImage prep;
        try {
          const auto * p = reinterpret_cast<const std::uint8_t *>(req.body.data());
          const ImageVolume raw = decode_volume(std::span<const std::uint8_t>(p, req.body.size()));
          prep = preprocess(raw, cfg.preprocess);
        } catch (const std::exception & e) {
          throw HttpError{400, std::string("malformed volume: ") + e.what()};
        }
        auto entry = std::make_shared<Entry>();
        entry->created = std::chrono::system_clock::now();
        const Shape3 shape = prep.image.shape();
        const Vec3 spacing = prep.image.geometry.spacing;
        const Shape3 original = prep.record.original.shape;
        entry->state = create_session(std::move(prep.image), prep.record, model);
        const std::string id = insert(entry);
        send_json(res, {{"session_id", id},
                        {"shape", shape},
                        {"spacing", spacing},
                        {"original_shape", original},
                        {"rounds", 0}});
      });
    });

    http.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        send_json(res, {{"session_id", std::string(req.matches[1])},
                        {"shape", e->state.image->shape()},
                        {"rounds", e->state.round},
                        {"mask_version", e->mask_version},
                        {"prompts", session_transcript(e->state).at("prompts")}});
      });
    });

    http.Post(R"(/v1/sessions/([^/]+)/prompts)", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::vector<Prompt> prompts;
        try {
          const auto body = nlohmann::json::parse(req.body);
          if (body.is_array()) {
            for (const auto & p : body) {
              prompts.push_back(prompt_from_json(p));
            }
          } else {
            prompts.push_back(prompt_from_json(body));
          }
        } catch (const std::exception & ex) {
          throw HttpError{422, std::string("invalid prompt: ") + ex.what()};
        }
        std::lock_guard<std::mutex> lock(e->mutex);
        std::pair<SessionState, BinaryMask> next;
        try {
          next = add_prompts(e->state, prompts);
        } catch (const InvalidArgument & ex) {
          throw HttpError{422, std::string("invalid prompt: ") + ex.what()};
        }
        const Prediction * before = e->state.current();
        std::size_t changed = 0;
        for (std::size_t i = 0; i < next.second.data.size(); ++i) {
          changed += (before ? before->mask.data[i] : 0) != next.second.data[i];
        }
        e->state = std::move(next.first);
        e->mask_version += 1;
        send_json(res, {{"round", e->state.round}, {"changed_voxels", changed}, {"mask_version", e->mask_version}});
      });
    });

    http.Get(R"(/v1/sessions/([^/]+)/mask)", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        if (e->state.round < 1) {
          throw HttpError{409, "no prediction yet"};
        }
        const BinaryMask & m = e->state.current()->mask;
        nlohmann::json body;
        if (req.has_param("slice")) {
          int z = 0;
          try {
            z = std::stoi(req.get_param_value("slice"));
          } catch (const std::exception &) {
            throw HttpError{400, "slice must be an integer"};
          }
          if (z < 0 || z >= m.shape()[0]) {
            throw HttpError{404, "slice out of range"};
          }
          body = to_json(encode_rle_slice(m, z));
          body["slice"] = z;
        } else {
          body = to_json(encode_rle(m));
        }
        body["round"] = e->state.round;
        body["mask_version"] = e->mask_version;
        send_json(res, body);
      });
    });

    http.Get(R"(/v1/sessions/([^/]+)/slice/(-?\d+))", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        const ImageVolume & img = *e->state.image;
        const int z = std::stoi(req.matches[2]);
        if (z < 0 || z >= img.shape()[0]) {
          throw HttpError{404, "slice out of range"};
        }
        float lo = *std::min_element(img.data.begin(), img.data.end());
        float hi = *std::max_element(img.data.begin(), img.data.end());
        if (req.has_param("window")) {
          const std::string w = req.get_param_value("window");
          const auto comma = w.find(',');
          try {
            if (comma == std::string::npos) {
              throw std::invalid_argument("missing comma");
            }
            lo = std::stof(w.substr(0, comma));
            hi = std::stof(w.substr(comma + 1));
          } catch (const std::exception &) {
            throw HttpError{400, "window must be 'lo,hi'"};
          }
          if (!(hi > lo)) {
            throw HttpError{400, "window upper bound must exceed the lower bound"};
          }
        } else if (!(hi > lo)) {
          hi = lo + 1.0F;
        }
        const std::string png = encode_png_gray(img.shape()[2], img.shape()[1], window_slice(img, z, lo, hi));
        res.set_content(png, "image/png");
      });
    });

    http.Post(R"(/v1/sessions/([^/]+)/undo)", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        if (e->state.round < 1) {
          throw HttpError{409, "nothing to undo at round 0"};
        }
        e->state = undo(e->state);
        e->mask_version += 1;
        send_json(res, {{"round", e->state.round}, {"mask_version", e->mask_version}});
      });
    });

    http.Get(R"(/v1/sessions/([^/]+)/export)", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        if (e->state.round < 1) {
          throw HttpError{409, "no prediction to export yet"};
        }
        bool empty = false;
        const BinaryMask m = export_result(e->state, &empty);
        if (empty) {
          res.set_header("X-Warning", "empty segmentation");
        }
        res.set_header("Content-Disposition", "attachment; filename=\"mask.nii.gz\"");
        res.set_content(encode_volume(m, true), "application/gzip");
      });
    });

    http.Get(R"(/v1/sessions/([^/]+)/transcript)", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        auto e = find(req.matches[1]);
        std::lock_guard<std::mutex> lock(e->mutex);
        send_json(res, session_transcript(e->state));
      });
    });

    http.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request & req, httplib::Response & res) {
      guarded(res, [&] {
        remove(req.matches[1]);
        res.status = 204;
      });
    });

    // the library default also sets SO_REUSEPORT, which lets a second server share a busy port
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void *>(&yes), sizeof(yes));
    });

    if (!cfg.ui_dir.empty() && !http.set_mount_point("/ui", cfg.ui_dir)) {
      throw IoError("ui directory does not exist: " + cfg.ui_dir);
    }
  }
};

SegmentationServer::SegmentationServer(std::shared_ptr<const Predictor> model, ServerConfig cfg)
    : impl_(std::make_unique<Impl>())
{
  if (!model) {
    throw InvalidArgument("server needs a model");
  }
  if (cfg.max_sessions == 0) {
    throw InvalidArgument("max_sessions must be >= 1");
  }
  impl_->model = std::move(model);
  impl_->cfg = std::move(cfg);
  impl_->routes();
}

SegmentationServer::~SegmentationServer()
{
  stop();
}

int SegmentationServer::bind()
{
  if (impl_->bound_port >= 0) {
    return impl_->bound_port;
  }
  if (impl_->cfg.port == 0) {
    impl_->bound_port = impl_->http.bind_to_any_port(impl_->cfg.host);
  } else if (impl_->http.bind_to_port(impl_->cfg.host, impl_->cfg.port)) {
    impl_->bound_port = impl_->cfg.port;
  }
  if (impl_->bound_port <= 0) {
    impl_->bound_port = -1;
    throw IoError("cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
  }
  return impl_->bound_port;
}

void SegmentationServer::listen()
{
  bind();
  impl_->http.listen_after_bind();
}

void SegmentationServer::start()
{
  bind();
  impl_->worker = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void SegmentationServer::stop()
{
  impl_->http.stop();
  if (impl_->worker.joinable()) {
    impl_->worker.join();
  }
}

int SegmentationServer::port() const
{
  return impl_->bound_port;
}

std::size_t SegmentationServer::session_count() const
{
  std::lock_guard<std::mutex> lock(impl_->table_mutex);
  return impl_->sessions.size();
}

std::string SegmentationServer::endpoint_table()
{
  return "GET    /v1/health                     service status\n"
         "POST   /v1/sessions                   upload NIfTI, create session\n"
         "GET    /v1/sessions/{id}              session summary\n"
         "POST   /v1/sessions/{id}/prompts      add prompt(s), run one round\n"
         "GET    /v1/sessions/{id}/mask[?slice] current mask as RLE\n"
         "GET    /v1/sessions/{id}/slice/{z}    windowed slice PNG (?window=lo,hi)\n"
         "POST   /v1/sessions/{id}/undo         drop the last round\n"
         "GET    /v1/sessions/{id}/export       mask in original geometry (NIfTI)\n"
         "GET    /v1/sessions/{id}/transcript   prompt history for replay\n"
         "DELETE /v1/sessions/{id}              close session\n";
}

}  // namespace promptseg
