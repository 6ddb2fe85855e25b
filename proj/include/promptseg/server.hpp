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

#pragma once

#include <memory>
#include <string>

#include "promptseg/model.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

struct ServerConfig
{
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 picks a free port
  std::size_t max_sessions = 16;
  std::string ui_dir;  ///< served under /ui when non-empty
  PreprocessConfig preprocess{};
};

/// REST front end over interactive sessions. Sessions live in memory, are evicted
/// least-recently-used beyond the cap, and are serialised per id.
class SegmentationServer
{
public:
  SegmentationServer(std::shared_ptr<const Predictor> model, ServerConfig cfg);
  ~SegmentationServer();
  SegmentationServer(const SegmentationServer &) = delete;
  SegmentationServer & operator=(const SegmentationServer &) = delete;

  /// Binds the socket; returns the bound port. Throws IoError when the port is taken.
  int bind();
  /// Serves until stop(); bind() is called first if needed.
  void listen();
  /// listen() on a background thread; returns once the server accepts connections.
  void start();
  void stop();

  int port() const;
  std::size_t session_count() const;

  /// Method, path and summary of every route, for start-up logging.
  static std::string endpoint_table();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptseg
