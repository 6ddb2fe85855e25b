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
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/model.hpp"
#include "promptseg/prompt.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

struct SessionConfig
{
  bool baseline_round0 = false;  ///< run a prompt-free prediction at creation
  bool soft_previous = false;    ///< feed probabilities instead of the binary mask back
  std::uint64_t seed = 0;
};

/// Immutable-by-convention value: operations return a new state and never touch
/// their input, so a failed call leaves the caller's state as it was.
struct SessionState
{
  std::string case_id;
  std::shared_ptr<const ImageVolume> image;  ///< preprocessed
  PreprocessRecord record;
  std::shared_ptr<const Predictor> model;
  SessionConfig config;
  std::vector<Prompt> prompts;
  std::vector<int> round_sizes;  ///< prompts contributed by each round
  std::vector<std::shared_ptr<const Prediction>> predictions;
  std::shared_ptr<const Prediction> baseline;
  int round = 0;

  GuidanceLayout layout() const { return model->guidance().layout; }
  /// Latest prediction (the baseline at round 0, if any); null when there is none.
  const Prediction * current() const;

  /// Deep comparison of history and predictions; the model is compared by identity.
  friend bool operator==(const SessionState & a, const SessionState & b);
};

/// Preprocessed image plus its record. Identity records are accepted for already
/// preprocessed inputs (see identity_record).
SessionState create_session(ImageVolume image, PreprocessRecord record, std::shared_ptr<const Predictor> model,
                            SessionConfig cfg = {}, std::string case_id = {});

/// Record describing "no preprocessing" for a volume's geometry.
PreprocessRecord identity_record(const Geometry & g);

/// One round driven by a single prompt.
std::pair<SessionState, BinaryMask> add_prompt(const SessionState & state, const Prompt & prompt);
/// One round driven by several prompts at once (may be empty: a re-prediction).
std::pair<SessionState, BinaryMask> add_prompts(const SessionState & state, std::span<const Prompt> prompts);

SessionState undo(const SessionState & state);

/// Current mask mapped back to the original geometry. An empty prediction is
/// exported as all zeros and `empty` (when given) is set.
BinaryMask export_result(const SessionState & state, bool * empty = nullptr);

/// {"case_id", "seed", "layout", "prompts": [...], "round_sizes": [...]}
nlohmann::json session_transcript(const SessionState & state);
/// Replays a transcript on a fresh session.
SessionState replay_transcript(const nlohmann::json & transcript, ImageVolume image, PreprocessRecord record,
                               std::shared_ptr<const Predictor> model, SessionConfig cfg = {});

}  // namespace promptseg
