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

#include "promptseg/session.hpp"

namespace promptseg
{

const Prediction * SessionState::current() const
{
  if (!predictions.empty()) {
    return predictions.back().get();
  }
  return baseline.get();
}

bool operator==(const SessionState & a, const SessionState & b)
{
  auto same_pred = [](const std::shared_ptr<const Prediction> & x, const std::shared_ptr<const Prediction> & y) {
    if (!x || !y) {
      return !x && !y;
    }
    return x == y || (x->mask.data == y->mask.data && x->probabilities.data == y->probabilities.data &&
                      x->mask.geometry == y->mask.geometry);
  };
  if (a.case_id != b.case_id || a.model != b.model || a.round != b.round || a.prompts != b.prompts ||
      a.round_sizes != b.round_sizes || a.predictions.size() != b.predictions.size() ||
      !same_pred(a.baseline, b.baseline) || a.record.original != b.record.original ||
      a.record.resampled != b.record.resampled || !(a.record.crop == b.record.crop)) {
    return false;
  }
  if (a.image != b.image && (!a.image || !b.image || a.image->data != b.image->data)) {
    return false;
  }
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    if (!same_pred(a.predictions[i], b.predictions[i])) {
      return false;
    }
  }
  return true;
}

PreprocessRecord identity_record(const Geometry & g)
{
  PreprocessRecord r;
  r.original = g;
  r.resampled = g;
  r.crop.original = g;
  r.crop.lower = {0, 0, 0};
  r.crop.upper = {g.shape[0] - 1, g.shape[1] - 1, g.shape[2] - 1};
  return r;
}

SessionState create_session(ImageVolume image, PreprocessRecord record, std::shared_ptr<const Predictor> model,
                            SessionConfig cfg, std::string case_id)
{
  if (!model) {
    throw InvalidArgument("session needs a model");
  }
  validate_image(image);
  if (record.crop.cropped_shape() != image.shape()) {
    throw InvalidArgument("preprocessing record does not match the image shape");
  }
  model->guidance().validate();
  SessionState s;
  s.case_id = std::move(case_id);
  s.image = std::make_shared<const ImageVolume>(std::move(image));
  s.record = std::move(record);
  s.model = std::move(model);
  s.config = cfg;
  if (cfg.baseline_round0) {
    s.baseline = std::make_shared<const Prediction>(predict_full(*s.model, *s.image, {}, nullptr));
  }
  return s;
}

std::pair<SessionState, BinaryMask> add_prompts(const SessionState & state, std::span<const Prompt> prompts)
{
  if (!state.model || !state.image) {
    throw StateError("session is not initialised");
  }
  for (const Prompt & p : prompts) {
    validate_prompt(p, state.image->shape());
  }
  SessionState next = state;
  next.prompts.insert(next.prompts.end(), prompts.begin(), prompts.end());
  const GuidanceConfig & g = state.model->guidance();
  const Prediction * prev = state.current();
  GuidanceStack stack;
  if (prev == nullptr) {
    stack = encode_guidance(next.prompts, *state.image, g);
  } else if (state.config.soft_previous) {
    stack = encode_guidance(next.prompts, *state.image, prev->probabilities, g);
  } else {
    stack = encode_guidance(next.prompts, *state.image, prev->mask, g);
  }
  auto pred = std::make_shared<const Prediction>(predict_full(*state.model, stack, state.image->geometry));
  next.predictions.push_back(pred);
  next.round_sizes.push_back(static_cast<int>(prompts.size()));
  next.round += 1;
  return {std::move(next), pred->mask};
}

std::pair<SessionState, BinaryMask> add_prompt(const SessionState & state, const Prompt & prompt)
{
  return add_prompts(state, std::span<const Prompt>(&prompt, 1));
}

SessionState undo(const SessionState & state)
{
  if (state.round < 1) {
    throw StateError("nothing to undo at round 0");
  }
  SessionState prev = state;
  const int n = prev.round_sizes.back();
  prev.round_sizes.pop_back();
  prev.prompts.resize(prev.prompts.size() - static_cast<std::size_t>(n));
  prev.predictions.pop_back();
  prev.round -= 1;
  return prev;
}

BinaryMask export_result(const SessionState & state, bool * empty)
{
  const Prediction * cur = state.current();
  if (cur == nullptr) {
    throw StateError("no prediction to export yet");
  }
  const BinaryMask & mask = cur->mask;
  if (empty != nullptr) {
    *empty = count_foreground(mask) == 0;
  }
  return to_original(mask, state.record);
}

nlohmann::json session_transcript(const SessionState & state)
{
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto & p : state.prompts) {
    prompts.push_back(to_json(p));
  }
  return {{"case_id", state.case_id},
          {"seed", state.config.seed},
          {"layout", state.model && state.layout() == GuidanceLayout::per_type ? "per_type" : "shared"},
          {"prompts", prompts},
          {"round_sizes", state.round_sizes}};
}

SessionState replay_transcript(const nlohmann::json & transcript, ImageVolume image, PreprocessRecord record,
                               std::shared_ptr<const Predictor> model, SessionConfig cfg)
{
  std::vector<Prompt> prompts;
  std::vector<int> sizes;
  try {
    for (const auto & p : transcript.at("prompts")) {
      prompts.push_back(prompt_from_json(p));
    }
    sizes = transcript.contains("round_sizes") ? transcript.at("round_sizes").get<std::vector<int>>()
                                               : std::vector<int>(prompts.size(), 1);
    cfg.seed = transcript.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception & e) {
    throw InvalidArgument(std::string("malformed transcript: ") + e.what());
  }
  std::size_t total = 0;
  for (int n : sizes) {
    if (n < 0) {
      throw InvalidArgument("malformed transcript: negative round size");
    }
    total += static_cast<std::size_t>(n);
  }
  if (total != prompts.size()) {
    throw InvalidArgument("malformed transcript: round sizes do not add up to the prompt count");
  }
  SessionState s = create_session(std::move(image), std::move(record), std::move(model), cfg,
                                  transcript.value("case_id", std::string()));
  std::size_t pos = 0;
  for (int n : sizes) {
    s = add_prompts(s, std::span<const Prompt>(prompts).subspan(pos, static_cast<std::size_t>(n))).first;
    pos += static_cast<std::size_t>(n);
  }
  return s;
}

}  // namespace promptseg
