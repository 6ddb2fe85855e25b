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

#include "promptseg/nn.hpp"
#include "promptseg/promptsim.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

/// Anything that turns a guidance stack into per-voxel foreground probabilities.
class Predictor
{
public:
  virtual ~Predictor() = default;

  virtual const GuidanceConfig & guidance() const = 0;
  /// Tile edge used by the default sliding-window predict().
  virtual Shape3 patch_size() const = 0;
  /// Probabilities for one patch-sized stack (channel-major, like the input).
  virtual std::vector<float> forward_patch(const GuidanceStack & patch) const = 0;

  /// Whole-volume probabilities. Default: Gaussian-weighted sliding window.
  virtual std::vector<float> predict(const GuidanceStack & stack) const;
};

/// Sliding-window inference: 50% overlap, Gaussian importance (sigma = patch / 8),
/// zero padding for volumes smaller than the patch.
std::vector<float> sliding_window(const Predictor & predictor, const GuidanceStack & stack);

/// Importance map used for tile blending, peak 1.
std::vector<float> gaussian_importance(const Shape3 & patch);

/// Tile origins along one axis of length `extent` (extent >= patch).
std::vector<int> tile_starts(int extent, int patch);

class NetworkPredictor final : public Predictor
{
public:
  NetworkPredictor(std::shared_ptr<const ResidualUNet<float>> net, GuidanceConfig guidance, int patch = 64);

  const GuidanceConfig & guidance() const override { return guidance_; }
  Shape3 patch_size() const override { return patch_; }
  std::vector<float> forward_patch(const GuidanceStack & patch) const override;

  const ResidualUNet<float> & network() const { return *net_; }

private:
  std::shared_ptr<const ResidualUNet<float>> net_;
  GuidanceConfig guidance_;
  Shape3 patch_;
};

/// Returns the same probability everywhere.
class ConstantPredictor final : public Predictor
{
public:
  explicit ConstantPredictor(float value, GuidanceConfig guidance = {}, int patch = 32)
      : value_(value), guidance_(guidance), patch_{patch, patch, patch}
  {
  }
  const GuidanceConfig & guidance() const override { return guidance_; }
  Shape3 patch_size() const override { return patch_; }
  std::vector<float> forward_patch(const GuidanceStack & patch) const override
  {
    return std::vector<float>(voxel_count(patch.shape), value_);
  }

private:
  float value_;
  GuidanceConfig guidance_;
  Shape3 patch_;
};

/// Returns a fixed mask (e.g. the ground truth) as probabilities; ignores its input.
class FixedMaskPredictor final : public Predictor
{
public:
  FixedMaskPredictor(BinaryMask mask, GuidanceConfig guidance = {}) : mask_(std::move(mask)), guidance_(guidance) {}
  const GuidanceConfig & guidance() const override { return guidance_; }
  Shape3 patch_size() const override { return mask_.shape(); }
  std::vector<float> forward_patch(const GuidanceStack & patch) const override;
  std::vector<float> predict(const GuidanceStack & stack) const override;

private:
  BinaryMask mask_;
  GuidanceConfig guidance_;
};

struct Prediction
{
  ProbabilityMap probabilities;
  BinaryMask mask;
};

inline constexpr float kMaskThreshold = 0.5F;

BinaryMask binarize(const ProbabilityMap & p, float threshold = kMaskThreshold);

/// Encodes guidance, runs the predictor over the whole volume and thresholds at 0.5.
Prediction predict_full(const Predictor & predictor, const ImageVolume & image, std::span<const Prompt> prompts,
                        const BinaryMask * previous);
Prediction predict_full(const Predictor & predictor, const GuidanceStack & stack, const Geometry & geometry);

// ---------------------------------------------------------------------------
// Weights archive
// ---------------------------------------------------------------------------

struct ModelWeights
{
  NetworkConfig network;
  GuidanceConfig guidance;
  std::vector<Parameter<float>> parameters;
  nlohmann::json metadata = nlohmann::json::object();

  /// Hex FNV-1a of the canonical JSON of the network and guidance configs.
  std::string fingerprint() const;

  static ModelWeights from_network(const ResidualUNet<float> & net, const GuidanceConfig & guidance);
  /// Builds the network and copies parameters in; shape mismatches throw.
  ResidualUNet<float> instantiate() const;
};

std::string config_fingerprint(const NetworkConfig & net, const GuidanceConfig & guidance);

/// Tile edge recorded at training time; instance statistics only match at that size.
int inference_patch(const ModelWeights & w, int fallback = 64);

void save_weights(const ModelWeights & w, const std::string & path);
/// Rejects files whose stored fingerprint disagrees with their config, and (when
/// `expected_fingerprint` is non-empty) files trained for a different config.
ModelWeights load_weights(const std::string & path, const std::string & expected_fingerprint = {});

}  // namespace promptseg
