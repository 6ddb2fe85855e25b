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

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/prompt.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

enum class GuidanceLayout {
  shared,    ///< one positive and one negative channel for all prompt kinds
  per_type,  ///< one positive and one negative channel per prompt kind
};

struct GuidanceConfig
{
  GuidanceLayout layout = GuidanceLayout::shared;
  int point_radius_min = 1;
  int point_radius_max = 3;
  int box_margin_min = 2;
  int box_margin_max = 8;
  double jitter = 2.0;          ///< box corner jitter and scribble vertex jitter, voxels
  double wavy_amplitude = 1.0;  ///< scribble sinusoidal offset, voxels
  double wavy_frequency = 1.0;  ///< scribble sinusoid cycles along the path
  double lasso_jitter = 1.0;    ///< radial displacement of lasso vertices, voxels

  void validate() const;
  int guidance_channels() const { return layout == GuidanceLayout::shared ? 2 : 8; }
  int total_channels() const { return 2 + guidance_channels(); }
};

nlohmann::json to_json(const GuidanceConfig & cfg);
GuidanceConfig guidance_config_from_json(const nlohmann::json & j);

/// Foreground voxel count of each axial slice.
std::vector<std::size_t> slice_areas(const BinaryMask & mask);

/// Draws z with probability area(z) / total area.
int select_slice_weighted(const BinaryMask & mask, Rng & rng);

/// 1 or 2 positive points, centres uniform over foreground voxels.
std::vector<Prompt> simulate_point_prompts(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg);

/// Margin-expanded, jittered bounding box of the foreground on an area-weighted slice.
Prompt simulate_box_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg);

/// 2 to 8 in-tumour control points joined in random order, perturbed, kept inside the mask.
Prompt simulate_scribble_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg);

/// 4 to 12 radially jittered boundary samples forming a simple polygon.
Prompt simulate_lasso_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg);

/// Dispatches to the sampler for `kind`; points may return two prompts.
std::vector<Prompt> simulate_prompts(PromptKind kind, const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg);

/// Single corrective click at a uniformly drawn voxel of `region` (false negatives
/// for positive corrections, false positives for negative ones). Empty region -> nullopt.
std::optional<Prompt> sample_corrective_point(const BinaryMask & region, Polarity polarity, Rng & rng, const GuidanceConfig & cfg);

// ---------------------------------------------------------------------------
// Guidance encoding
// ---------------------------------------------------------------------------

/// Channel-major network input: image, previous segmentation, guidance channels.
struct GuidanceStack
{
  Shape3 shape{};
  int channels = 0;
  std::vector<float> data;

  std::span<float> channel(int c)
  {
    return std::span<float>(data).subspan(static_cast<std::size_t>(c) * voxel_count(shape), voxel_count(shape));
  }
  std::span<const float> channel(int c) const
  {
    return std::span<const float>(data).subspan(static_cast<std::size_t>(c) * voxel_count(shape), voxel_count(shape));
  }
  friend bool operator==(const GuidanceStack &, const GuidanceStack &) = default;
};

/// Index of the guidance channel a prompt is stamped into.
int guidance_channel(const Prompt & prompt, GuidanceLayout layout);

/// Previous segmentation is optional; a BinaryMask or a probability map in [0,1] is accepted.
GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image, const GuidanceConfig & cfg);
GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image, const BinaryMask & previous,
                              const GuidanceConfig & cfg);
GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image,
                              const ProbabilityMap & previous, const GuidanceConfig & cfg);

}  // namespace promptseg
