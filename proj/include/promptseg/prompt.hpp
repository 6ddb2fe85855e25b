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

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/volgrid.hpp"

namespace promptseg
{

enum class Polarity { positive, negative };

enum class PromptKind { point, box, lasso, scribble };

inline constexpr std::array<PromptKind, 4> kAllPromptKinds{PromptKind::point, PromptKind::box, PromptKind::lasso,
                                                           PromptKind::scribble};

std::string_view to_string(PromptKind kind);
std::string_view to_string(Polarity polarity);
PromptKind parse_prompt_kind(std::string_view name);

/// Solid ball of voxels within Euclidean distance `radius` of `center`.
struct PointPrompt
{
  Voxel center;
  int radius = 1;
  friend bool operator==(const PointPrompt &, const PointPrompt &) = default;
};

/// Axial rectangle; `min` inclusive, `max` exclusive.
struct BoxPrompt
{
  int slice = 0;
  Pixel min;
  Pixel max;
  friend bool operator==(const BoxPrompt &, const BoxPrompt &) = default;
};

/// Open polyline on one axial slice.
struct ScribblePrompt
{
  int slice = 0;
  std::vector<Pixel> vertices;
  int thickness = 1;
  friend bool operator==(const ScribblePrompt &, const ScribblePrompt &) = default;
};

/// Closed simple polygon on one axial slice; the last vertex connects to the first.
struct LassoPrompt
{
  int slice = 0;
  std::vector<Pixel> vertices;
  friend bool operator==(const LassoPrompt &, const LassoPrompt &) = default;
};

struct Prompt
{
  std::variant<PointPrompt, BoxPrompt, LassoPrompt, ScribblePrompt> shape;
  Polarity polarity = Polarity::positive;

  PromptKind kind() const { return static_cast<PromptKind>(shape.index()); }
  friend bool operator==(const Prompt &, const Prompt &) = default;
};

inline constexpr int kMinPointRadius = 1;
inline constexpr int kMaxPointRadius = 5;
inline constexpr std::size_t kMinScribbleVertices = 2;
inline constexpr std::size_t kMaxScribbleVertices = 8;
inline constexpr std::size_t kMinLassoVertices = 4;
inline constexpr std::size_t kMaxLassoVertices = 12;

/// Throws InvalidArgument if the prompt violates its own invariants or leaves the grid.
void validate_prompt(const Prompt & prompt, const Shape3 & shape);

/// Wire format. Exactly the fields of the matching kind must be present.
nlohmann::json to_json(const Prompt & prompt);
Prompt prompt_from_json(const nlohmann::json & j);

/// Stamps the prompt into a {0,1} mask on the given grid.
///  point    -> voxels with |v - center| <= radius
///  box      -> [min, max) on its slice
///  scribble -> integer-stepped polyline, thickness 2 adds the +y/+x neighbours
///  lasso    -> pixel centres inside (even-odd) or on the polygon boundary
BinaryMask rasterize_prompt(const Prompt & prompt, const Geometry & geometry);

/// Same as rasterize_prompt but writes max(existing, 1) into `target`.
void stamp_prompt(const Prompt & prompt, const Shape3 & shape, std::span<float> target);

// Planar geometry helpers shared with the samplers.
/// Pixels visited by integer line stepping from a to b, both ends included.
std::vector<Pixel> line_pixels(Pixel a, Pixel b);
/// True if the closed polygon has no two non-adjacent edges touching and adjacent edges meet only at their shared vertex.
bool is_simple_polygon(std::span<const Pixel> vertices);
/// Twice the signed area of the closed polygon.
long long polygon_area2(std::span<const Pixel> vertices);

}  // namespace promptseg
