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

#include "promptseg/volgrid.hpp"

#include <algorithm>
#include <cmath>

namespace promptseg
{

Geometry Geometry::with_shape(Shape3 shape, Vec3 spacing)
{
  Geometry g;
  g.shape = shape;
  g.spacing = spacing;
  return g;
}

Vec3 Geometry::index_to_world(const Vec3 & index) const
{
  Vec3 w = origin;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      w[r] += direction[r * 3 + k] * spacing[k] * index[k];
    }
  }
  return w;
}

void Geometry::validate() const
{
  for (int k = 0; k < 3; ++k) {
    if (shape[k] < 1) {
      throw InvalidArgument("geometry shape entries must be >= 1");
    }
    if (!(spacing[k] > 0.0) || !std::isfinite(spacing[k])) {
      throw InvalidArgument("geometry spacing entries must be > 0");
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      double dot = 0.0;
      for (int r = 0; r < 3; ++r) {
        dot += direction[r * 3 + a] * direction[r * 3 + b];
      }
      const double expected = a == b ? 1.0 : 0.0;
      if (std::abs(dot - expected) > 1e-6) {
        throw InvalidArgument("geometry direction columns are not orthonormal");
      }
    }
  }
}

std::size_t count_foreground(const BinaryMask & mask)
{
  return static_cast<std::size_t>(std::count_if(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v != 0; }));
}

void validate_mask(const BinaryMask & mask)
{
  if (mask.data.size() != mask.geometry.size()) {
    throw InvalidArgument("mask data size does not match geometry");
  }
  if (std::any_of(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument("mask values must be exactly 0 or 1");
  }
}

void validate_image(const ImageVolume & image)
{
  if (image.data.size() != image.geometry.size()) {
    throw InvalidArgument("image data size does not match geometry");
  }
  if (std::any_of(image.data.begin(), image.data.end(), [](float v) { return !std::isfinite(v); })) {
    throw InvalidArgument("image contains non-finite voxels");
  }
}

}  // namespace promptseg
