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

// Single-slice building blocks of the samplers, exposed for tests.

#include <optional>

#include "promptseg/promptsim.hpp"

namespace promptseg::detail
{

std::optional<ScribblePrompt> sample_scribble_on_slice(const BinaryMask & mask, int z, Rng & rng, const GuidanceConfig & cfg);

std::optional<LassoPrompt> sample_lasso_on_slice(const BinaryMask & mask, int z, int vertex_count, Rng & rng, const GuidanceConfig & cfg);

/// Component pixels with at least one 4-neighbour outside the foreground.
std::vector<Pixel> boundary_pixels(std::span<const Pixel> component, const BinaryMask & mask, int z);

}  // namespace promptseg::detail
