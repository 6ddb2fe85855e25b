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

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/volgrid.hpp"

namespace promptseg
{

/// Foreground runs over the C-order flattening: flat [start, length, start, length, ...].
struct RunLength
{
  std::vector<int> shape;
  std::vector<std::int64_t> runs;
  friend bool operator==(const RunLength &, const RunLength &) = default;
};

RunLength encode_rle(const BinaryMask & mask);
/// Runs of one axial slice, shape [ny, nx].
RunLength encode_rle_slice(const BinaryMask & mask, int z);
/// Rebuilds a 3D mask (unit geometry); throws on malformed runs.
BinaryMask decode_rle(const RunLength & rle);
std::vector<std::uint8_t> decode_rle_flat(const RunLength & rle);

/// {"shape": [...], "order": "C", "runs": [...]}
nlohmann::json to_json(const RunLength & rle);
RunLength rle_from_json(const nlohmann::json & j);

}  // namespace promptseg
