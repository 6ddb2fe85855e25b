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

#include "promptseg/rle.hpp"

namespace promptseg
{
namespace
{

std::vector<std::int64_t> runs_of(const std::uint8_t * data, std::size_t n)
{
  std::vector<std::int64_t> runs;
  std::size_t i = 0;
  while (i < n) {
    if (!data[i]) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < n && data[i]) {
      ++i;
    }
    runs.push_back(static_cast<std::int64_t>(start));
    runs.push_back(static_cast<std::int64_t>(i - start));
  }
  return runs;
}

}  // namespace

RunLength encode_rle(const BinaryMask & mask)
{
  const Shape3 & s = mask.shape();
  return {{s[0], s[1], s[2]}, runs_of(mask.data.data(), mask.data.size())};
}

RunLength encode_rle_slice(const BinaryMask & mask, int z)
{
  const Shape3 & s = mask.shape();
  if (z < 0 || z >= s[0]) {
    throw InvalidArgument("slice index " + std::to_string(z) + " out of range");
  }
  const std::size_t plane = static_cast<std::size_t>(s[1]) * s[2];
  return {{s[1], s[2]}, runs_of(mask.data.data() + static_cast<std::size_t>(z) * plane, plane)};
}

std::vector<std::uint8_t> decode_rle_flat(const RunLength & rle)
{
  std::size_t n = 1;
  for (int d : rle.shape) {
    if (d < 0) {
      throw InvalidArgument("rle: negative dimension");
    }
    n *= static_cast<std::size_t>(d);
  }
  if (rle.runs.size() % 2 != 0) {
    throw InvalidArgument("rle: odd number of run entries");
  }
  std::vector<std::uint8_t> out(n, 0);
  std::int64_t end = -1;
  for (std::size_t i = 0; i < rle.runs.size(); i += 2) {
    const std::int64_t start = rle.runs[i];
    const std::int64_t len = rle.runs[i + 1];
    if (start <= end || len <= 0 || start + len > static_cast<std::int64_t>(n)) {
      throw InvalidArgument("rle: runs must be positive, increasing, non-overlapping and in range");
    }
    std::fill(out.begin() + start, out.begin() + start + len, std::uint8_t{1});
    end = start + len - 1;
  }
  return out;
}

BinaryMask decode_rle(const RunLength & rle)
{
  if (rle.shape.size() != 3) {
    throw InvalidArgument("rle: expected a 3D shape");
  }
  return BinaryMask(Geometry::with_shape({rle.shape[0], rle.shape[1], rle.shape[2]}), decode_rle_flat(rle));
}

nlohmann::json to_json(const RunLength & rle)
{
  return {{"shape", rle.shape}, {"order", "C"}, {"runs", rle.runs}};
}

RunLength rle_from_json(const nlohmann::json & j)
{
  try {
    if (j.at("order").get<std::string>() != "C") {
      throw InvalidArgument("rle: only C order is supported");
    }
    return {j.at("shape").get<std::vector<int>>(), j.at("runs").get<std::vector<std::int64_t>>()};
  } catch (const nlohmann::json::exception & e) {
    throw InvalidArgument(std::string("rle: ") + e.what());
  }
}

}  // namespace promptseg
