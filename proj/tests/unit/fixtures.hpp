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

#include <filesystem>
#include <string>

#include <unistd.h>

#include "promptseg/volgrid.hpp"

namespace fixtures
{

using namespace promptseg;

inline BinaryMask ellipsoid(Shape3 shape, Vec3 centre, Vec3 radii, Vec3 spacing = {1.0, 1.0, 1.0})
{
  BinaryMask m(Geometry::with_shape(shape, spacing));
  for (int z = 0; z < shape[0]; ++z) {
    for (int y = 0; y < shape[1]; ++y) {
      for (int x = 0; x < shape[2]; ++x) {
        const double a = (z - centre[0]) / radii[0];
        const double b = (y - centre[1]) / radii[1];
        const double c = (x - centre[2]) / radii[2];
        m.at(z, y, x) = a * a + b * b + c * c <= 1.0 ? 1 : 0;
      }
    }
  }
  return m;
}

inline ImageVolume random_image(Shape3 shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
  Rng rng(seed);
  ImageVolume v(Geometry::with_shape(shape));
  for (auto & x : v.data) {
    x = static_cast<float>(rng.uniform(lo, hi));
  }
  return v;
}

inline BinaryMask random_mask(Shape3 shape, Rng & rng, double p = 0.5)
{
  BinaryMask m(Geometry::with_shape(shape));
  for (auto & x : m.data) {
    x = rng.bernoulli(p) ? 1 : 0;
  }
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string & tag)
  {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("promptseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string str() const { return path_.string(); }
  std::string file(const std::string & name) const { return (path_ / name).string(); }

private:
  std::filesystem::path path_;
};

}  // namespace fixtures
