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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "promptseg/synthgen.hpp"

using namespace promptseg;

TEST(Phantom, NoiselessTumourIsSeparable)
{
  PhantomConfig cfg = PhantomConfig::easy(48);
  cfg.noise_sigma = 0.0;
  cfg.rim_probability = 0.0;
  cfg.brain_variation = 0.0;
  Rng rng(3);
  const Phantom p = generate_phantom(cfg, rng);
  float inside_min = 1e9F;
  float outside_max = -1e9F;
  for (std::size_t i = 0; i < p.mask.data.size(); ++i) {
    if (p.mask.data[i]) {
      inside_min = std::min(inside_min, p.image.data[i]);
    } else {
      outside_max = std::max(outside_max, p.image.data[i]);
    }
  }
  EXPECT_GT(inside_min, outside_max);
}

TEST(Phantom, SeedDeterminesOutput)
{
  const PhantomConfig cfg = PhantomConfig::hard(32);
  Rng a(9);
  Rng b(9);
  Rng c(10);
  const Phantom pa = generate_phantom(cfg, a);
  const Phantom pb = generate_phantom(cfg, b);
  const Phantom pc = generate_phantom(cfg, c);
  EXPECT_EQ(pa.image, pb.image);
  EXPECT_EQ(pa.mask, pb.mask);
  EXPECT_NE(pa.image, pc.image);
}

TEST(Phantom, VolumeFractionAndComponents)
{
  const PhantomConfig cfg = PhantomConfig::easy(64);
  for (int i = 0; i < 200; ++i) {
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    const Phantom p = generate_phantom(cfg, rng);
    const double frac = static_cast<double>(count_foreground(p.mask)) / static_cast<double>(p.mask.data.size());
    ASSERT_GE(frac, 0.0003) << "phantom " << i;
    ASSERT_LE(frac, 0.025) << "phantom " << i;
    ASSERT_EQ(count_components(p.mask), p.tumor_count) << "phantom " << i;
    ASSERT_GE(p.tumor_count, 1);
    ASSERT_LE(p.tumor_count, 2);
    for (std::size_t v = 0; v < p.image.data.size(); ++v) {
      ASSERT_TRUE(std::isfinite(p.image.data[v]));
      if (p.mask.data[v]) {
        ASSERT_GT(p.image.data[v], 0.0F);
      }
    }
  }
}

TEST(Phantom, ConfigValidation)
{
  PhantomConfig c = PhantomConfig::easy();
  c.contrast_min = 0.01;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = PhantomConfig::easy();
  c.radius_min = 12.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(PhantomConfig::preset("medium"), InvalidArgument);
}

TEST(Components, CountsDiagonalNeighboursAsConnected)
{
  BinaryMask m(Geometry::with_shape({5, 5, 5}));
  m.at(1, 1, 1) = 1;
  m.at(2, 2, 2) = 1;
  m.at(4, 4, 0) = 1;
  EXPECT_EQ(count_components(m), 2);
}

TEST(Dataset, ManifestAndFiles)
{
  fixtures::TempDir a("synth");
  fixtures::TempDir b("synth");
  const PhantomConfig cfg = PhantomConfig::easy(24);
  const Manifest m = generate_dataset(cfg, "easy", 5, 3, 42, a.str());
  generate_dataset(cfg, "easy", 5, 3, 42, b.str());
  EXPECT_EQ(m.split("train").size(), 5U);
  EXPECT_EQ(m.split("val").size(), 3U);
  std::set<std::string> ids;
  for (const auto & c : m.cases) {
    ids.insert(c.id);
  }
  EXPECT_EQ(ids.size(), 8U);
  const Manifest loaded = load_manifest(a.str());
  EXPECT_EQ(to_json(loaded), to_json(m));
  auto read = [](const std::string & p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const auto & entry : std::filesystem::directory_iterator(a.str())) {
    const auto name = entry.path().filename().string();
    EXPECT_EQ(read(entry.path().string()), read(b.file(name))) << name;
  }
  const BinaryMask gt = load_mask(a.file(m.cases[0].label));
  const ImageVolume img = load_volume(a.file(m.cases[0].image));
  EXPECT_EQ(gt.shape(), (Shape3{24, 24, 24}));
  EXPECT_EQ(img.shape(), gt.shape());
}
