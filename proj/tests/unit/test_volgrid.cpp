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

#include <cmath>
#include <cstring>
#include <numeric>

#include "fixtures.hpp"
#include "promptseg/evalkit.hpp"
#include "promptseg/volgrid.hpp"

using namespace promptseg;
using fixtures::ellipsoid;
using fixtures::TempDir;

namespace
{

double mean_of(const ImageVolume & v)
{
  double s = 0.0;
  for (float x : v.data) {
    s += x;
  }
  return s / static_cast<double>(v.data.size());
}

double pop_sd(const ImageVolume & v)
{
  const double m = mean_of(v);
  double s = 0.0;
  for (float x : v.data) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(v.data.size()));
}

}  // namespace

TEST(Geometry, ValidateRejectsBadSpacingAndDirection)
{
  Geometry g = Geometry::with_shape({2, 2, 2});
  EXPECT_NO_THROW(g.validate());
  g.spacing[1] = 0.0;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = Geometry::with_shape({2, 2, 2});
  g.direction = {1, 0, 0, 0, 1, 0, 0, 1, 0};
  EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(Nifti, ImageRoundTripPreservesDataAndGeometry)
{
  TempDir dir("nifti");
  ImageVolume v = fixtures::random_image({64, 64, 64}, 7, -3.0, 3.0);
  v.geometry.spacing = {1.0, 0.98, 0.98};
  v.geometry.origin = {-12.5, 3.25, 100.0};
  v.geometry.direction = {0, 1, 0, 1, 0, 0, 0, 0, -1};
  for (const char * name : {"a.nii", "a.nii.gz"}) {
    save_volume(v, dir.file(name));
    const ImageVolume back = load_volume(dir.file(name));
    EXPECT_EQ(back.data, v.data);
    EXPECT_EQ(back.geometry.shape, v.geometry.shape);
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(back.geometry.spacing[k], v.geometry.spacing[k], 1e-6);
    }
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(back.geometry.origin[k], v.geometry.origin[k], 1e-4);
    }
    for (int k = 0; k < 9; ++k) {
      EXPECT_NEAR(back.geometry.direction[k], v.geometry.direction[k], 1e-6);
    }
  }
}

TEST(Nifti, MaskRoundTripAndOnDiskTypes)
{
  TempDir dir("nifti");
  Rng rng(3);
  const BinaryMask m = fixtures::random_mask({32, 32, 32}, rng, 0.3);
  save_volume(m, dir.file("m.nii"));
  EXPECT_EQ(load_mask(dir.file("m.nii")).data, m.data);

  const std::string mask_bytes = encode_volume(m, false);
  const std::string img_bytes = encode_volume(ImageVolume(Geometry::with_shape({2, 2, 2}), 1.0F), false);
  std::int16_t dtype = 0;
  std::memcpy(&dtype, mask_bytes.data() + 70, 2);
  EXPECT_EQ(dtype, 2);  // uint8
  std::memcpy(&dtype, img_bytes.data() + 70, 2);
  EXPECT_EQ(dtype, 16);  // float32
}

TEST(Nifti, RejectsFourDimensionalFiles)
{
  const ImageVolume v(Geometry::with_shape({2, 3, 4}), 1.0F);
  std::string bytes = encode_volume(v, false);
  const std::int16_t ndim = 4;
  const std::int16_t nt = 2;
  std::memcpy(bytes.data() + 40, &ndim, 2);
  std::memcpy(bytes.data() + 48, &nt, 2);
  bytes += bytes.substr(352);
  try {
    decode_volume(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size()));
    FAIL() << "4D volume accepted";
  } catch (const IoError & e) {
    EXPECT_NE(std::string(e.what()).find("expected 3D scalar volume"), std::string::npos) << e.what();
  }
}

TEST(Nifti, RejectsNonFiniteAndGarbage)
{
  std::string bytes = encode_volume(ImageVolume(Geometry::with_shape({2, 2, 2}), 1.0F), false);
  const float nan = std::nanf("");
  std::memcpy(bytes.data() + 352 + 4 * 3, &nan, 4);
  auto span = [](const std::string & b) {
    return std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(b.data()), b.size());
  };
  EXPECT_THROW(decode_volume(span(bytes)), IoError);
  const std::string junk = "definitely not a nifti file";
  EXPECT_THROW(decode_volume(span(junk)), IoError);
  EXPECT_THROW(load_volume("/nonexistent/file.nii"), IoError);
}

TEST(Zscore, HandComputedThreeValues)
{
  ImageVolume v(Geometry::with_shape({1, 1, 3}), std::vector<float>{1.0F, 2.0F, 3.0F});
  const ImageVolume z = zscore_normalize(v);
  // oracle: mean 2, population sd sqrt(2/3)
  const double sd = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(z.data[0], (1.0 - 2.0) / sd, 1e-6);
  EXPECT_NEAR(z.data[1], 0.0, 1e-6);
  EXPECT_NEAR(z.data[2], (3.0 - 2.0) / sd, 1e-6);
  EXPECT_NEAR(z.data[2], 1.224744871, 1e-6);
}

TEST(Zscore, MomentsAndIdempotence)
{
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ImageVolume v = fixtures::random_image({17, 23, 19}, seed, 10.0, 500.0);
    const ImageVolume z = zscore_normalize(v);
    EXPECT_LT(std::abs(mean_of(z)), 1e-6);
    EXPECT_LT(std::abs(pop_sd(z) - 1.0), 1e-6);
    EXPECT_EQ(z.geometry, v.geometry);
    const ImageVolume zz = zscore_normalize(z);
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      ASSERT_NEAR(zz.data[i], z.data[i], 1e-6);
    }
  }
}

TEST(Zscore, ConstantVolumeIsDegenerate)
{
  const ImageVolume v(Geometry::with_shape({4, 4, 4}), 5.0F);
  try {
    zscore_normalize(v);
    FAIL();
  } catch (const InvalidArgument & e) {
    EXPECT_NE(std::string(e.what()).find("degenerate intensity distribution"), std::string::npos);
  }
}

TEST(Resample, IdentitySpacingIsExact)
{
  ImageVolume v = fixtures::random_image({9, 10, 11}, 5);
  v.geometry.spacing = {1.5, 0.7, 0.7};
  const ImageVolume r = resample(v, v.geometry.spacing, Interpolation::trilinear);
  EXPECT_EQ(r.data, v.data);
  EXPECT_EQ(r.geometry, v.geometry);
  const BinaryMask m = ellipsoid({9, 10, 11}, {4, 5, 5}, {3, 3, 4}, {1.5, 0.7, 0.7});
  EXPECT_EQ(resample(m, m.geometry.spacing).data, m.data);
}

TEST(Resample, ShapeArithmeticAndExtent)
{
  const ImageVolume v = fixtures::random_image({64, 64, 64}, 2);
  const ImageVolume r = resample(v, {2.0, 2.0, 2.0}, Interpolation::trilinear);
  EXPECT_EQ(r.shape(), (Shape3{32, 32, 32}));
  EXPECT_EQ(r.geometry.origin, v.geometry.origin);
  ImageVolume odd = fixtures::random_image({5, 7, 9}, 2);
  odd.geometry.spacing = {1.0, 1.0, 3.0};
  EXPECT_EQ(resample(odd, {2.0, 2.0, 2.0}, Interpolation::trilinear).shape(), (Shape3{3, 4, 14}));
}

TEST(Resample, MaskRoundTripKeepsDice)
{
  const BinaryMask m = ellipsoid({64, 64, 64}, {31.5, 31.5, 31.5}, {26, 22, 24});
  const BinaryMask down = resample(m, {2.0, 2.0, 2.0});
  for (auto x : down.data) {
    ASSERT_TRUE(x == 0 || x == 1);
  }
  const BinaryMask up = resample_to(down, {1.0, 1.0, 1.0}, m.shape());
  EXPECT_GE(dice(up, m), 0.95);
}

TEST(Resample, TrilinearOnMaskIsRejected)
{
  const BinaryMask m(Geometry::with_shape({4, 4, 4}));
  EXPECT_THROW(resample(m, {2.0, 2.0, 2.0}, Interpolation::trilinear), InvalidArgument);
  EXPECT_THROW(resample(m, {0.0, 1.0, 1.0}), InvalidArgument);
}

TEST(Crop, BoundingBoxAndMargin)
{
  ImageVolume v(Geometry::with_shape({40, 40, 40}), 0.0F);
  for (int z = 10; z < 20; ++z) {
    for (int y = 10; y < 20; ++y) {
      for (int x = 10; x < 20; ++x) {
        v.at(z, y, x) = 1.0F;
      }
    }
  }
  auto [c0, r0] = crop_to_foreground(v, 0);
  EXPECT_EQ(c0.shape(), (Shape3{10, 10, 10}));
  EXPECT_EQ(r0.lower, (Voxel{10, 10, 10}));
  auto [c4, r4] = crop_to_foreground(v, 4);
  EXPECT_EQ(r4.lower, (Voxel{6, 6, 6}));
  EXPECT_EQ(c4.shape(), (Shape3{18, 18, 18}));

  BinaryMask ones(c4.geometry, std::uint8_t{1});
  const BinaryMask full = uncrop(ones, r4);
  EXPECT_EQ(full.geometry, v.geometry);
  for (int z = 0; z < 40; ++z) {
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        const bool inside = z >= 6 && z < 24 && y >= 6 && y < 24 && x >= 6 && x < 24;
        ASSERT_EQ(full.at(z, y, x), inside ? 1 : 0);
      }
    }
  }
  EXPECT_EQ(count_foreground(uncrop(BinaryMask(c4.geometry), r4)), 0U);
  EXPECT_THROW(uncrop(BinaryMask(Geometry::with_shape({3, 3, 3})), r4), InvalidArgument);
  EXPECT_THROW(crop_to_foreground(ImageVolume(Geometry::with_shape({4, 4, 4}), 0.0F)), InvalidArgument);
}

TEST(Crop, UncropOfCropIsIdentityOnForeground)
{
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const BinaryMask m = ellipsoid({30, 28, 26}, {rng.uniform(8, 20), rng.uniform(8, 20), rng.uniform(8, 18)},
                                   {rng.uniform(2, 7), rng.uniform(2, 7), rng.uniform(2, 7)});
    ImageVolume v(m.geometry);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
      v.data[i] = m.data[i] ? 2.0F : 0.0F;
    }
    const int margin = static_cast<int>(rng.uniform_int(0, 6));
    auto [c, rec] = crop_to_foreground(v, margin);
    EXPECT_EQ(uncrop(apply_crop(m, rec), rec).data, m.data);
  }
}

TEST(Preprocess, RecordMapsMasksBackExactly)
{
  ImageVolume v(Geometry::with_shape({30, 30, 30}, {1.0, 1.0, 1.0}), 0.0F);
  const BinaryMask m = ellipsoid({30, 30, 30}, {15, 14, 16}, {6, 7, 5});
  Rng rng(1);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    v.data[i] = m.data[i] ? 3.0F + static_cast<float>(rng.uniform()) : 0.0F;
  }
  const PreparedImage p = preprocess(v);
  EXPECT_LT(std::abs(mean_of(p.image)), 1e-6);
  EXPECT_LT(std::abs(pop_sd(p.image) - 1.0), 1e-6);
  const BinaryMask pre = to_preprocessed(m, p.record);
  EXPECT_EQ(pre.shape(), p.image.shape());
  EXPECT_EQ(to_original(pre, p.record).data, m.data);
}

TEST(Augment, IdentityConfigIsIdentity)
{
  const ImageVolume v = fixtures::random_image({16, 16, 16}, 4);
  const BinaryMask m = ellipsoid({16, 16, 16}, {8, 8, 8}, {4, 5, 3});
  Rng rng(5);
  auto [ai, am] = augment(v, m, AugmentConfig::identity(), rng);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    ASSERT_NEAR(ai.data[i], v.data[i], 1e-5);
  }
  EXPECT_EQ(am.data, m.data);
}

TEST(Augment, DeterministicAndBinary)
{
  const ImageVolume v = fixtures::random_image({20, 20, 20}, 4);
  const BinaryMask m = ellipsoid({20, 20, 20}, {10, 10, 10}, {5, 6, 4});
  Rng a(11);
  Rng b(11);
  auto [ia, ma] = augment(v, m, AugmentConfig{}, a);
  auto [ib, mb] = augment(v, m, AugmentConfig{}, b);
  EXPECT_EQ(ia.data, ib.data);
  EXPECT_EQ(ma.data, mb.data);
  for (auto x : ma.data) {
    ASSERT_TRUE(x == 0 || x == 1);
  }
  EXPECT_THROW(augment(v, BinaryMask(Geometry::with_shape({3, 3, 3})), AugmentConfig{}, a), InvalidArgument);
}

TEST(Augment, VolumeRatioWithinScaleBounds)
{
  const BinaryMask m = ellipsoid({48, 48, 48}, {23.5, 23.5, 23.5}, {10, 8, 12});
  const ImageVolume v(m.geometry, 1.0F);
  AugmentConfig cfg;
  cfg.elastic_probability = 0.0;
  const double lo = std::pow(0.9, 3) * 0.9;
  const double hi = std::pow(1.1, 3) * 1.1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto [ai, am] = augment(v, m, cfg, rng);
    const double ratio = static_cast<double>(count_foreground(am)) / static_cast<double>(count_foreground(m));
    EXPECT_GE(ratio, lo);
    EXPECT_LE(ratio, hi);
  }
}
