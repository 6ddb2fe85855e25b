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

#include <algorithm>
#include <cmath>

#include "promptseg/volgrid.hpp"

namespace promptseg
{
namespace
{

Shape3 resampled_shape(const Geometry & g, const Vec3 & target)
{
  Shape3 s{};
  for (int k = 0; k < 3; ++k) {
    const double extent = g.shape[k] * g.spacing[k] / target[k];
    s[k] = std::max(1, static_cast<int>(std::ceil(extent - 1e-9)));
  }
  return s;
}

void check_spacing(const Vec3 & target)
{
  for (double s : target) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw InvalidArgument("target spacing must be > 0 on every axis");
    }
  }
}

Geometry regrid(const Geometry & g, const Vec3 & spacing, const Shape3 & shape)
{
  Geometry out = g;
  out.spacing = spacing;
  out.shape = shape;
  return out;
}

template <typename T>
Volume<T> resample_nearest(const Volume<T> & in, const Vec3 & spacing, const Shape3 & shape)
{
  const Geometry & g = in.geometry;
  Volume<T> out(regrid(g, spacing, shape));
  std::array<std::vector<int>, 3> lut;
  for (int k = 0; k < 3; ++k) {
    lut[k].resize(shape[k]);
    const double ratio = spacing[k] / g.spacing[k];
    for (int i = 0; i < shape[k]; ++i) {
      const double src = i * ratio;
      lut[k][i] = std::clamp(static_cast<int>(std::floor(src + 0.5)), 0, g.shape[k] - 1);
    }
  }
  for (int z = 0; z < shape[0]; ++z) {
    for (int y = 0; y < shape[1]; ++y) {
      for (int x = 0; x < shape[2]; ++x) {
        out.at(z, y, x) = in.at(lut[0][z], lut[1][y], lut[2][x]);
      }
    }
  }
  return out;
}

ImageVolume resample_linear(const ImageVolume & in, const Vec3 & spacing, const Shape3 & shape)
{
  const Geometry & g = in.geometry;
  ImageVolume out(regrid(g, spacing, shape));
  struct Tap
  {
    int i0, i1;
    double w;
  };
  std::array<std::vector<Tap>, 3> lut;
  for (int k = 0; k < 3; ++k) {
    lut[k].resize(shape[k]);
    const double ratio = spacing[k] / g.spacing[k];
    for (int i = 0; i < shape[k]; ++i) {
      const double src = std::clamp(i * ratio, 0.0, static_cast<double>(g.shape[k] - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, g.shape[k] - 1);
      lut[k][i] = {i0, i1, src - i0};
    }
  }
  for (int z = 0; z < shape[0]; ++z) {
    const Tap tz = lut[0][z];
    for (int y = 0; y < shape[1]; ++y) {
      const Tap ty = lut[1][y];
      for (int x = 0; x < shape[2]; ++x) {
        const Tap tx = lut[2][x];
        if (tz.w == 0.0 && ty.w == 0.0 && tx.w == 0.0) {
          out.at(z, y, x) = in.at(tz.i0, ty.i0, tx.i0);
          continue;
        }
        auto lerp = [](double a, double b, double w) { return a + (b - a) * w; };
        const double c00 = lerp(in.at(tz.i0, ty.i0, tx.i0), in.at(tz.i0, ty.i0, tx.i1), tx.w);
        const double c01 = lerp(in.at(tz.i0, ty.i1, tx.i0), in.at(tz.i0, ty.i1, tx.i1), tx.w);
        const double c10 = lerp(in.at(tz.i1, ty.i0, tx.i0), in.at(tz.i1, ty.i0, tx.i1), tx.w);
        const double c11 = lerp(in.at(tz.i1, ty.i1, tx.i0), in.at(tz.i1, ty.i1, tx.i1), tx.w);
        out.at(z, y, x) = static_cast<float>(lerp(lerp(c00, c01, ty.w), lerp(c10, c11, ty.w), tz.w));
      }
    }
  }
  return out;
}

Geometry cropped_geometry(const Geometry & g, const Voxel & lower, const Shape3 & shape)
{
  Geometry out = g;
  out.shape = shape;
  out.origin = g.index_to_world({static_cast<double>(lower.z), static_cast<double>(lower.y), static_cast<double>(lower.x)});
  return out;
}

}  // namespace

ImageVolume zscore_normalize(const ImageVolume & image, bool nonzero_only)
{
  validate_image(image);
  double sum = 0.0;
  std::size_t n = 0;
  for (float v : image.data) {
    if (!nonzero_only || v != 0.0F) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) {
    throw InvalidArgument("degenerate intensity distribution");
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (float v : image.data) {
    if (!nonzero_only || v != 0.0F) {
      sq += (v - mean) * (v - mean);
    }
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  if (!(sd > 1e-8)) {
    throw InvalidArgument("degenerate intensity distribution");
  }
  ImageVolume out = image;
  for (float & v : out.data) {
    if (!nonzero_only || v != 0.0F) {
      v = static_cast<float>((v - mean) / sd);
    }
  }
  return out;
}

ImageVolume resample(const ImageVolume & image, const Vec3 & target_spacing, Interpolation mode)
{
  check_spacing(target_spacing);
  if (target_spacing == image.geometry.spacing) {
    return image;
  }
  const Shape3 shape = resampled_shape(image.geometry, target_spacing);
  return mode == Interpolation::nearest ? resample_nearest(image, target_spacing, shape)
                                        : resample_linear(image, target_spacing, shape);
}

BinaryMask resample(const BinaryMask & mask, const Vec3 & target_spacing, Interpolation mode)
{
  check_spacing(target_spacing);
  if (mode != Interpolation::nearest) {
    throw InvalidArgument("masks must be resampled with nearest interpolation");
  }
  if (target_spacing == mask.geometry.spacing) {
    return mask;
  }
  return resample_nearest(mask, target_spacing, resampled_shape(mask.geometry, target_spacing));
}

BinaryMask resample_to(const BinaryMask & mask, const Vec3 & target_spacing, const Shape3 & target_shape)
{
  check_spacing(target_spacing);
  if (target_spacing == mask.geometry.spacing && target_shape == mask.geometry.shape) {
    return mask;
  }
  return resample_nearest(mask, target_spacing, target_shape);
}

std::pair<ImageVolume, CropRecord> crop_to_foreground(const ImageVolume & image, int margin, float threshold)
{
  if (margin < 0) {
    throw InvalidArgument("crop margin must be >= 0");
  }
  const Shape3 & s = image.geometry.shape;
  Voxel lo{s[0], s[1], s[2]};
  Voxel hi{-1, -1, -1};
  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        if (image.at(z, y, x) > threshold) {
          lo = {std::min(lo.z, z), std::min(lo.y, y), std::min(lo.x, x)};
          hi = {std::max(hi.z, z), std::max(hi.y, y), std::max(hi.x, x)};
        }
      }
    }
  }
  if (hi.z < 0) {
    throw InvalidArgument("cannot crop an all-background volume");
  }
  CropRecord rec;
  rec.original = image.geometry;
  rec.lower = {std::max(0, lo.z - margin), std::max(0, lo.y - margin), std::max(0, lo.x - margin)};
  rec.upper = {std::min(s[0] - 1, hi.z + margin), std::min(s[1] - 1, hi.y + margin), std::min(s[2] - 1, hi.x + margin)};
  return {apply_crop(image, rec), rec};
}

template <typename T>
Volume<T> apply_crop(const Volume<T> & vol, const CropRecord & record)
{
  if (vol.geometry.shape != record.original.shape) {
    throw InvalidArgument("volume shape does not match the crop record's original shape");
  }
  const Shape3 cs = record.cropped_shape();
  Volume<T> out(cropped_geometry(vol.geometry, record.lower, cs));
  for (int z = 0; z < cs[0]; ++z) {
    for (int y = 0; y < cs[1]; ++y) {
      const T * src = &vol.at(z + record.lower.z, y + record.lower.y, record.lower.x);
      std::copy(src, src + cs[2], &out.at(z, y, 0));
    }
  }
  return out;
}

template ImageVolume apply_crop(const ImageVolume &, const CropRecord &);
template BinaryMask apply_crop(const BinaryMask &, const CropRecord &);

BinaryMask uncrop(const BinaryMask & mask, const CropRecord & record)
{
  const Shape3 cs = record.cropped_shape();
  if (mask.geometry.shape != cs) {
    throw InvalidArgument("mask shape does not match the crop record");
  }
  BinaryMask out(record.original);
  for (int z = 0; z < cs[0]; ++z) {
    for (int y = 0; y < cs[1]; ++y) {
      const std::uint8_t * src = &mask.at(z, y, 0);
      std::copy(src, src + cs[2], &out.at(z + record.lower.z, y + record.lower.y, record.lower.x));
    }
  }
  return out;
}

PreparedImage preprocess(const ImageVolume & raw, const PreprocessConfig & cfg)
{
  validate_image(raw);
  raw.geometry.validate();
  PreparedImage out;
  out.record.original = raw.geometry;
  ImageVolume resampled = resample(raw, cfg.target_spacing, Interpolation::trilinear);
  out.record.resampled = resampled.geometry;
  auto [cropped, crop] = crop_to_foreground(resampled, cfg.crop_margin, cfg.crop_threshold);
  out.record.crop = crop;
  out.image = zscore_normalize(cropped, cfg.zscore_nonzero_only);
  return out;
}

BinaryMask to_preprocessed(const BinaryMask & mask, const PreprocessRecord & record)
{
  if (mask.geometry.shape != record.original.shape) {
    throw InvalidArgument("mask shape does not match the original image");
  }
  const BinaryMask resampled = resample_to(mask, record.resampled.spacing, record.resampled.shape);
  return apply_crop(resampled, record.crop);
}

BinaryMask to_original(const BinaryMask & mask, const PreprocessRecord & record)
{
  const BinaryMask full = uncrop(mask, record.crop);
  BinaryMask out = resample_to(full, record.original.spacing, record.original.shape);
  out.geometry = record.original;
  return out;
}

}  // namespace promptseg
