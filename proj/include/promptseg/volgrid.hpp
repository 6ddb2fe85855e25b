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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptseg/common.hpp"

namespace promptseg
{

/// Physical placement of a voxel grid. Every per-axis array is in (z, y, x) index
/// order. `direction` is row-major 3x3; column k is the world-space unit vector of
/// index axis k. `origin` is the world position of the centre of voxel (0, 0, 0).
struct Geometry
{
  Shape3 shape{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::array<double, 9> direction{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Geometry with_shape(Shape3 shape, Vec3 spacing = {1.0, 1.0, 1.0});

  std::size_t size() const { return voxel_count(shape); }
  std::size_t offset(int z, int y, int x) const
  {
    return (static_cast<std::size_t>(z) * shape[1] + static_cast<std::size_t>(y)) * shape[2] +
           static_cast<std::size_t>(x);
  }
  std::size_t offset(const Voxel & v) const { return offset(v.z, v.y, v.x); }
  bool contains(const Voxel & v) const
  {
    return v.z >= 0 && v.y >= 0 && v.x >= 0 && v.z < shape[0] && v.y < shape[1] && v.x < shape[2];
  }

  /// World coordinate of a (possibly fractional) index position.
  Vec3 index_to_world(const Vec3 & index) const;

  /// Throws InvalidArgument on non-positive spacing, empty shape or non-orthonormal direction.
  void validate() const;

  friend bool operator==(const Geometry &, const Geometry &) = default;
};

/// Scalar 3D grid sharing one Geometry. Instantiated as ImageVolume (float
/// intensities) and BinaryMask (0/1 bytes).
template <typename T>
struct Volume
{
  Geometry geometry;
  std::vector<T> data;

  Volume() = default;
  explicit Volume(Geometry g, T fill = T{}) : geometry(std::move(g)), data(geometry.size(), fill) {}
  Volume(Geometry g, std::vector<T> values) : geometry(std::move(g)), data(std::move(values))
  {
    if (data.size() != geometry.size()) {
      throw InvalidArgument("volume data size does not match geometry shape");
    }
  }

  const Shape3 & shape() const { return geometry.shape; }
  T & at(int z, int y, int x) { return data[geometry.offset(z, y, x)]; }
  const T & at(int z, int y, int x) const { return data[geometry.offset(z, y, x)]; }
  T & at(const Voxel & v) { return data[geometry.offset(v)]; }
  const T & at(const Voxel & v) const { return data[geometry.offset(v)]; }

  /// View of one axial slice (y-major, x fastest).
  std::span<const T> slice(int z) const
  {
    const std::size_t n = static_cast<std::size_t>(geometry.shape[1]) * geometry.shape[2];
    return std::span<const T>(data).subspan(n * static_cast<std::size_t>(z), n);
  }

  friend bool operator==(const Volume &, const Volume &) = default;
};

using ImageVolume = Volume<float>;
using BinaryMask = Volume<std::uint8_t>;
using ProbabilityMap = Volume<float>;

/// Number of foreground voxels.
std::size_t count_foreground(const BinaryMask & mask);

/// Throws InvalidArgument unless every value is exactly 0 or 1.
void validate_mask(const BinaryMask & mask);

/// Throws InvalidArgument if any intensity is NaN or infinite.
void validate_image(const ImageVolume & image);

// ---------------------------------------------------------------------------
// NIfTI-1 I/O
// ---------------------------------------------------------------------------

/// Reads a 3D scalar NIfTI-1 file (.nii or .nii.gz, detected from content).
/// Any numeric on-disk type is converted to float with scl_slope/inter applied.
ImageVolume load_volume(const std::string & path);

/// Reads a NIfTI-1 file as a mask; values must be exactly 0 or 1.
BinaryMask load_mask(const std::string & path);

/// Writes float32 (images) or uint8 (masks). Gzip is used when the path ends in ".gz".
void save_volume(const ImageVolume & image, const std::string & path);
void save_volume(const BinaryMask & mask, const std::string & path);

/// In-memory variants used by the HTTP service.
ImageVolume decode_volume(std::span<const std::uint8_t> bytes);
BinaryMask decode_mask(std::span<const std::uint8_t> bytes);
std::string encode_volume(const ImageVolume & image, bool gzip);
std::string encode_volume(const BinaryMask & mask, bool gzip);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

enum class Interpolation { trilinear, nearest };

/// Standardises intensities to zero mean and unit population standard deviation.
/// With `nonzero_only` the statistics come from voxels != 0 and only those are rescaled.
ImageVolume zscore_normalize(const ImageVolume & image, bool nonzero_only = false);

/// Resamples onto a grid with the given spacing. The first-voxel centre stays fixed;
/// the new shape is ceil(old_shape * old_spacing / new_spacing).
ImageVolume resample(const ImageVolume & image, const Vec3 & target_spacing, Interpolation mode);
BinaryMask resample(const BinaryMask & mask, const Vec3 & target_spacing, Interpolation mode = Interpolation::nearest);

/// Nearest-neighbour resampling of a mask onto an explicit spacing and shape that
/// shares the mask's origin and direction.
BinaryMask resample_to(const BinaryMask & mask, const Vec3 & target_spacing, const Shape3 & target_shape);

/// Bounds of a crop. `upper` is inclusive.
struct CropRecord
{
  Voxel lower;
  Voxel upper;
  Geometry original;

  Shape3 cropped_shape() const
  {
    return {upper.z - lower.z + 1, upper.y - lower.y + 1, upper.x - lower.x + 1};
  }
  friend bool operator==(const CropRecord &, const CropRecord &) = default;
};

/// Tight box of voxels strictly above `threshold`, grown by `margin` and clamped.
std::pair<ImageVolume, CropRecord> crop_to_foreground(const ImageVolume & image, int margin = 4, float threshold = 0.0F);

/// Applies an existing crop to another grid sharing the original geometry.
template <typename T>
Volume<T> apply_crop(const Volume<T> & vol, const CropRecord & record);

/// Places a cropped mask back into the original grid, zero elsewhere.
BinaryMask uncrop(const BinaryMask & mask, const CropRecord & record);

struct PreprocessConfig
{
  Vec3 target_spacing{1.0, 1.0, 1.0};
  int crop_margin = 4;
  float crop_threshold = 0.0F;
  bool zscore_nonzero_only = false;
};

/// Everything needed to map a prediction back to the input geometry.
struct PreprocessRecord
{
  Geometry original;
  Geometry resampled;
  CropRecord crop;
};

struct PreparedImage
{
  ImageVolume image;
  PreprocessRecord record;
};

/// resample -> crop -> z-score.
PreparedImage preprocess(const ImageVolume & raw, const PreprocessConfig & cfg = {});

/// Brings a mask in original geometry into the preprocessed grid.
BinaryMask to_preprocessed(const BinaryMask & mask, const PreprocessRecord & record);

/// Inverse of the spatial part of preprocess for masks.
BinaryMask to_original(const BinaryMask & mask, const PreprocessRecord & record);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig
{
  double max_rotation_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double elastic_probability = 0.3;
  int elastic_grid = 4;
  double elastic_sigma = 3.0;
  double gain_min = 0.9;
  double gain_max = 1.1;
  double shift_min = -0.1;
  double shift_max = 0.1;

  /// Every range collapsed; augment() becomes the identity.
  static AugmentConfig identity();
};

/// One random spatial transform applied jointly (image trilinear, mask nearest),
/// then a gain/shift applied to the image only.
std::pair<ImageVolume, BinaryMask> augment(const ImageVolume & image, const BinaryMask & mask, const AugmentConfig & cfg, Rng & rng);

}  // namespace promptseg
