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
#include <optional>

#include "promptseg/volgrid.hpp"

namespace promptseg
{
namespace
{

using Mat3 = std::array<double, 9>;

Mat3 multiply(const Mat3 & a, const Mat3 & b)
{
  Mat3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
      }
    }
  }
  return c;
}

// Rotation in the plane orthogonal to index axis `axis`.
Mat3 axis_rotation(int axis, double radians)
{
  Mat3 m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  m[a * 3 + a] = c;
  m[a * 3 + b] = -s;
  m[b * 3 + a] = s;
  m[b * 3 + b] = c;
  return m;
}

/// Coarse random displacement grid, trilinearly upsampled on demand.
class ElasticField
{
public:
  ElasticField(const Shape3 & shape, int grid, double sigma, Rng & rng) : shape_(shape), grid_(std::max(2, grid))
  {
    values_.resize(static_cast<std::size_t>(grid_ * grid_ * grid_) * 3);
    for (double & v : values_) {
      v = rng.normal(0.0, sigma);
    }
  }

  Vec3 at(double z, double y, double x) const
  {
    const double pos[3] = {z, y, x};
    int i0[3];
    double w[3];
    for (int k = 0; k < 3; ++k) {
      const double g = shape_[k] > 1 ? pos[k] / (shape_[k] - 1) * (grid_ - 1) : 0.0;
      i0[k] = std::clamp(static_cast<int>(std::floor(g)), 0, grid_ - 2);
      w[k] = std::clamp(g - i0[k], 0.0, 1.0);
    }
    Vec3 d{};
    for (int corner = 0; corner < 8; ++corner) {
      double wt = 1.0;
      int idx[3];
      for (int k = 0; k < 3; ++k) {
        const int bit = (corner >> (2 - k)) & 1;
        idx[k] = i0[k] + bit;
        wt *= bit ? w[k] : 1.0 - w[k];
      }
      const std::size_t base = (static_cast<std::size_t>(idx[0] * grid_ + idx[1]) * grid_ + idx[2]) * 3;
      for (int c = 0; c < 3; ++c) {
        d[c] += wt * values_[base + c];
      }
    }
    return d;
  }

private:
  Shape3 shape_;
  int grid_;
  std::vector<double> values_;
};

float sample_linear(const ImageVolume & v, double z, double y, double x)
{
  const Shape3 & s = v.geometry.shape;
  const double p[3] = {std::clamp(z, 0.0, s[0] - 1.0), std::clamp(y, 0.0, s[1] - 1.0), std::clamp(x, 0.0, s[2] - 1.0)};
  int i0[3];
  int i1[3];
  double w[3];
  for (int k = 0; k < 3; ++k) {
    i0[k] = static_cast<int>(std::floor(p[k]));
    i1[k] = std::min(i0[k] + 1, s[k] - 1);
    w[k] = p[k] - i0[k];
  }
  if (w[0] == 0.0 && w[1] == 0.0 && w[2] == 0.0) {
    return v.at(i0[0], i0[1], i0[2]);
  }
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v.at(i0[0], i0[1], i0[2]), v.at(i0[0], i0[1], i1[2]), w[2]);
  const double c01 = lerp(v.at(i0[0], i1[1], i0[2]), v.at(i0[0], i1[1], i1[2]), w[2]);
  const double c10 = lerp(v.at(i1[0], i0[1], i0[2]), v.at(i1[0], i0[1], i1[2]), w[2]);
  const double c11 = lerp(v.at(i1[0], i1[1], i0[2]), v.at(i1[0], i1[1], i1[2]), w[2]);
  return static_cast<float>(lerp(lerp(c00, c01, w[1]), lerp(c10, c11, w[1]), w[0]));
}

}  // namespace

AugmentConfig AugmentConfig::identity()
{
  AugmentConfig c;
  c.max_rotation_deg = 0.0;
  c.scale_min = c.scale_max = 1.0;
  c.elastic_probability = 0.0;
  c.gain_min = c.gain_max = 1.0;
  c.shift_min = c.shift_max = 0.0;
  return c;
}

std::pair<ImageVolume, BinaryMask> augment(const ImageVolume & image, const BinaryMask & mask, const AugmentConfig & cfg, Rng & rng)
{
  if (image.geometry != mask.geometry) {
    throw InvalidArgument("image and mask geometry differ");
  }
  const Shape3 & s = image.geometry.shape;
  constexpr double kDeg = std::numbers::pi / 180.0;
  Mat3 rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (int axis = 0; axis < 3; ++axis) {
    const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * kDeg;
    rot = multiply(rot, axis_rotation(axis, angle));
  }
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  std::optional<ElasticField> elastic;
  if (cfg.elastic_probability > 0.0 && rng.bernoulli(cfg.elastic_probability)) {
    elastic.emplace(s, cfg.elastic_grid, cfg.elastic_sigma, rng);
  }
  const double gain = rng.uniform(cfg.gain_min, cfg.gain_max);
  const double shift = rng.uniform(cfg.shift_min, cfg.shift_max);

  const Vec3 centre{(s[0] - 1) / 2.0, (s[1] - 1) / 2.0, (s[2] - 1) / 2.0};
  ImageVolume out_img(image.geometry);
  BinaryMask out_mask(mask.geometry);
  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        const double d[3] = {z - centre[0], y - centre[1], x - centre[2]};
        // inverse mapping: source = centre + R^T d / scale (+ elastic displacement)
        double src[3];
        for (int r = 0; r < 3; ++r) {
          src[r] = centre[r] + (rot[0 * 3 + r] * d[0] + rot[1 * 3 + r] * d[1] + rot[2 * 3 + r] * d[2]) / scale;
        }
        if (elastic) {
          const Vec3 e = elastic->at(z, y, x);
          for (int r = 0; r < 3; ++r) {
            src[r] += e[r];
          }
        }
        out_img.at(z, y, x) = static_cast<float>(sample_linear(image, src[0], src[1], src[2]) * gain + shift);
        const int nz = static_cast<int>(std::floor(src[0] + 0.5));
        const int ny = static_cast<int>(std::floor(src[1] + 0.5));
        const int nx = static_cast<int>(std::floor(src[2] + 0.5));
        out_mask.at(z, y, x) = image.geometry.contains({nz, ny, nx}) ? mask.at(nz, ny, nx) : 0;
      }
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace promptseg
