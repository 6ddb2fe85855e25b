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

// Minimal NIfTI-1 single-file reader/writer (.nii / .nii.gz).

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "promptseg/volgrid.hpp"

namespace promptseg
{
namespace
{

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum : std::int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_INT8 = 256,
  DT_UINT16 = 512,
  DT_UINT32 = 768,
};

bool is_gzip(std::span<const std::uint8_t> bytes)
{
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes)
{
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) {
    throw IoError("zlib inflateInit failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  zs.next_in = const_cast<Bytef *>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string gzip(const std::string & raw)
{
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("zlib deflateInit failed");
  }
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = reinterpret_cast<Bytef *>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) {
    throw IoError("gzip compression failed");
  }
  out.resize(zs.total_out);
  return out;
}

class HeaderReader
{
public:
  HeaderReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const
  {
    T v{};
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + offset, sizeof(T));
    if (swap_) {
      std::reverse(buf, buf + sizeof(T));
    }
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

struct RawVolume
{
  Geometry geometry;
  std::vector<double> values;
  std::int16_t datatype = 0;
};

template <typename T>
void convert(std::span<const std::uint8_t> src, bool swap, std::vector<double> & dst)
{
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, src.data() + i * sizeof(T), sizeof(T));
    if (swap) {
      std::reverse(buf, buf + sizeof(T));
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    dst[i] = static_cast<double>(v);
  }
}

RawVolume parse(std::span<const std::uint8_t> input)
{
  std::vector<std::uint8_t> inflated;
  std::span<const std::uint8_t> bytes = input;
  if (is_gzip(input)) {
    inflated = gunzip(input);
    bytes = inflated;
  }
  if (bytes.size() < kHeaderSize) {
    throw IoError("not a NIfTI-1 file: too short for a header");
  }
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    swap = true;
    if (HeaderReader(bytes, true).get<std::int32_t>(0) != kHeaderSize) {
      throw IoError("not a NIfTI-1 file: bad sizeof_hdr");
    }
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0) {
    throw IoError("not a single-file NIfTI-1 image (magic n+1 missing)");
  }
  const HeaderReader h(bytes, swap);
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) {
    dim[i] = h.get<std::int16_t>(40 + 2 * i);
  }
  if (dim[0] < 3 || dim[0] > 7) {
    throw IoError("expected 3D scalar volume");
  }
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) {
      throw IoError("expected 3D scalar volume");
    }
  }
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) {
      throw IoError("invalid NIfTI dimension");
    }
  }
  const auto datatype = h.get<std::int16_t>(70);
  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) {
    pixdim[i] = h.get<float>(76 + 4 * i);
  }
  const auto vox_offset = static_cast<std::size_t>(h.get<float>(108));
  const float slope = h.get<float>(112);
  const float inter = h.get<float>(116);
  const auto qform_code = h.get<std::int16_t>(252);
  const auto sform_code = h.get<std::int16_t>(254);

  RawVolume out;
  Geometry & g = out.geometry;
  g.shape = {dim[3], dim[2], dim[1]};
  for (int k = 0; k < 3; ++k) {
    // index axis k in (z,y,x) order corresponds to NIfTI axis 3-k
    const float p = std::abs(pixdim[3 - k]);
    g.spacing[k] = p > 0.0F ? static_cast<double>(p) : 1.0;
  }

  // world = A * (i, j, k) + t with i the fastest (x) axis
  std::array<std::array<double, 4>, 3> affine{};
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        affine[r][c] = h.get<float>(280 + 16 * r + 4 * c);
      }
    }
  } else if (qform_code > 0) {
    const double b = h.get<float>(256);
    const double c = h.get<float>(260);
    const double d = h.get<float>(264);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double qfac = pixdim[0] < 0.0F ? -1.0 : 1.0;
    const double R[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b},
    };
    const double scale[3] = {g.spacing[2], g.spacing[1], g.spacing[0] * qfac};
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) {
        affine[r][col] = R[r][col] * scale[col];
      }
    }
    affine[0][3] = h.get<float>(268);
    affine[1][3] = h.get<float>(272);
    affine[2][3] = h.get<float>(276);
  } else {
    affine[0][0] = g.spacing[2];
    affine[1][1] = g.spacing[1];
    affine[2][2] = g.spacing[0];
  }
  for (int k = 0; k < 3; ++k) {
    const int col = 2 - k;
    double norm = 0.0;
    for (int r = 0; r < 3; ++r) {
      norm += affine[r][col] * affine[r][col];
    }
    norm = std::sqrt(norm);
    for (int r = 0; r < 3; ++r) {
      // divide by the stored spacing so that a file written by us reads back exactly
      const double denom = std::abs(norm - g.spacing[k]) < 1e-4 * g.spacing[k] ? g.spacing[k] : norm;
      g.direction[r * 3 + k] = denom > 0.0 ? affine[r][col] / denom : (r == col ? 1.0 : 0.0);
    }
  }
  for (int r = 0; r < 3; ++r) {
    g.origin[r] = affine[r][3];
  }

  std::size_t elem = 0;
  switch (datatype) {
    case DT_UINT8:
    case DT_INT8: elem = 1; break;
    case DT_INT16:
    case DT_UINT16: elem = 2; break;
    case DT_INT32:
    case DT_UINT32:
    case DT_FLOAT32: elem = 4; break;
    case DT_FLOAT64: elem = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + " (expected 3D scalar volume)");
  }
  const std::size_t n = g.size();
  const std::size_t start = std::max<std::size_t>(vox_offset, kVoxOffset);
  if (bytes.size() < start + n * elem) {
    throw IoError("NIfTI file truncated: voxel data shorter than header dimensions");
  }
  const auto payload = bytes.subspan(start, n * elem);
  out.values.resize(n);
  switch (datatype) {
    case DT_UINT8: convert<std::uint8_t>(payload, swap, out.values); break;
    case DT_INT8: convert<std::int8_t>(payload, swap, out.values); break;
    case DT_INT16: convert<std::int16_t>(payload, swap, out.values); break;
    case DT_UINT16: convert<std::uint16_t>(payload, swap, out.values); break;
    case DT_INT32: convert<std::int32_t>(payload, swap, out.values); break;
    case DT_UINT32: convert<std::uint32_t>(payload, swap, out.values); break;
    case DT_FLOAT32: convert<float>(payload, swap, out.values); break;
    case DT_FLOAT64: convert<double>(payload, swap, out.values); break;
    default: break;
  }
  if (slope != 0.0F && std::isfinite(slope) && !(slope == 1.0F && inter == 0.0F)) {
    for (auto & v : out.values) {
      v = v * slope + inter;
    }
  }
  for (double v : out.values) {
    if (!std::isfinite(v)) {
      throw IoError("NIfTI volume contains non-finite voxels");
    }
  }
  out.datatype = datatype;
  return out;
}

std::vector<std::uint8_t> read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failure on " + path);
  }
  return bytes;
}

void write_file(const std::string & path, const std::string & bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failure on " + path);
  }
}

template <typename T>
void put(std::string & buf, std::size_t offset, T v)
{
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

std::string build(const Geometry & g, std::int16_t datatype, std::int16_t bitpix, const void * data, std::size_t bytes)
{
  g.validate();
  std::string buf(kVoxOffset, '\0');
  put<std::int32_t>(buf, 0, kHeaderSize);
  buf[39] = 0;
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(g.shape[2]), static_cast<std::int16_t>(g.shape[1]),
                               static_cast<std::int16_t>(g.shape[0]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) {
    put<std::int16_t>(buf, 40 + 2 * i, dim[i]);
  }
  put<std::int16_t>(buf, 70, datatype);
  put<std::int16_t>(buf, 72, bitpix);
  const float pixdim[8] = {1.0F, static_cast<float>(g.spacing[2]), static_cast<float>(g.spacing[1]),
                           static_cast<float>(g.spacing[0]), 1.0F, 1.0F, 1.0F, 1.0F};
  for (int i = 0; i < 8; ++i) {
    put<float>(buf, 76 + 4 * i, pixdim[i]);
  }
  put<float>(buf, 108, static_cast<float>(kVoxOffset));
  put<float>(buf, 112, 1.0F);
  put<float>(buf, 116, 0.0F);
  buf[123] = 2;  // xyzt_units: mm
  const char descrip[] = "promptseg";
  std::memcpy(buf.data() + 148, descrip, sizeof(descrip));
  put<std::int16_t>(buf, 252, 0);
  put<std::int16_t>(buf, 254, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const int k = 2 - c;
      put<float>(buf, 280 + 16 * r + 4 * c, static_cast<float>(g.direction[r * 3 + k] * g.spacing[k]));
    }
    put<float>(buf, 280 + 16 * r + 12, static_cast<float>(g.origin[r]));
  }
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  buf.append(static_cast<const char *>(data), bytes);
  return buf;
}

bool ends_with_gz(const std::string & path)
{
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

ImageVolume to_image(RawVolume raw)
{
  ImageVolume img(raw.geometry);
  std::transform(raw.values.begin(), raw.values.end(), img.data.begin(), [](double v) { return static_cast<float>(v); });
  return img;
}

BinaryMask to_mask(RawVolume raw)
{
  BinaryMask mask(raw.geometry);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const double v = raw.values[i];
    if (v != 0.0 && v != 1.0) {
      throw IoError("mask file contains values other than 0 and 1");
    }
    mask.data[i] = static_cast<std::uint8_t>(v);
  }
  return mask;
}

}  // namespace

ImageVolume decode_volume(std::span<const std::uint8_t> bytes) { return to_image(parse(bytes)); }

BinaryMask decode_mask(std::span<const std::uint8_t> bytes) { return to_mask(parse(bytes)); }

ImageVolume load_volume(const std::string & path)
{
  const auto bytes = read_file(path);
  try {
    return decode_volume(bytes);
  } catch (const IoError & e) {
    throw IoError(path + ": " + e.what());
  }
}

BinaryMask load_mask(const std::string & path)
{
  const auto bytes = read_file(path);
  try {
    return decode_mask(bytes);
  } catch (const IoError & e) {
    throw IoError(path + ": " + e.what());
  }
}

std::string encode_volume(const ImageVolume & image, bool compress)
{
  validate_image(image);
  auto raw = build(image.geometry, DT_FLOAT32, 32, image.data.data(), image.data.size() * sizeof(float));
  return compress ? gzip(raw) : raw;
}

std::string encode_volume(const BinaryMask & mask, bool compress)
{
  validate_mask(mask);
  auto raw = build(mask.geometry, DT_UINT8, 8, mask.data.data(), mask.data.size());
  return compress ? gzip(raw) : raw;
}

void save_volume(const ImageVolume & image, const std::string & path)
{
  write_file(path, encode_volume(image, ends_with_gz(path)));
}

void save_volume(const BinaryMask & mask, const std::string & path)
{
  write_file(path, encode_volume(mask, ends_with_gz(path)));
}

}  // namespace promptseg
