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

#include "promptseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "promptseg/loss.hpp"

namespace promptseg
{

std::vector<int> tile_starts(int extent, int patch)
{
  if (patch <= 0 || extent < patch) {
    throw InvalidArgument("tile_starts: extent must be >= patch > 0");
  }
  const int step = std::max(1, patch / 2);
  const int n = (extent - patch + step - 1) / step + 1;
  std::vector<int> starts(n, 0);
  for (int i = 1; i < n; ++i) {
    starts[i] = static_cast<int>(std::lround(static_cast<double>(i) * (extent - patch) / (n - 1)));
  }
  return starts;
}

std::vector<float> gaussian_importance(const Shape3 & patch)
{
  std::array<std::vector<double>, 3> axis;
  for (int k = 0; k < 3; ++k) {
    const double sigma = patch[k] / 8.0;
    const double c = (patch[k] - 1) / 2.0;
    axis[k].resize(patch[k]);
    for (int i = 0; i < patch[k]; ++i) {
      axis[k][i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    }
    const double peak = *std::max_element(axis[k].begin(), axis[k].end());
    for (double & v : axis[k]) {
      v /= peak;
    }
  }
  std::vector<float> w(voxel_count(patch));
  std::size_t o = 0;
  for (int z = 0; z < patch[0]; ++z) {
    for (int y = 0; y < patch[1]; ++y) {
      for (int x = 0; x < patch[2]; ++x) {
        w[o++] = static_cast<float>(std::max(axis[0][z] * axis[1][y] * axis[2][x], 1e-12));
      }
    }
  }
  return w;
}

std::vector<float> sliding_window(const Predictor & predictor, const GuidanceStack & stack)
{
  const Shape3 patch = predictor.patch_size();
  const Shape3 & s = stack.shape;
  Shape3 ext{};
  for (int k = 0; k < 3; ++k) {
    ext[k] = std::max(s[k], patch[k]);
  }
  if (ext == patch && s == patch) {
    return predictor.forward_patch(stack);
  }
  const int channels = stack.channels;
  const std::size_t ext_n = voxel_count(ext);
  const std::size_t patch_n = voxel_count(patch);
  const std::array<std::vector<int>, 3> starts{tile_starts(ext[0], patch[0]), tile_starts(ext[1], patch[1]),
                                               tile_starts(ext[2], patch[2])};
  const std::vector<float> importance = gaussian_importance(patch);
  std::vector<double> acc(ext_n, 0.0);
  std::vector<double> wsum(ext_n, 0.0);

  GuidanceStack tile;
  tile.shape = patch;
  tile.channels = channels;
  tile.data.resize(static_cast<std::size_t>(channels) * patch_n);
  auto ext_offset = [&](int z, int y, int x) {
    return (static_cast<std::size_t>(z) * ext[1] + y) * ext[2] + x;
  };

  for (int z0 : starts[0]) {
    for (int y0 : starts[1]) {
      for (int x0 : starts[2]) {
        // gather with implicit zero padding outside the true volume
        for (int c = 0; c < channels; ++c) {
          auto src = stack.channel(c);
          float * dst = tile.data.data() + static_cast<std::size_t>(c) * patch_n;
          std::size_t o = 0;
          for (int z = 0; z < patch[0]; ++z) {
            for (int y = 0; y < patch[1]; ++y) {
              const int zz = z0 + z;
              const int yy = y0 + y;
              for (int x = 0; x < patch[2]; ++x, ++o) {
                const int xx = x0 + x;
                dst[o] = (zz < s[0] && yy < s[1] && xx < s[2])
                             ? src[(static_cast<std::size_t>(zz) * s[1] + yy) * s[2] + xx]
                             : 0.0F;
              }
            }
          }
        }
        const std::vector<float> probs = predictor.forward_patch(tile);
        if (probs.size() != patch_n) {
          throw InvalidArgument("predictor returned a tile of the wrong size");
        }
        std::size_t o = 0;
        for (int z = 0; z < patch[0]; ++z) {
          for (int y = 0; y < patch[1]; ++y) {
            for (int x = 0; x < patch[2]; ++x, ++o) {
              const std::size_t e = ext_offset(z0 + z, y0 + y, x0 + x);
              acc[e] += static_cast<double>(probs[o]) * importance[o];
              wsum[e] += importance[o];
            }
          }
        }
      }
    }
  }
  std::vector<float> out(voxel_count(s));
  std::size_t o = 0;
  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        const std::size_t e = ext_offset(z, y, x);
        out[o++] = static_cast<float>(acc[e] / wsum[e]);
      }
    }
  }
  return out;
}

std::vector<float> Predictor::predict(const GuidanceStack & stack) const
{
  if (stack.channels != guidance().total_channels()) {
    throw InvalidArgument("guidance stack has " + std::to_string(stack.channels) + " channels, predictor expects " +
                          std::to_string(guidance().total_channels()));
  }
  return sliding_window(*this, stack);
}

NetworkPredictor::NetworkPredictor(std::shared_ptr<const ResidualUNet<float>> net, GuidanceConfig guidance, int patch)
    : net_(std::move(net)), guidance_(guidance), patch_{patch, patch, patch}
{
  if (!net_) {
    throw InvalidArgument("NetworkPredictor needs a network");
  }
  if (net_->config().input_channels != guidance_.total_channels()) {
    throw InvalidArgument("network input channels do not match the guidance layout");
  }
  if (patch <= 0 || patch % net_->config().downsampling_factor() != 0) {
    throw InvalidArgument("inference patch must be a positive multiple of the downsampling factor");
  }
}

std::vector<float> NetworkPredictor::forward_patch(const GuidanceStack & patch) const
{
  if (patch.channels != net_->config().input_channels) {
    throw InvalidArgument("channel mismatch between guidance stack and network");
  }
  Tensor<float> in(1, patch.channels, patch.shape);
  std::copy(patch.data.begin(), patch.data.end(), in.data.begin());
  Tensor<float> logits = net_->forward_logits(in);
  std::vector<float> out(logits.data.size());
  std::transform(logits.data.begin(), logits.data.end(), out.begin(), [](float z) { return sigmoid(z); });
  return out;
}

std::vector<float> FixedMaskPredictor::forward_patch(const GuidanceStack & patch) const
{
  return predict(patch);
}

std::vector<float> FixedMaskPredictor::predict(const GuidanceStack & stack) const
{
  if (stack.shape != mask_.shape()) {
    throw InvalidArgument("fixed-mask predictor applied to a volume of a different shape");
  }
  return std::vector<float>(mask_.data.begin(), mask_.data.end());
}

BinaryMask binarize(const ProbabilityMap & p, float threshold)
{
  BinaryMask m(p.geometry);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    m.data[i] = p.data[i] >= threshold ? 1 : 0;
  }
  return m;
}

Prediction predict_full(const Predictor & predictor, const GuidanceStack & stack, const Geometry & geometry)
{
  if (stack.shape != geometry.shape) {
    throw InvalidArgument("guidance stack shape does not match geometry");
  }
  Prediction out;
  out.probabilities = ProbabilityMap(geometry, predictor.predict(stack));
  out.mask = binarize(out.probabilities);
  return out;
}

Prediction predict_full(const Predictor & predictor, const ImageVolume & image, std::span<const Prompt> prompts,
                        const BinaryMask * previous)
{
  const GuidanceStack stack = previous ? encode_guidance(prompts, image, *previous, predictor.guidance())
                                       : encode_guidance(prompts, image, predictor.guidance());
  return predict_full(predictor, stack, image.geometry);
}

// ---------------------------------------------------------------------------

namespace
{

constexpr char kMagic[8] = {'P', 'S', 'G', 'W', 'G', 'H', 'T', '1'};

std::string hex64(std::uint64_t v)
{
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

int inference_patch(const ModelWeights & w, int fallback)
{
  const auto it = w.metadata.find("inference_patch");
  if (it != w.metadata.end() && it->is_number_integer() && it->get<int>() > 0) {
    return it->get<int>();
  }
  return fallback;
}

std::string config_fingerprint(const NetworkConfig & net, const GuidanceConfig & guidance)
{
  // nlohmann::json keeps keys sorted, which makes the dump canonical
  const nlohmann::json canon{{"network", to_json(net)}, {"guidance", to_json(guidance)}};
  return hex64(fnv1a64(canon.dump()));
}

std::string ModelWeights::fingerprint() const
{
  return config_fingerprint(network, guidance);
}

ModelWeights ModelWeights::from_network(const ResidualUNet<float> & net, const GuidanceConfig & guidance)
{
  ModelWeights w;
  w.network = net.config();
  w.guidance = guidance;
  w.parameters = net.parameters();
  return w;
}

ResidualUNet<float> ModelWeights::instantiate() const
{
  network.validate();
  if (network.input_channels != guidance.total_channels()) {
    throw InvalidArgument("weights: network input channels do not match the guidance layout");
  }
  ResidualUNet<float> net(network, ResidualUNet<float>::no_init);
  auto & dst = net.parameters();
  if (dst.size() != parameters.size()) {
    throw InvalidArgument("weights: parameter count does not match the network config");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != parameters[i].name || dst[i].shape != parameters[i].shape ||
        dst[i].values.size() != parameters[i].values.size()) {
      throw InvalidArgument("weights: tensor '" + parameters[i].name + "' does not match the network config");
    }
    dst[i].values = parameters[i].values;
  }
  return net;
}

void save_weights(const ModelWeights & w, const std::string & path)
{
  nlohmann::json header;
  header["format"] = 1;
  header["network"] = to_json(w.network);
  header["guidance"] = to_json(w.guidance);
  header["fingerprint"] = w.fingerprint();
  header["metadata"] = w.metadata;
  std::uint64_t data_hash = 0xCBF29CE484222325ULL;
  header["tensors"] = nlohmann::json::array();
  for (const auto & p : w.parameters) {
    header["tensors"].push_back({{"name", p.name}, {"shape", p.shape}});
    data_hash = fnv1a64(std::string_view(reinterpret_cast<const char *>(p.values.data()), p.values.size() * sizeof(float)),
                        data_hash);
  }
  header["data_hash"] = hex64(data_hash);
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char *>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto & p : w.parameters) {
    out.write(reinterpret_cast<const char *>(p.values.data()), static_cast<std::streamsize>(p.values.size() * sizeof(float)));
  }
  if (!out) {
    throw IoError("failed writing " + path);
  }
}

ModelWeights load_weights(const std::string & path, const std::string & expected_fingerprint)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open weights file " + path);
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto corrupt = [&](const std::string & why) { return IoError("corrupt weights file " + path + ": " + why); };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw corrupt("bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) {
    throw corrupt("truncated header");
  }
  ModelWeights w;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
    w.network = network_config_from_json(header.at("network"));
    w.guidance = guidance_config_from_json(header.at("guidance"));
    w.metadata = header.value("metadata", nlohmann::json::object());
    std::size_t pos = 16 + len;
    std::uint64_t data_hash = 0xCBF29CE484222325ULL;
    for (const auto & t : header.at("tensors")) {
      Parameter<float> p;
      p.name = t.at("name").get<std::string>();
      p.shape = t.at("shape").get<std::vector<int>>();
      std::size_t n = 1;
      for (int d : p.shape) {
        n *= static_cast<std::size_t>(d);
      }
      if (pos + n * sizeof(float) > bytes.size()) {
        throw corrupt("truncated tensor data");
      }
      p.values.resize(n);
      std::memcpy(p.values.data(), bytes.data() + pos, n * sizeof(float));
      data_hash = fnv1a64(std::string_view(bytes.data() + pos, n * sizeof(float)), data_hash);
      pos += n * sizeof(float);
      w.parameters.push_back(std::move(p));
    }
    if (pos != bytes.size()) {
      throw corrupt("trailing bytes");
    }
    if (header.at("data_hash").get<std::string>() != hex64(data_hash)) {
      throw corrupt("tensor checksum mismatch");
    }
  } catch (const nlohmann::json::exception & e) {
    throw corrupt(e.what());
  } catch (const InvalidArgument & e) {
    throw corrupt(e.what());
  }
  const std::string stored = header.at("fingerprint").get<std::string>();
  if (stored != w.fingerprint()) {
    throw corrupt("stored fingerprint does not match its config");
  }
  if (!expected_fingerprint.empty() && expected_fingerprint != stored) {
    throw InvalidArgument("weights fingerprint " + stored + " does not match expected config " + expected_fingerprint);
  }
  (void)w.instantiate();  // validates names and shapes against the config
  return w;
}

}  // namespace promptseg
