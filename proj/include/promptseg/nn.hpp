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
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/common.hpp"
#include "promptseg/promptsim.hpp"

namespace promptseg
{

/// Dense NCDHW tensor.
template <typename T>
struct Tensor
{
  int n = 0;
  int c = 0;
  Shape3 spatial{0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int batch, int channels, Shape3 s, T fill = T{})
      : n(batch), c(channels), spatial(s), data(static_cast<std::size_t>(batch) * channels * voxel_count(s), fill)
  {
  }

  std::size_t plane() const { return voxel_count(spatial); }
  T * ptr(int b, int ch) { return data.data() + (static_cast<std::size_t>(b) * c + ch) * plane(); }
  const T * ptr(int b, int ch) const { return data.data() + (static_cast<std::size_t>(b) * c + ch) * plane(); }
};

/// Residual-encoder U-Net hyper-parameters.
struct NetworkConfig
{
  int input_channels = 4;
  std::vector<int> widths{16, 32, 64};
  std::vector<int> blocks_per_stage{1, 1, 1};
  int kernel = 3;
  std::string norm = "instance";
  std::string nonlinearity = "leaky_relu";
  double negative_slope = 0.01;

  /// Three-stage desk-scale network.
  static NetworkConfig toy(GuidanceLayout layout = GuidanceLayout::shared);
  /// Six-stage preset shaped like the large residual-encoder configuration.
  static NetworkConfig resenc_l(GuidanceLayout layout = GuidanceLayout::shared);

  int stages() const { return static_cast<int>(widths.size()); }
  int downsampling_factor() const { return 1 << (stages() - 1); }
  void validate() const;
};

nlohmann::json to_json(const NetworkConfig & cfg);
NetworkConfig network_config_from_json(const nlohmann::json & j);

template <typename T>
struct Parameter
{
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
};

template <typename T>
class Graph;

/// Encoder: per stage a (strided) conv-norm-act followed by residual blocks.
/// Decoder: transposed conv upsampling, skip concatenation, conv-norm-act.
/// Head: 1x1x1 conv to a single logit channel; sigmoid is applied by callers.
template <typename T>
class ResidualUNet
{
public:
  ResidualUNet(const NetworkConfig & cfg, Rng & rng);

  const NetworkConfig & config() const { return cfg_; }
  std::vector<Parameter<T>> & parameters() { return params_; }
  const std::vector<Parameter<T>> & parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Logits for an (N, C, D, H, W) input. Const and reentrant.
  Tensor<T> forward_logits(const Tensor<T> & input) const;

  /// Forward pass that records what backward() needs.
  Tensor<T> forward_logits(const Tensor<T> & input, Graph<T> & graph) const;

  /// Accumulates dLoss/dParam into `grads` (same layout as parameters()).
  void backward(Graph<T> & graph, const Tensor<T> & d_logits, std::vector<std::vector<T>> & grads) const;

  std::vector<std::vector<T>> zero_gradients() const;

  template <typename U>
  ResidualUNet<U> cast() const
  {
    ResidualUNet<U> out(cfg_, ResidualUNet<U>::no_init);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].values.assign(params_[i].values.begin(), params_[i].values.end());
    }
    return out;
  }

  struct NoInit
  {
  };
  static constexpr NoInit no_init{};
  ResidualUNet(const NetworkConfig & cfg, NoInit);

  struct Conv
  {
    int cin, cout, kernel, stride, weight, bias;
  };
  struct UpConv
  {
    int cin, cout, weight;
  };
  struct Norm
  {
    int channels, gamma, beta;
  };

private:
  void build(Rng * rng);
  int add_param(const std::string & name, std::vector<int> shape);
  Conv make_conv(const std::string & name, int cin, int cout, int kernel, int stride, bool bias, Rng * rng);
  Norm make_norm(const std::string & name, int channels);
  int conv_norm_act(Graph<T> & g, int x, const Conv & c, const Norm & n) const;

  NetworkConfig cfg_;
  std::vector<Parameter<T>> params_;

  struct ResBlock
  {
    Conv conv1;
    Norm norm1;
    Conv conv2;
    Norm norm2;
  };
  struct Stage
  {
    Conv entry;
    Norm entry_norm;
    std::vector<ResBlock> blocks;
  };
  struct DecoderStage
  {
    UpConv up;
    Conv conv;
    Norm norm;
  };
  std::vector<Stage> encoder_;
  std::vector<DecoderStage> decoder_;
  Conv head_{};
};

/// Builds the float network with seeded He-normal initialisation.
ResidualUNet<float> build_network(const NetworkConfig & cfg, Rng & rng);

// ---------------------------------------------------------------------------
// Minimal reverse-mode graph used by ResidualUNet.
// ---------------------------------------------------------------------------

template <typename T>
class Graph
{
public:
  enum class Op { input, conv, upconv, norm, lrelu, add, concat };

  struct Node
  {
    Op op = Op::input;
    std::vector<int> inputs;
    Tensor<T> value;
    // op payloads
    typename ResidualUNet<T>::Conv conv{};
    typename ResidualUNet<T>::UpConv up{};
    typename ResidualUNet<T>::Norm norm{};
    Tensor<T> xhat;
    std::vector<T> inv_std;
    double slope = 0.0;
  };

  explicit Graph(const std::vector<Parameter<T>> & params, bool record = true) : params_(&params), record_(record) {}

  int input(Tensor<T> x);
  int conv(int x, const typename ResidualUNet<T>::Conv & c);
  int upconv(int x, const typename ResidualUNet<T>::UpConv & u);
  int norm(int x, const typename ResidualUNet<T>::Norm & nm);
  int lrelu(int x, double slope);
  int add(int a, int b);
  int concat(int a, int b);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor<T> & value(int id) const { return nodes_[id].value; }
  Tensor<T> take(int id) { return std::move(nodes_[id].value); }

  void backward(int output, const Tensor<T> & grad, std::vector<std::vector<T>> & param_grads);

private:
  int push(Node n);

  const std::vector<Parameter<T>> * params_;
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace promptseg
