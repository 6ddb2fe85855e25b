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

#include "promptseg/loss.hpp"

#include <cmath>

namespace promptseg
{
namespace
{

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

template <typename T>
void check_shapes(const Tensor<T> & a, const Tensor<T> & b)
{
  if (a.n != b.n || a.c != b.c || a.spatial != b.spatial) {
    throw InvalidArgument("loss: prediction and target shapes differ");
  }
}

}  // namespace

template <typename T>
double soft_dice(std::span<const T> p, std::span<const T> g)
{
  double inter = 0.0;
  double sp = 0.0;
  double sg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<double>(p[i]) * g[i];
    sp += p[i];
    sg += g[i];
  }
  return (2.0 * inter + kSoftDiceEpsilon) / (sp + sg + kSoftDiceEpsilon);
}

template <typename T>
double binary_cross_entropy(std::span<const T> p, std::span<const T> g)
{
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc -= g[i] * std::log(static_cast<double>(p[i])) + (1.0 - g[i]) * std::log(1.0 - static_cast<double>(p[i]));
  }
  return acc / static_cast<double>(p.size());
}

template <typename T>
LossTerms dice_ce_loss(const Tensor<T> & p, const Tensor<T> & g, LossWeights w)
{
  check_shapes(p, g);
  for (T v : p.data) {
    if (!(v > T{} && v < T{1})) {
      throw InvalidArgument("probabilities must lie strictly inside (0,1)");
    }
  }
  LossTerms out;
  const std::size_t per = static_cast<std::size_t>(p.c) * p.plane();
  for (int b = 0; b < p.n; ++b) {
    out.dice += 1.0 - soft_dice<T>({p.ptr(b, 0), per}, {g.ptr(b, 0), per});
  }
  out.dice /= p.n;
  out.ce = binary_cross_entropy<T>(p.data, g.data);
  out.total = w.dice * out.dice + w.ce * out.ce;
  return out;
}

LossTerms dice_ce_loss(const ProbabilityMap & probabilities, const BinaryMask & target, LossWeights w)
{
  if (probabilities.shape() != target.shape()) {
    throw InvalidArgument("loss: prediction and target shapes differ");
  }
  Tensor<double> p(1, 1, probabilities.shape());
  Tensor<double> g(1, 1, target.shape());
  std::copy(probabilities.data.begin(), probabilities.data.end(), p.data.begin());
  std::copy(target.data.begin(), target.data.end(), g.data.begin());
  return dice_ce_loss(p, g, w);
}

template <typename T>
LossTerms dice_ce_from_logits(const Tensor<T> & z, const Tensor<T> & g, Tensor<T> * dz, LossWeights w)
{
  check_shapes(z, g);
  const std::size_t total = z.data.size();
  const std::size_t per = static_cast<std::size_t>(z.c) * z.plane();
  if (dz) {
    *dz = Tensor<T>(z.n, z.c, z.spatial);
  }
  LossTerms out;
  double ce = 0.0;
  std::vector<double> p(per);
  for (int b = 0; b < z.n; ++b) {
    const T * zb = z.ptr(b, 0);
    const T * gb = g.ptr(b, 0);
    double inter = 0.0;
    double sp = 0.0;
    double sg = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double zi = zb[i];
      p[i] = sigmoid(zi);
      ce += gb[i] * softplus(-zi) + (1.0 - gb[i]) * softplus(zi);
      inter += p[i] * gb[i];
      sp += p[i];
      sg += gb[i];
    }
    const double denom = sp + sg + kSoftDiceEpsilon;
    const double num = 2.0 * inter + kSoftDiceEpsilon;
    out.dice += 1.0 - num / denom;
    if (dz) {
      T * d = dz->ptr(b, 0);
      for (std::size_t i = 0; i < per; ++i) {
        const double d_dice_dp = -(2.0 * gb[i] * denom - num) / (denom * denom) / z.n;
        const double d_dice_dz = d_dice_dp * p[i] * (1.0 - p[i]);
        const double d_ce_dz = (p[i] - gb[i]) / static_cast<double>(total);
        d[i] = static_cast<T>(w.dice * d_dice_dz + w.ce * d_ce_dz);
      }
    }
  }
  out.dice /= z.n;
  out.ce = ce / static_cast<double>(total);
  out.total = w.dice * out.dice + w.ce * out.ce;
  return out;
}

template double soft_dice<float>(std::span<const float>, std::span<const float>);
template double soft_dice<double>(std::span<const double>, std::span<const double>);
template double binary_cross_entropy<float>(std::span<const float>, std::span<const float>);
template double binary_cross_entropy<double>(std::span<const double>, std::span<const double>);
template LossTerms dice_ce_loss<float>(const Tensor<float> &, const Tensor<float> &, LossWeights);
template LossTerms dice_ce_loss<double>(const Tensor<double> &, const Tensor<double> &, LossWeights);
template LossTerms dice_ce_from_logits<float>(const Tensor<float> &, const Tensor<float> &, Tensor<float> *, LossWeights);
template LossTerms dice_ce_from_logits<double>(const Tensor<double> &, const Tensor<double> &, Tensor<double> *, LossWeights);

}  // namespace promptseg
