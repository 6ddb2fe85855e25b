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

#include "promptseg/nn.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

inline constexpr double kSoftDiceEpsilon = 1e-5;

/// total = dice_weight * dice + ce_weight * ce, where `dice` is 1 - softDice averaged
/// over the batch (softDice summed over each whole patch) and `ce` the mean binary
/// cross-entropy over every voxel.
struct LossTerms
{
  double total = 0.0;
  double dice = 0.0;
  double ce = 0.0;
};

struct LossWeights
{
  double dice = 1.0;
  double ce = 1.0;
};

/// (2 sum(p g) + eps) / (sum(p) + sum(g) + eps)
template <typename T>
double soft_dice(std::span<const T> probabilities, std::span<const T> target);

/// Mean of -(g log p + (1 - g) log(1 - p)).
template <typename T>
double binary_cross_entropy(std::span<const T> probabilities, std::span<const T> target);

/// Probability-space loss; probabilities must lie strictly inside (0, 1).
template <typename T>
LossTerms dice_ce_loss(const Tensor<T> & probabilities, const Tensor<T> & target, LossWeights w = {});

LossTerms dice_ce_loss(const ProbabilityMap & probabilities, const BinaryMask & target, LossWeights w = {});

/// Same loss evaluated from logits (numerically stable); writes dLoss/dlogit when
/// `d_logits` is non-null.
template <typename T>
LossTerms dice_ce_from_logits(const Tensor<T> & logits, const Tensor<T> & target, Tensor<T> * d_logits, LossWeights w = {});

template <typename T>
inline T sigmoid(T z)
{
  return z >= T{} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
}

}  // namespace promptseg
