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

// Central-difference check of dice_ce_from_logits composed with the network.

#include <algorithm>
#include <cmath>
#include <vector>

#include "promptseg/loss.hpp"
#include "promptseg/nn.hpp"

namespace gradcheck
{

struct Sample
{
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct Result
{
  std::vector<Sample> samples;
  double max_rel_error = 0.0;
  int degenerate_skipped = 0;  ///< parameters whose analytic gradient is ~0
};

/// Samples `count` parameters uniformly among those with |analytic| > `floor`.
inline Result run(promptseg::ResidualUNet<double> & net, const promptseg::Tensor<double> & input,
                  const promptseg::Tensor<double> & target, int count, double h, promptseg::Rng & rng,
                  double floor = 1e-7)
{
  using namespace promptseg;
  auto loss_at = [&]() {
    return dice_ce_from_logits(net.forward_logits(input), target, static_cast<Tensor<double> *>(nullptr)).total;
  };
  Graph<double> graph(net.parameters());
  const Tensor<double> logits = net.forward_logits(input, graph);
  Tensor<double> d_logits;
  dice_ce_from_logits(logits, target, &d_logits);
  auto grads = net.zero_gradients();
  net.backward(graph, d_logits, grads);

  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  Result res;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (std::abs(grads[t][i]) > floor) {
        candidates.emplace_back(t, i);
      } else {
        ++res.degenerate_skipped;
      }
    }
  }
  for (int k = 0; k < count && !candidates.empty(); ++k) {
    const std::size_t pick = rng.index(candidates.size());
    const auto [t, i] = candidates[pick];
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    double & w = net.parameters()[t].values[i];
    const double saved = w;
    w = saved + h;
    const double up = loss_at();
    w = saved - h;
    const double down = loss_at();
    w = saved;
    Sample s{t, i, grads[t][i], (up - down) / (2.0 * h), 0.0};
    s.rel_error = std::abs(s.analytic - s.numeric) / std::max({std::abs(s.analytic), std::abs(s.numeric), 1e-300});
    res.max_rel_error = std::max(res.max_rel_error, s.rel_error);
    res.samples.push_back(s);
  }
  return res;
}

/// The fixed problem used by tests: batch 2, 4 input channels, 4^3 voxels, binary target.
inline void make_problem(promptseg::Rng & rng, promptseg::Tensor<double> & input, promptseg::Tensor<double> & target)
{
  input = promptseg::Tensor<double>(2, 4, {4, 4, 4});
  target = promptseg::Tensor<double>(2, 1, {4, 4, 4});
  for (auto & v : input.data) {
    v = rng.normal();
  }
  for (auto & v : target.data) {
    v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
}

}  // namespace gradcheck
