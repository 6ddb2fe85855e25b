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

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/model.hpp"
#include "promptseg/nn.hpp"
#include "promptseg/promptsim.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

struct TrainConfig
{
  int patch_size = 32;
  int batch_size = 2;
  int epochs = 5;
  int iterations_per_epoch = 25;
  double base_lr = 1e-2;
  double momentum = 0.99;
  bool nesterov = true;
  double poly_exponent = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 12.0;      ///< global L2 norm cap; <= 0 disables
  double fg_bias = 0.5;         ///< probability of centring a patch on foreground
  std::array<double, 4> prompt_weights{1.0, 1.0, 1.0, 1.0};  ///< point, box, lasso, scribble
  int rounds = 1;               ///< > 1 enables self-refinement instances
  bool augment = true;
  AugmentConfig augmentation{};
  int validation_cases = 8;     ///< 0 disables validation
  int inference_patch = 0;     ///< 0: same as patch_size
  int effective_inference_patch() const { return inference_patch > 0 ? inference_patch : patch_size; }
  std::uint64_t seed = 0;

  void validate(const NetworkConfig & net) const;
};

nlohmann::json to_json(const TrainConfig & cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json & j);

/// lr0 * (1 - epoch / epochs) ^ exponent, clamped at 0.
double poly_lr(double base_lr, int epoch, int epochs, double exponent = 0.9);

/// Preprocessed image with its preprocessed ground truth.
struct TrainingCase
{
  std::string id;
  ImageVolume image;
  BinaryMask mask;
};

/// Reads a synthgen-style dataset split and preprocesses every case.
std::vector<TrainingCase> load_training_cases(const std::string & dir, const std::string & split,
                                              const PreprocessConfig & pre = {});

struct TrainingInstance
{
  GuidanceStack stack;
  BinaryMask target;
  PromptKind kind = PromptKind::point;
  std::vector<Prompt> prompts;
  int round = 1;
};

/// One augmented patch with simulated prompts. With `model` set and cfg.rounds > 1 the
/// round is drawn from 1..rounds and later rounds feed the model's own prediction back
/// together with a corrective positive click from its false negatives.
TrainingInstance sample_training_instance(const ImageVolume & image, const BinaryMask & mask, const TrainConfig & cfg,
                                          const GuidanceConfig & guidance, Rng & rng,
                                          const ResidualUNet<float> * model = nullptr);

struct EpochRecord
{
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_dsc = -1.0;  ///< -1 when validation is disabled
  double seconds = 0.0;
};

struct TrainResult
{
  ModelWeights best;
  ModelWeights last;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

class TrainingDiverged : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Mini-batch SGD with Nesterov momentum and poly decay. Keeps the weights of the epoch
/// with the best validation DSC (the last epoch when validation is disabled).
TrainResult train(const std::vector<TrainingCase> & train_cases, const std::vector<TrainingCase> & val_cases,
                  const NetworkConfig & net_cfg, const TrainConfig & cfg, const GuidanceConfig & guidance,
                  const ModelWeights * init = nullptr, const EpochCallback & on_epoch = {});

nlohmann::json history_to_json(const std::vector<EpochRecord> & history);

/// Mean DSC with one simulated point prompt per case; seeds derive from `seed` and case ids.
double validation_dice(const Predictor & predictor, const std::vector<TrainingCase> & cases, std::uint64_t seed);

}  // namespace promptseg
