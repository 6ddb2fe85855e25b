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

#include "promptseg/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>

#include "promptseg/evalkit.hpp"
#include "promptseg/loss.hpp"
#include "promptseg/synthgen.hpp"

namespace promptseg
{

void TrainConfig::validate(const NetworkConfig & net) const
{
  if (patch_size <= 0 || patch_size % net.downsampling_factor() != 0) {
    throw InvalidArgument("patch size must be a positive multiple of " + std::to_string(net.downsampling_factor()));
  }
  if (inference_patch < 0 || inference_patch % net.downsampling_factor() != 0) {
    throw InvalidArgument("inference patch must be 0 or a positive multiple of " + std::to_string(net.downsampling_factor()));
  }
  if (batch_size < 1 || epochs < 1 || iterations_per_epoch < 1) {
    throw InvalidArgument("batch size, epochs and iterations per epoch must be >= 1");
  }
  if (!(base_lr > 0.0)) {
    throw InvalidArgument("learning rate must be > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw InvalidArgument("momentum must lie in [0, 1)");
  }
  if (fg_bias < 0.0 || fg_bias > 1.0) {
    throw InvalidArgument("fg_bias must lie in [0, 1]");
  }
  double total = 0.0;
  for (double w : prompt_weights) {
    if (w < 0.0) {
      throw InvalidArgument("prompt weights must be >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw InvalidArgument("at least one prompt weight must be positive");
  }
  if (rounds < 1) {
    throw InvalidArgument("rounds must be >= 1");
  }
  if (validation_cases < 0) {
    throw InvalidArgument("validation_cases must be >= 0");
  }
}

nlohmann::json to_json(const TrainConfig & c)
{
  return {{"patch_size", c.patch_size},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"iterations_per_epoch", c.iterations_per_epoch},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"nesterov", c.nesterov},
          {"poly_exponent", c.poly_exponent},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"fg_bias", c.fg_bias},
          {"prompt_weights",
           {{"point", c.prompt_weights[0]}, {"box", c.prompt_weights[1]}, {"lasso", c.prompt_weights[2]},
            {"scribble", c.prompt_weights[3]}}},
          {"rounds", c.rounds},
          {"augment", c.augment},
          {"validation_cases", c.validation_cases},
          {"inference_patch", c.inference_patch},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json & j)
{
  static const std::set<std::string> known{"patch_size",  "batch_size",     "epochs",       "iterations_per_epoch",
                                           "base_lr",     "momentum",       "nesterov",     "poly_exponent",
                                           "weight_decay", "grad_clip",     "fg_bias",      "prompt_weights",
                                           "rounds",      "augment",        "validation_cases", "inference_patch",
                                           "seed"};
  if (!j.is_object()) {
    throw InvalidArgument("training config must be a JSON object");
  }
  for (const auto & [key, _] : j.items()) {
    if (!known.count(key)) {
      throw InvalidArgument("unknown training config key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    c.patch_size = j.value("patch_size", c.patch_size);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.iterations_per_epoch = j.value("iterations_per_epoch", c.iterations_per_epoch);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.momentum = j.value("momentum", c.momentum);
    c.nesterov = j.value("nesterov", c.nesterov);
    c.poly_exponent = j.value("poly_exponent", c.poly_exponent);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.fg_bias = j.value("fg_bias", c.fg_bias);
    if (j.contains("prompt_weights")) {
      const auto & w = j.at("prompt_weights");
      for (PromptKind k : kAllPromptKinds) {
        c.prompt_weights[static_cast<int>(k)] = w.value(std::string(to_string(k)), 0.0);
      }
    }
    c.rounds = j.value("rounds", c.rounds);
    c.augment = j.value("augment", c.augment);
    c.validation_cases = j.value("validation_cases", c.validation_cases);
    c.inference_patch = j.value("inference_patch", c.inference_patch);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception & e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  }
  return c;
}

double poly_lr(double base_lr, int epoch, int epochs, double exponent)
{
  if (epochs <= 0) {
    throw InvalidArgument("poly_lr: epochs must be > 0");
  }
  const double frac = std::clamp(1.0 - static_cast<double>(epoch) / epochs, 0.0, 1.0);
  return base_lr * std::pow(frac, exponent);
}

std::vector<TrainingCase> load_training_cases(const std::string & dir, const std::string & split,
                                              const PreprocessConfig & pre)
{
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("dataset directory does not exist: " + dir);
  }
  const Manifest m = load_manifest(dir);
  std::vector<TrainingCase> out;
  for (const auto & c : m.split(split)) {
    const ImageVolume raw = load_volume((std::filesystem::path(dir) / c.image).string());
    const BinaryMask gt = load_mask((std::filesystem::path(dir) / c.label).string());
    PreparedImage p = preprocess(raw, pre);
    out.push_back({c.id, std::move(p.image), to_preprocessed(gt, p.record)});
  }
  return out;
}

namespace
{

template <typename T>
Volume<T> extract_patch(const Volume<T> & vol, const Voxel & start, int p, T pad)
{
  Volume<T> out(Geometry::with_shape({p, p, p}), pad);
  const Shape3 & s = vol.shape();
  for (int z = 0; z < p; ++z) {
    const int zz = start.z + z;
    if (zz < 0 || zz >= s[0]) {
      continue;
    }
    for (int y = 0; y < p; ++y) {
      const int yy = start.y + y;
      if (yy < 0 || yy >= s[1]) {
        continue;
      }
      for (int x = 0; x < p; ++x) {
        const int xx = start.x + x;
        if (xx >= 0 && xx < s[2]) {
          out.at(z, y, x) = vol.at(zz, yy, xx);
        }
      }
    }
  }
  return out;
}

int draw_start(int extent, int patch, int must_cover, Rng & rng)
{
  if (extent <= patch) {
    return 0;
  }
  int lo = 0;
  int hi = extent - patch;
  if (must_cover >= 0) {
    lo = std::max(lo, must_cover - patch + 1);
    hi = std::min(hi, must_cover);
  }
  return static_cast<int>(rng.uniform_int(lo, hi));
}

PromptKind draw_kind(const std::array<double, 4> & w, Rng & rng)
{
  const double total = w[0] + w[1] + w[2] + w[3];
  double u = rng.uniform() * total;
  for (int k = 0; k < 4; ++k) {
    if (w[k] > 0.0 && u < w[k]) {
      return static_cast<PromptKind>(k);
    }
    u -= w[k];
  }
  for (int k = 3; k >= 0; --k) {
    if (w[k] > 0.0) {
      return static_cast<PromptKind>(k);
    }
  }
  return PromptKind::point;
}

BinaryMask predict_patch(const ResidualUNet<float> & model, const GuidanceStack & stack)
{
  Tensor<float> in(1, stack.channels, stack.shape);
  std::copy(stack.data.begin(), stack.data.end(), in.data.begin());
  const Tensor<float> logits = model.forward_logits(in);
  BinaryMask m(Geometry::with_shape(stack.shape));
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = logits.data[i] >= 0.0F ? 1 : 0;  // sigmoid >= 0.5
  }
  return m;
}

}  // namespace

TrainingInstance sample_training_instance(const ImageVolume & image, const BinaryMask & mask, const TrainConfig & cfg,
                                          const GuidanceConfig & guidance, Rng & rng, const ResidualUNet<float> * model)
{
  if (image.shape() != mask.shape()) {
    throw InvalidArgument("image and mask shapes differ");
  }
  const int p = cfg.patch_size;
  const Shape3 & s = image.shape();
  const float pad = image.data.empty() ? 0.0F : *std::min_element(image.data.begin(), image.data.end());
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i]) {
      fg.push_back(i);
    }
  }
  const bool want_fg = rng.bernoulli(cfg.fg_bias) && !fg.empty();

  TrainingInstance inst;
  ImageVolume img;
  constexpr int kMaxRetries = 5;
  for (int attempt = 0;; ++attempt) {
    Voxel cover{-1, -1, -1};
    if (want_fg) {
      const std::size_t off = fg[rng.index(fg.size())];
      cover = {static_cast<int>(off / (static_cast<std::size_t>(s[1]) * s[2])), static_cast<int>((off / s[2]) % s[1]),
               static_cast<int>(off % s[2])};
    }
    const Voxel start{draw_start(s[0], p, cover.z, rng), draw_start(s[1], p, cover.y, rng), draw_start(s[2], p, cover.x, rng)};
    img = extract_patch(image, start, p, pad);
    inst.target = extract_patch(mask, start, p, std::uint8_t{0});
    if (cfg.augment) {
      auto [ai, am] = augment(img, inst.target, cfg.augmentation, rng);
      img = std::move(ai);
      inst.target = std::move(am);
    }
    if (!want_fg || count_foreground(inst.target) > 0 || attempt + 1 >= kMaxRetries) {
      break;
    }
  }

  inst.kind = draw_kind(cfg.prompt_weights, rng);
  if (count_foreground(inst.target) > 0) {
    try {
      inst.prompts = simulate_prompts(inst.kind, inst.target, rng, guidance);
    } catch (const InvalidArgument &) {
      // slivers cut by the patch border can defeat the planar samplers
      inst.kind = PromptKind::point;
      inst.prompts = simulate_point_prompts(inst.target, rng, guidance);
    }
  }

  inst.round = 1;
  if (model != nullptr && cfg.rounds > 1) {
    inst.round = static_cast<int>(rng.uniform_int(1, cfg.rounds));
  }
  std::optional<BinaryMask> previous;
  for (int r = 2; r <= inst.round; ++r) {
    const GuidanceStack stack = previous ? encode_guidance(inst.prompts, img, *previous, guidance)
                                         : encode_guidance(inst.prompts, img, guidance);
    BinaryMask pred = predict_patch(*model, stack);
    BinaryMask fn(pred.geometry);
    for (std::size_t i = 0; i < fn.data.size(); ++i) {
      fn.data[i] = inst.target.data[i] && !pred.data[i];
    }
    if (auto click = sample_corrective_point(fn, Polarity::positive, rng, guidance)) {
      inst.prompts.push_back(*click);
    }
    previous = std::move(pred);
  }
  inst.stack = previous ? encode_guidance(inst.prompts, img, *previous, guidance)
                        : encode_guidance(inst.prompts, img, guidance);
  return inst;
}

double validation_dice(const Predictor & predictor, const std::vector<TrainingCase> & cases, std::uint64_t seed)
{
  if (cases.empty()) {
    return -1.0;
  }
  double sum = 0.0;
  for (const auto & c : cases) {
    Rng rng(fnv1a64(c.id, seed));
    std::vector<Prompt> prompts;
    if (count_foreground(c.mask) > 0) {
      prompts = simulate_point_prompts(c.mask, rng, predictor.guidance());
    }
    const Prediction pred = predict_full(predictor, c.image, prompts, nullptr);
    sum += dice(pred.mask, c.mask);
  }
  return sum / static_cast<double>(cases.size());
}

TrainResult train(const std::vector<TrainingCase> & train_cases, const std::vector<TrainingCase> & val_cases,
                  const NetworkConfig & net_cfg, const TrainConfig & cfg, const GuidanceConfig & guidance,
                  const ModelWeights * init, const EpochCallback & on_epoch)
{
  if (train_cases.empty()) {
    throw InvalidArgument("training set is empty");
  }
  net_cfg.validate();
  guidance.validate();
  cfg.validate(net_cfg);
  if (net_cfg.input_channels != guidance.total_channels()) {
    throw InvalidArgument("network input channels do not match the guidance layout");
  }

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(1);
  auto net = std::make_shared<ResidualUNet<float>>(build_network(net_cfg, init_rng));
  if (init != nullptr) {
    if (init->fingerprint() != config_fingerprint(net_cfg, guidance)) {
      throw InvalidArgument("initial weights were trained for a different configuration");
    }
    *net = init->instantiate();
  }
  auto & params = net->parameters();
  std::vector<std::vector<float>> velocity = net->zero_gradients();

  const std::vector<TrainingCase> val(val_cases.begin(),
                                      val_cases.begin() + std::min<std::size_t>(val_cases.size(), cfg.validation_cases));
  const int p = cfg.patch_size;
  const int channels = guidance.total_channels();

  TrainResult result;
  double best_dsc = -2.0;
  std::vector<Parameter<float>> best_params = params;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = poly_lr(cfg.base_lr, epoch, cfg.epochs, cfg.poly_exponent);
    double loss_sum = 0.0;
    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      Tensor<float> input(cfg.batch_size, channels, {p, p, p});
      Tensor<float> target(cfg.batch_size, 1, {p, p, p});
      for (int b = 0; b < cfg.batch_size; ++b) {
        const TrainingCase & tc = train_cases[rng.index(train_cases.size())];
        const TrainingInstance inst = sample_training_instance(tc.image, tc.mask, cfg, guidance, rng, net.get());
        std::copy(inst.stack.data.begin(), inst.stack.data.end(), input.ptr(b, 0));
        std::copy(inst.target.data.begin(), inst.target.data.end(), target.ptr(b, 0));
      }
      Graph<float> graph(params);
      const Tensor<float> logits = net->forward_logits(input, graph);
      Tensor<float> d_logits;
      const LossTerms loss = dice_ce_from_logits(logits, target, &d_logits);
      if (!std::isfinite(loss.total)) {
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) + ", iteration " +
                               std::to_string(it) + " (dice " + std::to_string(loss.dice) + ", ce " +
                               std::to_string(loss.ce) + ")");
      }
      loss_sum += loss.total;
      auto grads = net->zero_gradients();
      net->backward(graph, d_logits, grads);

      double norm2 = 0.0;
      for (const auto & g : grads) {
        for (float v : g) {
          norm2 += static_cast<double>(v) * v;
        }
      }
      if (!std::isfinite(norm2)) {
        throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch));
      }
      const double norm = std::sqrt(norm2);
      const double scale = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
      const float mu = static_cast<float>(cfg.momentum);
      const float step = static_cast<float>(lr);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto & w = params[i].values;
        auto & v = velocity[i];
        const auto & g = grads[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
          const float gk = static_cast<float>(g[k] * scale) + static_cast<float>(cfg.weight_decay) * w[k];
          v[k] = mu * v[k] + gk;
          w[k] -= step * (cfg.nesterov ? gk + mu * v[k] : v[k]);
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / cfg.iterations_per_epoch;
    if (!val.empty()) {
      const NetworkPredictor predictor(net, guidance, cfg.effective_inference_patch());
      rec.val_dsc = validation_dice(predictor, val, cfg.seed);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    const double score = val.empty() ? static_cast<double>(epoch) : rec.val_dsc;
    if (score > best_dsc) {
      best_dsc = score;
      best_params = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) {
      on_epoch(rec);
    }
  }

  nlohmann::json meta;
  meta["seed"] = cfg.seed;
  meta["epochs"] = cfg.epochs;
  meta["inference_patch"] = cfg.effective_inference_patch();
  meta["train_config"] = to_json(cfg);
  meta["history"] = history_to_json(result.history);
  result.last = ModelWeights::from_network(*net, guidance);
  result.last.metadata = meta;
  result.last.metadata["epoch"] = cfg.epochs - 1;
  result.best = result.last;
  result.best.parameters = best_params;
  result.best.metadata["epoch"] = result.best_epoch;
  return result;
}

nlohmann::json history_to_json(const std::vector<EpochRecord> & history)
{
  nlohmann::json arr = nlohmann::json::array();
  for (const auto & r : history) {
    nlohmann::json e{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"seconds", r.seconds}};
    e["val_dsc"] = r.val_dsc >= 0.0 ? nlohmann::json(r.val_dsc) : nlohmann::json(nullptr);
    arr.push_back(e);
  }
  return arr;
}

}  // namespace promptseg
