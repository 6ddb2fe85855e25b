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

// promptseg: synth / train / eval / serve

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptseg/evalkit.hpp"
#include "promptseg/model.hpp"
#include "promptseg/server.hpp"
#include "promptseg/synthgen.hpp"
#include "promptseg/train.hpp"

namespace ps = promptseg;

namespace
{

struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ps::IoError("cannot open " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw ps::IoError(path + ": " + e.what());
  }
}

void write_text(const std::string & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw ps::IoError("cannot write " + path);
  }
}

struct SynthArgs
{
  std::string out;
  int n_train = 200;
  int n_val = 50;
  int size = 64;
  std::string preset = "easy";
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs & a)
{
  const ps::PhantomConfig cfg = ps::PhantomConfig::preset(a.preset, a.size);
  const ps::Manifest m = ps::generate_dataset(cfg, a.preset, a.n_train, a.n_val, a.seed, a.out);
  std::cout << "wrote " << m.cases.size() << " cases (" << a.n_train << " train, " << a.n_val << " val) to " << a.out
            << "\n";
  return 0;
}

struct TrainArgs
{
  std::string data;
  std::string config;
  std::string out;
  std::string history;
  std::string resume;
  bool quiet = false;
};

int run_train(const TrainArgs & a)
{
  nlohmann::json cfg_json = a.config.empty() ? nlohmann::json::object() : read_json(a.config);
  ps::GuidanceConfig guidance;
  if (cfg_json.contains("guidance")) {
    guidance = ps::guidance_config_from_json(cfg_json.at("guidance"));
    cfg_json.erase("guidance");
  }
  ps::NetworkConfig net = ps::NetworkConfig::toy(guidance.layout);
  if (cfg_json.contains("network")) {
    const auto & n = cfg_json.at("network");
    net = n.is_string() ? (n.get<std::string>() == "resenc_l" ? ps::NetworkConfig::resenc_l(guidance.layout)
                                                              : ps::NetworkConfig::toy(guidance.layout))
                        : ps::network_config_from_json(n);
    cfg_json.erase("network");
  }
  const ps::TrainConfig tc = ps::train_config_from_json(cfg_json);

  const auto train_cases = ps::load_training_cases(a.data, "train");
  const auto val_cases = ps::load_training_cases(a.data, "val");
  if (train_cases.empty()) {
    throw ps::InvalidArgument("dataset " + a.data + " has no training cases");
  }
  std::optional<ps::ModelWeights> init;
  if (!a.resume.empty()) {
    init = ps::load_weights(a.resume, ps::config_fingerprint(net, guidance));
  }
  if (!a.quiet) {
    std::cout << "training on " << train_cases.size() << " cases, validating on "
              << std::min<std::size_t>(val_cases.size(), tc.validation_cases) << "\n";
  }
  const ps::TrainResult r = ps::train(train_cases, val_cases, net, tc, guidance, init ? &*init : nullptr,
                                      [&](const ps::EpochRecord & e) {
                                        if (!a.quiet) {
                                          std::cout << "epoch " << e.epoch << "  lr " << e.lr << "  loss "
                                                    << e.train_loss << "  val_dsc " << e.val_dsc << "  ("
                                                    << e.seconds << " s)" << std::endl;
                                        }
                                      });
  ps::save_weights(r.best, a.out);
  const std::string hist = a.history.empty() ? a.out + ".history.json" : a.history;
  nlohmann::json h{{"best_epoch", r.best_epoch}, {"fingerprint", r.best.fingerprint()}, {"epochs", ps::history_to_json(r.history)}};
  write_text(hist, h.dump(2) + "\n");
  std::cout << "saved weights (best epoch " << r.best_epoch << ") to " << a.out << "\n";
  return 0;
}

struct EvalArgs
{
  std::string data;
  std::string weights;
  std::string prompt = "point";
  int rounds = 1;
  std::uint64_t seed = 0;
  std::string report;
  std::string split = "val";
  std::string method;
  int patch = 0;
  bool oracle = false;
  bool negative = false;
};

int run_eval(const EvalArgs & a)
{
  if (!a.oracle && a.weights.empty()) {
    throw UsageError("--weights is required unless --oracle is given");
  }
  ps::BenchmarkConfig bc;
  bc.prompt = ps::parse_benchmark_prompt(a.prompt);
  bc.rounds = a.rounds;
  bc.seed = a.seed;
  bc.negative_corrections = a.negative;
  ps::PredictorFactory factory;
  if (a.oracle) {
    bc.method = a.method.empty() ? "oracle" : a.method;
    bc.fingerprint = "oracle";
    factory = [](const ps::BinaryMask & gt) { return std::make_shared<ps::FixedMaskPredictor>(gt); };
  } else {
    const ps::ModelWeights w = ps::load_weights(a.weights);
    auto net = std::make_shared<const ps::ResidualUNet<float>>(w.instantiate());
    auto predictor = std::make_shared<const ps::NetworkPredictor>(net, w.guidance, a.patch > 0 ? a.patch : ps::inference_patch(w));
    bc.method = a.method.empty() ? "promptseg" : a.method;
    bc.fingerprint = w.fingerprint();
    factory = [predictor](const ps::BinaryMask &) { return predictor; };
  }
  const auto cases = ps::load_benchmark_cases(a.data, a.split);
  if (cases.empty()) {
    throw ps::InvalidArgument("dataset " + a.data + " has no '" + a.split + "' cases");
  }
  const ps::BenchmarkReport r = ps::run_benchmark(factory, cases, bc);
  if (!a.report.empty()) {
    write_text(a.report, ps::report_json(r));
  }
  std::cout << ps::report_table({r});
  return 0;
}

struct ServeArgs
{
  std::string weights;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_sessions = 16;
  std::string ui_dir;
  int patch = 0;
};

int run_serve(const ServeArgs & a)
{
  const ps::ModelWeights w = ps::load_weights(a.weights);
  auto net = std::make_shared<const ps::ResidualUNet<float>>(w.instantiate());
  auto predictor = std::make_shared<const ps::NetworkPredictor>(net, w.guidance, a.patch > 0 ? a.patch : ps::inference_patch(w));
  ps::ServerConfig sc;
  sc.host = a.host;
  sc.port = a.port;
  sc.max_sessions = a.max_sessions;
  sc.ui_dir = a.ui_dir;

  // block termination signals in every thread; the main thread waits for them
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ps::SegmentationServer server(predictor, sc);
  const int port = server.bind();
  server.start();
  std::cout << "listening on http://" << a.host << ":" << port << "\n" << ps::SegmentationServer::endpoint_table() << std::flush;
  int sig = 0;
  sigwait(&set, &sig);
  std::cout << "shutting down\n";
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Promptable 3D tumour segmentation: phantoms, training, evaluation and serving"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthArgs synth;
  auto * s = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  s->add_option("--out", synth.out, "Output directory")->required()->envname("PROMPTSEG_OUT");
  s->add_option("--n-train", synth.n_train, "Training cases")->envname("PROMPTSEG_N_TRAIN")->check(CLI::NonNegativeNumber);
  s->add_option("--n-val", synth.n_val, "Validation cases")->envname("PROMPTSEG_N_VAL")->check(CLI::NonNegativeNumber);
  s->add_option("--size", synth.size, "Grid edge in voxels")->envname("PROMPTSEG_SIZE")->check(CLI::Range(8, 512));
  s->add_option("--preset", synth.preset, "Phantom preset")->envname("PROMPTSEG_PRESET")->check(CLI::IsMember({"easy", "hard"}));
  s->add_option("--seed", synth.seed, "Random seed")->envname("PROMPTSEG_SEED");

  TrainArgs train;
  auto * t = app.add_subcommand("train", "Train a network on a dataset");
  t->add_option("--data", train.data, "Dataset directory")->required()->envname("PROMPTSEG_DATA");
  t->add_option("--config", train.config, "Training config JSON")->envname("PROMPTSEG_CONFIG");
  t->add_option("--out", train.out, "Output weights file")->required()->envname("PROMPTSEG_OUT");
  t->add_option("--history", train.history, "History JSON (default: <out>.history.json)")->envname("PROMPTSEG_HISTORY");
  t->add_option("--resume", train.resume, "Initial weights")->envname("PROMPTSEG_RESUME");
  t->add_flag("--quiet", train.quiet, "Suppress per-epoch logging");

  EvalArgs eval;
  auto * e = app.add_subcommand("eval", "Run the simulated-interaction benchmark");
  e->add_option("--data", eval.data, "Dataset directory")->required()->envname("PROMPTSEG_DATA");
  e->add_option("--weights", eval.weights, "Weights file")->envname("PROMPTSEG_WEIGHTS");
  e->add_option("--prompt", eval.prompt, "Prompt type")
      ->envname("PROMPTSEG_PROMPT")
      ->check(CLI::IsMember({"none", "point", "box", "lasso", "scribble"}));
  e->add_option("--rounds", eval.rounds, "Interaction rounds")->envname("PROMPTSEG_ROUNDS")->check(CLI::PositiveNumber);
  e->add_option("--seed", eval.seed, "Random seed")->envname("PROMPTSEG_SEED");
  e->add_option("--report", eval.report, "Report JSON path")->envname("PROMPTSEG_REPORT");
  e->add_option("--split", eval.split, "Manifest split")->envname("PROMPTSEG_SPLIT");
  e->add_option("--method", eval.method, "Method label in the table")->envname("PROMPTSEG_METHOD");
  e->add_option("--patch", eval.patch, "Inference tile edge (default: the training patch)")->envname("PROMPTSEG_PATCH")->check(CLI::NonNegativeNumber);
  e->add_flag("--oracle", eval.oracle, "Use a ground-truth oracle instead of a network");
  e->add_flag("--negative-corrections", eval.negative, "Click false positives once no false negatives remain");

  ServeArgs serve;
  auto * v = app.add_subcommand("serve", "Start the HTTP session server");
  v->add_option("--weights", serve.weights, "Weights file")->required()->envname("PROMPTSEG_WEIGHTS");
  v->add_option("--port", serve.port, "TCP port")->envname("PROMPTSEG_PORT")->check(CLI::Range(0, 65535));
  v->add_option("--host", serve.host, "Bind address")->envname("PROMPTSEG_HOST");
  v->add_option("--max-sessions", serve.max_sessions, "Session cap")->envname("PROMPTSEG_MAX_SESSIONS")->check(CLI::PositiveNumber);
  v->add_option("--ui-dir", serve.ui_dir, "Static UI directory served under /ui")->envname("PROMPTSEG_UI_DIR");
  v->add_option("--patch", serve.patch, "Inference tile edge (default: the training patch)")->envname("PROMPTSEG_PATCH")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) {
      return run_synth(synth);
    }
    if (*t) {
      return run_train(train);
    }
    if (*e) {
      return run_eval(eval);
    }
    return run_serve(serve);
  } catch (const UsageError & err) {
    std::cerr << "usage error: " << err.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception & err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
