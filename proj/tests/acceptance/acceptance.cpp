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

// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "../common/gradcheck.hpp"
#include "promptseg/evalkit.hpp"
#include "promptseg/model.hpp"
#include "promptseg/promptsim.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/server.hpp"
#include "promptseg/synthgen.hpp"
#include "promptseg/train.hpp"

namespace ps = promptseg;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string & what)
  {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

struct Options
{
  std::string workdir = "acceptance_work";
  std::string weights;  // reuse a trained model for criterion 5
  std::set<int> only;
  int epochs = 12;
  int iterations = 40;
};

ps::BinaryMask random_mask(ps::Shape3 s, ps::Rng & rng, double p)
{
  ps::BinaryMask m(ps::Geometry::with_shape(s));
  for (auto & v : m.data) {
    v = rng.bernoulli(p) ? 1 : 0;
  }
  return m;
}

ps::BinaryMask ellipsoid(ps::Shape3 shape, ps::Vec3 c, ps::Vec3 r)
{
  ps::BinaryMask m(ps::Geometry::with_shape(shape));
  for (int z = 0; z < shape[0]; ++z) {
    for (int y = 0; y < shape[1]; ++y) {
      for (int x = 0; x < shape[2]; ++x) {
        const double a = (z - c[0]) / r[0];
        const double b = (y - c[1]) / r[1];
        const double d = (x - c[2]) / r[2];
        m.at(z, y, x) = a * a + b * b + d * d <= 1.0 ? 1 : 0;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

void metric_oracle(Outcome & o)
{
  ps::Rng rng(101);
  double max_err = 0.0;
  double max_identity = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto a = random_mask({16, 16, 16}, rng, rng.uniform(0.0, 0.8));
    const auto b = random_mask({16, 16, 16}, rng, rng.uniform(0.0, 0.8));
    long inter = 0;
    long uni = 0;
    long sum = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      inter += (a.data[i] == 1 && b.data[i] == 1) ? 1 : 0;
      uni += (a.data[i] == 1 || b.data[i] == 1) ? 1 : 0;
      sum += a.data[i] + b.data[i];
    }
    const double d_ref = sum == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sum);
    const double j_ref = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    const double d = ps::dice(a, b);
    const double j = ps::iou(a, b);
    max_err = std::max({max_err, std::abs(d - d_ref), std::abs(j - j_ref)});
    max_identity = std::max(max_identity, std::abs(j - d / (2.0 - d)));
  }
  o.check(max_err < 1e-12, "metric error");
  o.check(max_identity < 1e-12, "IoU identity");
  o.detail << "max_abs_err=" << max_err << " identity_err=" << max_identity;
}

void prompt_validity(Outcome & o)
{
  const ps::PhantomConfig pc = ps::PhantomConfig::easy(64);
  const ps::GuidanceConfig gc;
  std::vector<ps::BinaryMask> masks;
  for (int i = 0; i < 20; ++i) {
    ps::Rng rng(5000 + static_cast<std::uint64_t>(i));
    masks.push_back(ps::generate_phantom(pc, rng).mask);
  }
  ps::Rng rng(77);
  int points_bad = 0;
  int points = 0;
  int scribble_bad = 0;
  int lasso_bad = 0;
  int box_bad = 0;
  double min_cover = 1.0;
  for (int d = 0; d < 1000; ++d) {
    const ps::BinaryMask & m = masks[static_cast<std::size_t>(d % 20)];
    for (const auto & p : ps::simulate_point_prompts(m, rng, gc)) {
      ++points;
      const auto & pt = std::get<ps::PointPrompt>(p.shape);
      points_bad += (p.polarity != ps::Polarity::positive || m.at(pt.center) != 1) ? 1 : 0;
    }
    {
      const ps::Prompt p = ps::simulate_scribble_prompt(m, rng, gc);
      const ps::BinaryMask r = ps::rasterize_prompt(p, m.geometry);
      bool ok = ps::count_foreground(r) > 0;
      for (std::size_t i = 0; i < r.data.size(); ++i) {
        ok = ok && (r.data[i] == 0 || m.data[i] == 1);
      }
      scribble_bad += ok ? 0 : 1;
    }
    {
      const ps::Prompt p = ps::simulate_lasso_prompt(m, rng, gc);
      const auto & l = std::get<ps::LassoPrompt>(p.shape);
      const std::size_t n = l.vertices.size();
      const bool closed = n >= 3 && !(l.vertices.front() == l.vertices.back()) && ps::polygon_area2(l.vertices) != 0;
      const bool ok = n >= ps::kMinLassoVertices && n <= ps::kMaxLassoVertices && ps::is_simple_polygon(l.vertices) && closed;
      lasso_bad += ok ? 0 : 1;
    }
    {
      const ps::Prompt p = ps::simulate_box_prompt(m, rng, gc);
      const auto & b = std::get<ps::BoxPrompt>(p.shape);
      long fg = 0;
      long inside = 0;
      for (int y = 0; y < m.shape()[1]; ++y) {
        for (int x = 0; x < m.shape()[2]; ++x) {
          if (m.at(b.slice, y, x)) {
            ++fg;
            inside += (y >= b.min.y && y < b.max.y && x >= b.min.x && x < b.max.x) ? 1 : 0;
          }
        }
      }
      const double cover = fg == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(fg);
      min_cover = std::min(min_cover, cover);
      box_bad += cover >= 0.9 ? 0 : 1;
    }
  }
  o.check(points_bad == 0, "point centres");
  o.check(scribble_bad == 0, "scribble voxels");
  o.check(lasso_bad == 0, "lasso polygons");
  o.check(box_bad == 0, "box coverage");

  // slice-selection frequencies
  const ps::BinaryMask & m = masks[0];
  const auto areas = ps::slice_areas(m);
  const double total = static_cast<double>(std::accumulate(areas.begin(), areas.end(), std::size_t{0}));
  std::vector<long> counts(areas.size(), 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    ++counts[static_cast<std::size_t>(ps::select_slice_weighted(m, rng))];
  }
  double worst_sigma = 0.0;
  bool freq_ok = true;
  for (std::size_t z = 0; z < areas.size(); ++z) {
    const double p = static_cast<double>(areas[z]) / total;
    const double expected = n * p;
    const double sd = std::sqrt(n * p * (1.0 - p));
    if (p == 0.0) {
      freq_ok = freq_ok && counts[z] == 0;
      continue;
    }
    const double dev = std::abs(static_cast<double>(counts[z]) - expected) / sd;
    worst_sigma = std::max(worst_sigma, dev);
    freq_ok = freq_ok && dev <= 3.0;
  }
  o.check(freq_ok, "slice frequencies");
  o.detail << "points=" << points << " inside=" << points - points_bad << " scribble_bad=" << scribble_bad
           << " lasso_bad=" << lasso_bad << " min_box_cover=" << min_cover << " worst_slice_dev=" << worst_sigma
           << "sigma";
}

ps::Prompt random_prompt(ps::Shape3 s, ps::Rng & rng)
{
  const auto pol = rng.bernoulli(0.5) ? ps::Polarity::positive : ps::Polarity::negative;
  const int slice = static_cast<int>(rng.uniform_int(0, s[0] - 1));
  auto pix = [&]() {
    return ps::Pixel{static_cast<int>(rng.uniform_int(0, s[1] - 1)), static_cast<int>(rng.uniform_int(0, s[2] - 1))};
  };
  switch (rng.uniform_int(0, 3)) {
    case 0:
      return {ps::PointPrompt{{slice, pix().y, pix().x}, static_cast<int>(rng.uniform_int(1, 5))}, pol};
    case 1: {
      const ps::Pixel a = pix();
      const ps::Pixel b = pix();
      return {ps::BoxPrompt{slice, {std::min(a.y, b.y), std::min(a.x, b.x)}, {std::max(a.y, b.y) + 1, std::max(a.x, b.x) + 1}},
              pol};
    }
    case 2: {
      std::vector<ps::Pixel> v;
      const int k = static_cast<int>(rng.uniform_int(2, 8));
      for (int i = 0; i < k; ++i) {
        v.push_back(pix());
      }
      return {ps::ScribblePrompt{slice, v, static_cast<int>(rng.uniform_int(1, 2))}, pol};
    }
    default: {
      // axis-aligned rectangle as a guaranteed simple polygon
      const int y0 = static_cast<int>(rng.uniform_int(0, s[1] - 3));
      const int x0 = static_cast<int>(rng.uniform_int(0, s[2] - 3));
      const int y1 = static_cast<int>(rng.uniform_int(y0 + 2, s[1] - 1));
      const int x1 = static_cast<int>(rng.uniform_int(x0 + 2, s[2] - 1));
      return {ps::LassoPrompt{slice, {{y0, x0}, {y0, x1}, {y1, x1}, {y1, x0}}}, pol};
    }
  }
}

void encoding_contract(Outcome & o)
{
  ps::Rng rng(303);
  int trials = 0;
  bool channels_ok = true;
  bool range_ok = true;
  bool idem_ok = true;
  bool comm_ok = true;
  for (ps::GuidanceLayout layout : {ps::GuidanceLayout::shared, ps::GuidanceLayout::per_type}) {
    ps::GuidanceConfig gc;
    gc.layout = layout;
    const int expect = layout == ps::GuidanceLayout::shared ? 4 : 10;
    for (int t = 0; t < 60; ++t, ++trials) {
      const ps::Shape3 s{static_cast<int>(rng.uniform_int(4, 16)), static_cast<int>(rng.uniform_int(6, 24)),
                         static_cast<int>(rng.uniform_int(6, 24))};
      ps::ImageVolume img(ps::Geometry::with_shape(s));
      for (auto & v : img.data) {
        v = static_cast<float>(rng.normal());
      }
      ps::ProbabilityMap prev(img.geometry);
      for (auto & v : prev.data) {
        v = static_cast<float>(rng.uniform());
      }
      std::vector<ps::Prompt> prompts;
      const int k = static_cast<int>(rng.uniform_int(0, 8));
      for (int i = 0; i < k; ++i) {
        prompts.push_back(random_prompt(s, rng));
      }
      const ps::GuidanceStack st = ps::encode_guidance(prompts, img, prev, gc);
      channels_ok = channels_ok && st.channels == expect && st.data.size() == expect * ps::voxel_count(s);
      for (int c = 1; c < st.channels; ++c) {
        for (float v : st.channel(c)) {
          range_ok = range_ok && v >= 0.0F && v <= 1.0F;
        }
      }
      std::vector<ps::Prompt> doubled = prompts;
      doubled.insert(doubled.end(), prompts.begin(), prompts.end());
      idem_ok = idem_ok && ps::encode_guidance(doubled, img, prev, gc) == st;
      std::vector<ps::Prompt> shuffled = prompts;
      for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
      }
      comm_ok = comm_ok && ps::encode_guidance(shuffled, img, prev, gc) == st;
    }
  }
  o.check(channels_ok, "channel count");
  o.check(range_ok, "value range");
  o.check(idem_ok, "idempotence");
  o.check(comm_ok, "commutativity");
  o.detail << "randomized_lists=" << trials;
}

void gradient_check(Outcome & o)
{
  ps::Rng rng(2024);
  ps::ResidualUNet<double> net = ps::build_network(ps::NetworkConfig::toy(), rng).cast<double>();
  ps::Tensor<double> input;
  ps::Tensor<double> target;
  gradcheck::make_problem(rng, input, target);
  const auto res = gradcheck::run(net, input, target, 24, 1e-5, rng);
  o.check(res.samples.size() >= 20, "sample count");
  o.check(res.max_rel_error < 1e-4, "relative error");
  o.detail << "sampled=" << res.samples.size() << " max_rel_err=" << res.max_rel_error;
}

void preprocessing_invariants(Outcome & o)
{
  ps::Rng rng(606);
  ps::ImageVolume img(ps::Geometry::with_shape({24, 30, 28}, {1.5, 0.8, 1.1}));
  for (auto & v : img.data) {
    v = static_cast<float>(rng.uniform(100.0, 900.0));
  }
  const ps::ImageVolume z = ps::zscore_normalize(img);
  double mean = 0.0;
  for (float v : z.data) {
    mean += v;
  }
  mean /= static_cast<double>(z.data.size());
  double var = 0.0;
  for (float v : z.data) {
    var += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(z.data.size()));
  o.check(std::abs(mean) < 1e-6 && std::abs(sd - 1.0) < 1e-6, "z-score moments");

  const ps::ImageVolume same = ps::resample(img, img.geometry.spacing, ps::Interpolation::trilinear);
  o.check(same == img, "identity resample");

  const ps::BinaryMask ell = ellipsoid({64, 64, 64}, {31.5, 31.5, 31.5}, {26, 22, 24});
  const ps::BinaryMask coarse = ps::resample(ell, {2.0, 2.0, 2.0});
  const ps::BinaryMask back = ps::resample_to(coarse, {1.0, 1.0, 1.0}, ell.shape());
  const double d = ps::dice(ell, back);
  o.check(d >= 0.95, "round-trip dice");

  ps::ImageVolume head(ps::Geometry::with_shape({40, 40, 40}));
  const ps::BinaryMask body = ellipsoid({40, 40, 40}, {20, 19, 21}, {12, 10, 14});
  for (std::size_t i = 0; i < head.data.size(); ++i) {
    head.data[i] = body.data[i] ? 1.0F + static_cast<float>(rng.uniform()) : 0.0F;
  }
  const auto [cropped, rec] = ps::crop_to_foreground(head, 4);
  const ps::BinaryMask inner = ellipsoid({40, 40, 40}, {20, 19, 21}, {6, 5, 7});
  const ps::BinaryMask rt = ps::uncrop(ps::apply_crop(inner, rec), rec);
  o.check(rt == inner, "crop/uncrop identity");
  o.detail << "mean=" << mean << " sd=" << sd << " rt_dice=" << d;
}

// ---------------------------------------------------------------------------

ps::BenchmarkReport evaluate(const std::shared_ptr<const ps::Predictor> & pred, const std::vector<ps::BenchmarkCase> & cases,
                             std::optional<ps::PromptKind> kind, int rounds, const std::string & fingerprint)
{
  ps::BenchmarkConfig bc;
  bc.prompt = kind;
  bc.rounds = rounds;
  bc.seed = 11;
  bc.fingerprint = fingerprint;
  return ps::run_benchmark([pred](const ps::BinaryMask &) { return pred; }, cases, bc);
}

void toy_end_to_end(Outcome & o, const Options & opt)
{
  const fs::path work = fs::path(opt.workdir) / "toy";
  fs::create_directories(work);
  const auto t0 = std::chrono::steady_clock::now();
  ps::generate_dataset(ps::PhantomConfig::easy(64), "easy", 200, 50, 1, (work / "easy").string());
  ps::generate_dataset(ps::PhantomConfig::hard(64), "hard", 0, 50, 2, (work / "hard").string());

  ps::ModelWeights weights;
  double train_minutes = 0.0;
  if (!opt.weights.empty()) {
    weights = ps::load_weights(opt.weights);
  } else {
    ps::TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.iterations_per_epoch = opt.iterations;
    tc.validation_cases = 4;
    tc.rounds = 3;
    tc.seed = 3;
    const auto train_cases = ps::load_training_cases((work / "easy").string(), "train");
    const auto val_cases = ps::load_training_cases((work / "easy").string(), "val");
    const auto ts = std::chrono::steady_clock::now();
    const ps::TrainResult r =
        ps::train(train_cases, val_cases, ps::NetworkConfig::toy(), tc, ps::GuidanceConfig{}, nullptr,
                  [](const ps::EpochRecord & e) {
                    std::cerr << "  epoch " << e.epoch << " loss " << e.train_loss << " val_dsc " << e.val_dsc << "\n";
                  });
    train_minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count() / 60.0;
    weights = r.best;
    ps::save_weights(weights, (work / "toy.weights").string());
  }
  auto net = std::make_shared<const ps::ResidualUNet<float>>(weights.instantiate());
  auto pred = std::make_shared<const ps::NetworkPredictor>(net, weights.guidance, ps::inference_patch(weights));
  const auto cases = ps::load_benchmark_cases((work / "hard").string(), "val");

  const auto none = evaluate(pred, cases, std::nullopt, 1, weights.fingerprint());
  const auto point = evaluate(pred, cases, ps::PromptKind::point, 2, weights.fingerprint());
  const auto again = evaluate(pred, cases, ps::PromptKind::point, 2, weights.fingerprint());
  const std::string a = ps::report_json(point);
  const std::string b = ps::report_json(again);
  std::ofstream(work / "report_none.json") << ps::report_json(none);
  std::ofstream(work / "report_point.json") << a;
  std::ofstream(work / "table.txt") << ps::report_table({none, point});

  // headline point DSC is the final interaction round; the unprompted baseline has no prompts at all
  const double gain = 100.0 * (point.summary.dsc_mean - none.summary.dsc_mean);
  const double first_round_gain = 100.0 * (point.round_summaries[0].dsc_mean - none.summary.dsc_mean);
  const double r1 = point.round_summaries[0].dsc_mean;
  const double r2 = point.round_summaries[1].dsc_mean;
  o.check(train_minutes <= 30.0, "training budget");
  o.check(gain >= 5.0, "(a) point gain");
  o.check(r2 >= r1, "(b) round 2 >= round 1");
  o.check(a == b, "(c) byte-identical report");
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  o.detail << std::fixed << std::setprecision(2) << "none_dsc=" << 100.0 * none.summary.dsc_mean
           << " point_r1=" << 100.0 * r1 << " point_r2=" << 100.0 * r2 << " gain=" << gain
           << " first_round_gain=" << first_round_gain
           << " train_min=" << train_minutes << " total_min=" << total;
}

// ---------------------------------------------------------------------------

void service_contract(Outcome & o, const Options & opt)
{
  ps::NetworkConfig nc = ps::NetworkConfig::toy();
  ps::Rng init(9);
  auto net = std::make_shared<const ps::ResidualUNet<float>>(ps::build_network(nc, init));
  ps::ServerConfig cfg;
  cfg.port = 0;
  ps::SegmentationServer server(std::make_shared<ps::NetworkPredictor>(net, ps::GuidanceConfig{}, 32), cfg);
  server.start();
  httplib::Client cli("127.0.0.1", server.port());
  cli.set_read_timeout(120);

  ps::PhantomConfig pc = ps::PhantomConfig::easy(40);
  ps::Rng rng(31);
  ps::Phantom ph = ps::generate_phantom(pc, rng);
  ph.image.geometry.spacing = {1.2, 0.9, 1.0};
  ph.image.geometry.origin = {-5.0, 3.0, 7.5};
  const std::string upload = ps::encode_volume(ph.image, true);
  std::ofstream(fs::path(opt.workdir) / "service_upload.nii.gz", std::ios::binary) << upload;

  auto create = [&]() {
    auto r = cli.Post("/v1/sessions", upload, "application/octet-stream");
    if (!r || r->status != 200) {
      throw std::runtime_error("session creation failed");
    }
    return nlohmann::json::parse(r->body);
  };
  const auto created = create();
  const std::string base = "/v1/sessions/" + created.at("session_id").get<std::string>();
  const auto shape = created.at("shape").get<std::vector<int>>();
  const int zc = shape[0] / 2;
  const int yc = shape[1] / 2;
  const int xc = shape[2] / 2;

  const std::vector<nlohmann::json> prompts{
      {{"kind", "point"}, {"polarity", "positive"}, {"center", {zc, yc, xc}}, {"radius", 2}},
      {{"kind", "box"}, {"polarity", "positive"}, {"slice", zc}, {"min", {yc - 6, xc - 6}}, {"max", {yc + 6, xc + 6}}},
      {{"kind", "lasso"},
       {"polarity", "negative"},
       {"slice", zc + 2},
       {"vertices", {{yc - 4, xc - 4}, {yc - 4, xc + 4}, {yc + 4, xc + 4}, {yc + 4, xc - 4}}}},
      {{"kind", "scribble"},
       {"polarity", "positive"},
       {"slice", zc - 1},
       {"vertices", {{yc - 3, xc - 5}, {yc + 2, xc + 5}}},
       {"thickness", 2}}};

  bool rle_ok = true;
  std::string final_runs;
  for (const auto & p : prompts) {
    auto r = cli.Post((base + "/prompts").c_str(), p.dump(), "application/json");
    o.check(r && r->status == 200, "post " + p["kind"].get<std::string>());
    auto m = cli.Get((base + "/mask").c_str());
    if (!m || m->status != 200) {
      rle_ok = false;
      continue;
    }
    const auto j = nlohmann::json::parse(m->body);
    const ps::RunLength rle = ps::rle_from_json(j);
    const ps::BinaryMask decoded = ps::decode_rle(rle);
    rle_ok = rle_ok && ps::encode_rle(decoded) == rle &&
             std::vector<int>(decoded.shape().begin(), decoded.shape().end()) == shape;
    final_runs = j.at("runs").dump();
  }
  o.check(rle_ok, "RLE round trip");

  auto exp = cli.Get((base + "/export").c_str());
  bool export_ok = exp && exp->status == 200;
  if (export_ok) {
    const ps::BinaryMask mask =
        ps::decode_mask(std::span(reinterpret_cast<const std::uint8_t *>(exp->body.data()), exp->body.size()));
    const auto & g = mask.geometry;
    const auto & h = ph.image.geometry;
    export_ok = g.shape == h.shape;
    for (int k = 0; k < 3; ++k) {
      export_ok = export_ok && std::abs(g.spacing[static_cast<std::size_t>(k)] - h.spacing[static_cast<std::size_t>(k)]) < 1e-5 &&
                  std::abs(g.origin[static_cast<std::size_t>(k)] - h.origin[static_cast<std::size_t>(k)]) < 1e-4;
    }
  }
  o.check(export_ok, "export geometry");

  const auto transcript = nlohmann::json::parse(cli.Get((base + "/transcript").c_str())->body);
  int round = static_cast<int>(prompts.size());
  while (round > 0) {
    auto r = cli.Post((base + "/undo").c_str(), "", "application/json");
    if (!r || r->status != 200) {
      break;
    }
    round = nlohmann::json::parse(r->body).at("round");
  }
  o.check(round == 0, "undo to round 0");
  o.check(cli.Get((base + "/mask").c_str())->status == 409, "no mask at round 0");

  // replay on a fresh session, one request per recorded round
  const std::string replay = "/v1/sessions/" + create().at("session_id").get<std::string>();
  std::size_t next = 0;
  for (const auto & size : transcript.at("round_sizes")) {
    nlohmann::json batch = nlohmann::json::array();
    for (int i = 0; i < size.get<int>(); ++i) {
      batch.push_back(transcript.at("prompts").at(next++));
    }
    cli.Post((replay + "/prompts").c_str(), batch.dump(), "application/json");
  }
  auto rm = cli.Get((replay + "/mask").c_str());
  const bool replay_ok = rm && rm->status == 200 && nlohmann::json::parse(rm->body).at("runs").dump() == final_runs;
  o.check(replay_ok, "replay RLE identical");
  server.stop();
  o.detail << "rounds=" << prompts.size() << " rle_bytes=" << final_runs.size();
}

}  // namespace

int main(int argc, char ** argv)
{
  Options opt;
  std::vector<int> only;
  std::vector<int> tolerated;
  std::string report_path;
  CLI::App app{"Acceptance checks"};
  app.add_option("--workdir", opt.workdir, "Scratch directory");
  app.add_option("--weights", opt.weights, "Reuse trained weights for the end-to-end check");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--epochs", opt.epochs, "Training epochs for the end-to-end check");
  app.add_option("--iterations", opt.iterations, "Iterations per epoch for the end-to-end check");
  app.add_option("--tolerate", tolerated, "Criteria whose failure is reported but does not set the exit status");
  app.add_option("--report", report_path, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> tolerate(tolerated.begin(), tolerated.end());
  opt.only.insert(only.begin(), only.end());
  fs::create_directories(opt.workdir);

  struct Criterion
  {
    int id;
    const char * name;
    double budget_s;
    std::function<void(Outcome &)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", 5.0, metric_oracle},
      {2, "prompt simulation validity", 60.0, prompt_validity},
      {3, "guidance encoding contract", 10.0, encoding_contract},
      {4, "gradient check", 60.0, gradient_check},
      {5, "toy end-to-end", 0.0, [&](Outcome & o) { toy_end_to_end(o, opt); }},
      {6, "preprocessing invariants", 30.0, preprocessing_invariants},
      {7, "service contract", 60.0, [&](Outcome & o) { service_contract(o, opt); }},
  };

  std::ofstream report;
  if (!report_path.empty()) {
    report.open(report_path);
  }
  int failures = 0;
  for (const auto & c : criteria) {
    if (!opt.only.empty() && opt.only.count(c.id) == 0) {
      continue;
    }
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception & e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0) {
      o.check(secs < c.budget_s, "runtime budget");
    }
    const bool tolerated_fail = !o.pass && tolerate.count(c.id) > 0;
    failures += (o.pass || tolerated_fail) ? 0 : 1;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.name << "  (" << std::fixed
         << std::setprecision(2) << secs << " s)  " << o.detail.str() << (tolerated_fail ? "  [known failure, tolerated]" : "");
    std::cout << line.str() << std::endl;
    if (report.is_open()) {
      report << line.str() << std::endl;
    }
  }
  return failures == 0 ? 0 : 1;
}
