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

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/model.hpp"
#include "promptseg/volgrid.hpp"

namespace promptseg
{

/// 2|a & b| / (|a| + |b|); 1 when both are empty.
double dice(const BinaryMask & a, const BinaryMask & b);
/// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask & a, const BinaryMask & b);

struct RoundScore
{
  double dsc = 0.0;
  double iou = 0.0;
};

struct CaseResult
{
  std::string id;
  std::string prompt_type;
  int rounds = 0;
  double dsc = 0.0;  ///< final round
  double iou = 0.0;
  std::vector<RoundScore> per_round;
};

struct SummaryStats
{
  double dsc_mean = 0.0;
  double dsc_sd = 0.0;
  double iou_mean = 0.0;
  double iou_sd = 0.0;
};

/// Mean and sample standard deviation (0 for a single case).
SummaryStats summarize(const std::vector<RoundScore> & scores);

struct BenchmarkReport
{
  std::string prompt_type;
  std::string method;
  int rounds = 1;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::vector<CaseResult> cases;
  SummaryStats summary;
  std::vector<SummaryStats> round_summaries;  ///< index r holds round r + 1
};

/// Stable key order; identical inputs give identical bytes.
std::string report_json(const BenchmarkReport & report);
/// Aligned rows in the order Prompt, Method, DSC, IoU (percent, mean +- SD).
std::string report_table(const std::vector<BenchmarkReport> & reports);

/// Original-geometry image and ground truth of one evaluation case.
struct BenchmarkCase
{
  std::string id;
  ImageVolume image;
  BinaryMask gt;
};

std::vector<BenchmarkCase> load_benchmark_cases(const std::string & dir, const std::string & split = "val");

struct BenchmarkConfig
{
  std::optional<PromptKind> prompt;  ///< nullopt: automatic baseline without prompts
  int rounds = 1;
  std::uint64_t seed = 0;
  bool negative_corrections = false;  ///< click false positives when no false negatives remain
  PreprocessConfig preprocess{};
  std::string method = "promptseg";
  std::string fingerprint;
};

/// "none", "point", "box", "lasso" or "scribble".
std::optional<PromptKind> parse_benchmark_prompt(const std::string & name);
std::string benchmark_prompt_name(const std::optional<PromptKind> & kind);

/// Gives the predictor for a case; receives the preprocessed ground truth so oracle
/// stubs can be built. Real models ignore it.
using PredictorFactory = std::function<std::shared_ptr<const Predictor>(const BinaryMask & preprocessed_gt)>;

/// Per case: preprocess, simulate prompts from the ground truth, run a session for
/// `rounds` rounds (each later round adds one corrective click), score in original geometry.
BenchmarkReport run_benchmark(const PredictorFactory & factory, const std::vector<BenchmarkCase> & cases,
                              const BenchmarkConfig & cfg);

// ---------------------------------------------------------------------------
// PNG output
// ---------------------------------------------------------------------------

std::string encode_png_gray(int width, int height, const std::vector<std::uint8_t> & pixels);
std::string encode_png_rgb(int width, int height, const std::vector<std::uint8_t> & pixels);

/// Axial slice linearly mapped from [lo, hi] to 0..255.
std::vector<std::uint8_t> window_slice(const ImageVolume & volume, int z, float lo, float hi);

/// Grayscale slice with prediction contours in red, ground truth in green and shared
/// contour pixels in yellow. Returns PNG bytes.
std::string render_overlay(const ImageVolume & volume, const BinaryMask & mask, const BinaryMask & gt, int z);
void render_overlay(const ImageVolume & volume, const BinaryMask & mask, const BinaryMask & gt, int z,
                    const std::string & path);

}  // namespace promptseg
