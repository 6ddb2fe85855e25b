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

#include "promptseg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "promptseg/session.hpp"
#include "promptseg/synthgen.hpp"

namespace promptseg
{
namespace
{

struct Counts
{
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t both = 0;
};

Counts overlap(const BinaryMask & a, const BinaryMask & b)
{
  if (a.shape() != b.shape()) {
    throw InvalidArgument("metric inputs have different shapes");
  }
  Counts c;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0;
    const bool y = b.data[i] != 0;
    c.a += x;
    c.b += y;
    c.both += x && y;
  }
  return c;
}

}  // namespace

double dice(const BinaryMask & a, const BinaryMask & b)
{
  const Counts c = overlap(a, b);
  if (c.a + c.b == 0) {
    return 1.0;
  }
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double iou(const BinaryMask & a, const BinaryMask & b)
{
  const Counts c = overlap(a, b);
  const std::size_t uni = c.a + c.b - c.both;
  if (uni == 0) {
    return 1.0;
  }
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

SummaryStats summarize(const std::vector<RoundScore> & scores)
{
  SummaryStats s;
  const auto n = static_cast<double>(scores.size());
  if (scores.empty()) {
    return s;
  }
  for (const auto & r : scores) {
    s.dsc_mean += r.dsc;
    s.iou_mean += r.iou;
  }
  s.dsc_mean /= n;
  s.iou_mean /= n;
  if (scores.size() > 1) {
    for (const auto & r : scores) {
      s.dsc_sd += (r.dsc - s.dsc_mean) * (r.dsc - s.dsc_mean);
      s.iou_sd += (r.iou - s.iou_mean) * (r.iou - s.iou_mean);
    }
    s.dsc_sd = std::sqrt(s.dsc_sd / (n - 1.0));
    s.iou_sd = std::sqrt(s.iou_sd / (n - 1.0));
  }
  return s;
}

namespace
{

nlohmann::ordered_json summary_json(const SummaryStats & s)
{
  nlohmann::ordered_json j;
  j["dsc_mean"] = s.dsc_mean;
  j["dsc_sd"] = s.dsc_sd;
  j["iou_mean"] = s.iou_mean;
  j["iou_sd"] = s.iou_sd;
  return j;
}

std::string pretty_prompt(const std::string & name)
{
  if (name == "none") {
    return "None";
  }
  if (name == "box") {
    return "BBox";
  }
  std::string s = name;
  if (!s.empty()) {
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  }
  return s;
}

std::string pm(double mean, double sd)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f\xC2\xB1%.1f", 100.0 * mean, 100.0 * sd);
  return buf;
}

}  // namespace

std::string report_json(const BenchmarkReport & r)
{
  nlohmann::ordered_json j;
  j["prompt_type"] = r.prompt_type;
  j["method"] = r.method;
  j["rounds"] = r.rounds;
  j["seed"] = r.seed;
  j["fingerprint"] = r.fingerprint;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto & c : r.cases) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["dsc"] = c.dsc;
    e["iou"] = c.iou;
    e["per_round"] = nlohmann::ordered_json::array();
    for (const auto & s : c.per_round) {
      e["per_round"].push_back(nlohmann::ordered_json{{"dsc", s.dsc}, {"iou", s.iou}});
    }
    j["cases"].push_back(e);
  }
  j["summary"] = summary_json(r.summary);
  j["round_summaries"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.round_summaries.size(); ++i) {
    auto s = summary_json(r.round_summaries[i]);
    nlohmann::ordered_json e;
    e["round"] = i + 1;
    for (auto & [k, v] : s.items()) {
      e[k] = v;
    }
    j["round_summaries"].push_back(e);
  }
  return j.dump(2) + "\n";
}

std::string report_table(const std::vector<BenchmarkReport> & reports)
{
  std::vector<std::array<std::string, 4>> rows{{"Prompt", "Method", "DSC", "IoU"}};
  for (const auto & r : reports) {
    std::string prompt = pretty_prompt(r.prompt_type);
    if (r.rounds > 1) {
      prompt += " (" + std::to_string(r.rounds) + " rounds)";
    }
    rows.push_back({prompt, r.method, pm(r.summary.dsc_mean, r.summary.dsc_sd), pm(r.summary.iou_mean, r.summary.iou_sd)});
  }
  // the plus-minus sign is two bytes but one column
  auto width = [](const std::string & s) {
    return static_cast<int>(s.size()) - static_cast<int>(std::count(s.begin(), s.end(), '\xC2'));
  };
  std::array<int, 4> w{};
  for (const auto & row : rows) {
    for (int k = 0; k < 4; ++k) {
      w[k] = std::max(w[k], width(row[k]));
    }
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      os << rows[i][k];
      if (k < 3) {
        os << std::string(static_cast<std::size_t>(w[k] - width(rows[i][k]) + 2), ' ');
      }
    }
    os << "\n";
    if (i == 0) {
      os << std::string(static_cast<std::size_t>(w[0] + w[1] + w[2] + w[3] + 6), '-') << "\n";
    }
  }
  return os.str();
}

std::vector<BenchmarkCase> load_benchmark_cases(const std::string & dir, const std::string & split)
{
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("dataset directory does not exist: " + dir);
  }
  const Manifest m = load_manifest(dir);
  std::vector<BenchmarkCase> out;
  for (const auto & c : m.split(split)) {
    const auto label = std::filesystem::path(dir) / c.label;
    if (c.label.empty() || !std::filesystem::exists(label)) {
      throw IoError("case " + c.id + " has no ground truth");
    }
    out.push_back({c.id, load_volume((std::filesystem::path(dir) / c.image).string()), load_mask(label.string())});
  }
  return out;
}

std::optional<PromptKind> parse_benchmark_prompt(const std::string & name)
{
  if (name == "none") {
    return std::nullopt;
  }
  return parse_prompt_kind(name);
}

std::string benchmark_prompt_name(const std::optional<PromptKind> & kind)
{
  return kind ? std::string(to_string(*kind)) : std::string("none");
}

BenchmarkReport run_benchmark(const PredictorFactory & factory, const std::vector<BenchmarkCase> & cases,
                              const BenchmarkConfig & cfg)
{
  if (cfg.rounds < 1) {
    throw InvalidArgument("rounds must be >= 1");
  }
  std::vector<const BenchmarkCase *> order;
  for (const auto & c : cases) {
    order.push_back(&c);
  }
  std::sort(order.begin(), order.end(), [](const auto * a, const auto * b) { return a->id < b->id; });

  BenchmarkReport report;
  report.prompt_type = benchmark_prompt_name(cfg.prompt);
  report.method = cfg.method;
  report.rounds = cfg.rounds;
  report.seed = cfg.seed;
  report.fingerprint = cfg.fingerprint;
  std::vector<std::vector<RoundScore>> by_round(static_cast<std::size_t>(cfg.rounds));

  for (const BenchmarkCase * bc : order) {
    if (bc->gt.data.empty() || bc->gt.shape() != bc->image.shape()) {
      throw InvalidArgument("case " + bc->id + ": ground truth missing or mismatched");
    }
    PreparedImage prep = preprocess(bc->image, cfg.preprocess);
    const BinaryMask gt_pre = to_preprocessed(bc->gt, prep.record);
    std::shared_ptr<const Predictor> predictor = factory(gt_pre);
    Rng rng(fnv1a64(bc->id, cfg.seed));
    const GuidanceConfig guidance = predictor->guidance();

    SessionConfig scfg;
    scfg.seed = cfg.seed;
    SessionState state = create_session(std::move(prep.image), prep.record, predictor, scfg, bc->id);

    CaseResult result;
    result.id = bc->id;
    result.prompt_type = report.prompt_type;
    result.rounds = cfg.rounds;
    for (int r = 1; r <= cfg.rounds; ++r) {
      std::vector<Prompt> prompts;
      bool run = true;
      if (r == 1) {
        if (cfg.prompt && count_foreground(gt_pre) > 0) {
          prompts = simulate_prompts(*cfg.prompt, gt_pre, rng, guidance);
        }
      } else {
        const BinaryMask & cur = state.current()->mask;
        BinaryMask fn(cur.geometry);
        BinaryMask fp(cur.geometry);
        for (std::size_t i = 0; i < fn.data.size(); ++i) {
          fn.data[i] = gt_pre.data[i] && !cur.data[i];
          fp.data[i] = !gt_pre.data[i] && cur.data[i];
        }
        std::optional<Prompt> click = sample_corrective_point(fn, Polarity::positive, rng, guidance);
        if (!click && cfg.negative_corrections) {
          click = sample_corrective_point(fp, Polarity::negative, rng, guidance);
        }
        if (click) {
          prompts.push_back(*click);
        } else {
          run = false;  // nothing left to correct; keep the previous result
        }
      }
      if (run) {
        state = add_prompts(state, prompts).first;
      }
      const BinaryMask exported = to_original(state.current()->mask, prep.record);
      result.per_round.push_back({dice(exported, bc->gt), iou(exported, bc->gt)});
      by_round[static_cast<std::size_t>(r - 1)].push_back(result.per_round.back());
    }
    result.dsc = result.per_round.back().dsc;
    result.iou = result.per_round.back().iou;
    report.cases.push_back(std::move(result));
  }
  for (const auto & scores : by_round) {
    report.round_summaries.push_back(summarize(scores));
  }
  report.summary = report.round_summaries.back();
  return report;
}

// ---------------------------------------------------------------------------

namespace
{

void put_u32(std::string & out, std::uint32_t v)
{
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string & out, const char * type, const std::string & payload)
{
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  const std::string body = std::string(type, 4) + payload;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef *>(body.data()), static_cast<uInt>(body.size()))));
}

std::string encode_png(int width, int height, int channels, const std::vector<std::uint8_t> & pixels)
{
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels)) {
    throw InvalidArgument("png: pixel buffer does not match the image size");
  }
  std::string raw;
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  raw.reserve((row + 1) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char *>(pixels.data()) + y * row, row);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string z(len, '\0');
  if (compress2(reinterpret_cast<Bytef *>(z.data()), &len, reinterpret_cast<const Bytef *>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("png: deflate failed");
  }
  z.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                              // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);          // grayscale or RGB
  ihdr.append(std::string("\0\0\0", 3));          // compression, filter, interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace

std::string encode_png_gray(int width, int height, const std::vector<std::uint8_t> & pixels)
{
  return encode_png(width, height, 1, pixels);
}

std::string encode_png_rgb(int width, int height, const std::vector<std::uint8_t> & pixels)
{
  return encode_png(width, height, 3, pixels);
}

std::vector<std::uint8_t> window_slice(const ImageVolume & volume, int z, float lo, float hi)
{
  const Shape3 & s = volume.shape();
  if (z < 0 || z >= s[0]) {
    throw InvalidArgument("slice index " + std::to_string(z) + " out of range [0, " + std::to_string(s[0]) + ")");
  }
  if (!(hi > lo)) {
    throw InvalidArgument("window upper bound must exceed the lower bound");
  }
  std::vector<std::uint8_t> px(static_cast<std::size_t>(s[1]) * s[2]);
  const float scale = 255.0F / (hi - lo);
  for (int y = 0; y < s[1]; ++y) {
    for (int x = 0; x < s[2]; ++x) {
      const float v = (volume.at(z, y, x) - lo) * scale;
      px[static_cast<std::size_t>(y) * s[2] + x] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0F, 255.0F)));
    }
  }
  return px;
}

std::string render_overlay(const ImageVolume & volume, const BinaryMask & mask, const BinaryMask & gt, int z)
{
  const Shape3 & s = volume.shape();
  if (mask.shape() != s || gt.shape() != s) {
    throw InvalidArgument("overlay inputs have different shapes");
  }
  if (z < 0 || z >= s[0]) {
    throw InvalidArgument("slice index " + std::to_string(z) + " out of range");
  }
  float lo = volume.at(z, 0, 0);
  float hi = lo;
  for (int y = 0; y < s[1]; ++y) {
    for (int x = 0; x < s[2]; ++x) {
      lo = std::min(lo, volume.at(z, y, x));
      hi = std::max(hi, volume.at(z, y, x));
    }
  }
  const std::vector<std::uint8_t> gray = hi > lo ? window_slice(volume, z, lo, hi)
                                                 : std::vector<std::uint8_t>(static_cast<std::size_t>(s[1]) * s[2], 0);
  auto contour = [&](const BinaryMask & m, int y, int x) {
    if (!m.at(z, y, x)) {
      return false;
    }
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int yy = y + dy[k];
      const int xx = x + dx[k];
      if (yy < 0 || yy >= s[1] || xx < 0 || xx >= s[2] || !m.at(z, yy, xx)) {
        return true;
      }
    }
    return false;
  };
  std::vector<std::uint8_t> rgb(gray.size() * 3);
  for (int y = 0; y < s[1]; ++y) {
    for (int x = 0; x < s[2]; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * s[2] + x;
      std::uint8_t r = gray[i];
      std::uint8_t g = gray[i];
      std::uint8_t b = gray[i];
      const bool cp = contour(mask, y, x);
      const bool cg = contour(gt, y, x);
      if (cp || cg) {
        r = cp ? 255 : 0;
        g = cg ? 255 : 0;
        b = 0;
      }
      rgb[3 * i] = r;
      rgb[3 * i + 1] = g;
      rgb[3 * i + 2] = b;
    }
  }
  return encode_png_rgb(s[2], s[1], rgb);
}

void render_overlay(const ImageVolume & volume, const BinaryMask & mask, const BinaryMask & gt, int z,
                    const std::string & path)
{
  const std::string png = render_overlay(volume, mask, gt, z);
  std::ofstream out(path, std::ios::binary);
  out.write(png.data(), static_cast<std::streamsize>(png.size()));
  if (!out) {
    throw IoError("cannot write " + path);
  }
}

}  // namespace promptseg
