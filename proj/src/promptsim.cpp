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

#include "promptseg/promptsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "promptseg/promptsim_detail.hpp"

namespace promptseg
{
namespace
{

void require(bool ok, const char * message)
{
  if (!ok) {
    throw InvalidArgument(message);
  }
}

struct Plane
{
  int h = 0;
  int w = 0;
  std::span<const std::uint8_t> data;

  bool fg(Pixel p) const { return p.y >= 0 && p.x >= 0 && p.y < h && p.x < w && data[static_cast<std::size_t>(p.y) * w + p.x] != 0; }
};

Plane plane_of(const BinaryMask & mask, int z) { return {mask.shape()[1], mask.shape()[2], mask.slice(z)}; }

std::vector<Pixel> plane_foreground(const Plane & p)
{
  std::vector<Pixel> out;
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < p.w; ++x) {
      if (p.data[static_cast<std::size_t>(y) * p.w + x] != 0) {
        out.push_back({y, x});
      }
    }
  }
  return out;
}

// 8-connected component of `seed`, in row-major order.
std::vector<Pixel> component_of(const Plane & p, Pixel seed)
{
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(p.h) * p.w, 0);
  std::vector<Pixel> stack{seed};
  seen[static_cast<std::size_t>(seed.y) * p.w + seed.x] = 1;
  std::vector<Pixel> comp;
  while (!stack.empty()) {
    const Pixel c = stack.back();
    stack.pop_back();
    comp.push_back(c);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Pixel n{c.y + dy, c.x + dx};
        if (p.fg(n) && !seen[static_cast<std::size_t>(n.y) * p.w + n.x]) {
          seen[static_cast<std::size_t>(n.y) * p.w + n.x] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  std::sort(comp.begin(), comp.end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  return comp;
}

Pixel nearest_of(std::span<const Pixel> candidates, double y, double x)
{
  Pixel best = candidates.front();
  double best_d = std::numeric_limits<double>::max();
  for (Pixel c : candidates) {
    const double d = (c.y - y) * (c.y - y) + (c.x - x) * (c.x - x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

bool scribble_inside(const ScribblePrompt & sc, const Plane & plane)
{
  for (std::size_t i = 0; i + 1 < sc.vertices.size(); ++i) {
    for (Pixel p : line_pixels(sc.vertices[i], sc.vertices[i + 1])) {
      if (!plane.fg(p)) {
        return false;
      }
      if (sc.thickness >= 2) {
        for (Pixel q : {Pixel{p.y + 1, p.x}, Pixel{p.y, p.x + 1}, Pixel{p.y + 1, p.x + 1}}) {
          // neighbours falling off the grid are clipped by the rasteriser
          if (q.y < plane.h && q.x < plane.w && !plane.fg(q)) {
            return false;
          }
        }
      }
    }
  }
  return true;
}

std::vector<Pixel> dedupe_consecutive(std::vector<Pixel> v)
{
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Voxels whose 6-neighbourhood is entirely foreground.
std::vector<std::size_t> interior_voxels(const BinaryMask & mask)
{
  const Shape3 & s = mask.shape();
  std::vector<std::size_t> out;
  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        if (!mask.at(z, y, x)) {
          continue;
        }
        bool inner = true;
        const Voxel nb[6] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x}, {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
        for (const Voxel & n : nb) {
          if (!mask.geometry.contains(n) || !mask.at(n)) {
            inner = false;
            break;
          }
        }
        if (inner) {
          out.push_back(mask.geometry.offset(z, y, x));
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> foreground_offsets(const BinaryMask & mask)
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i]) {
      out.push_back(i);
    }
  }
  return out;
}

Voxel voxel_at(const Shape3 & s, std::size_t off)
{
  const auto plane = static_cast<std::size_t>(s[1]) * s[2];
  return {static_cast<int>(off / plane), static_cast<int>((off % plane) / s[2]), static_cast<int>(off % s[2])};
}

bool ball_inside(const BinaryMask & mask, const Voxel & c, int r)
{
  for (int dz = -r; dz <= r; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dz * dz + dy * dy + dx * dx > r * r) {
          continue;
        }
        const Voxel v{c.z + dz, c.y + dy, c.x + dx};
        if (!mask.geometry.contains(v) || !mask.at(v)) {
          return false;
        }
      }
    }
  }
  return true;
}

// Centre uniform over the interior when one exists; the radius shrinks until the stamp fits.
Prompt draw_point(const BinaryMask & region, const std::vector<std::size_t> & interior, const std::vector<std::size_t> & all,
                  Polarity polarity, Rng & rng, const GuidanceConfig & cfg)
{
  const auto & pool = interior.empty() ? all : interior;
  const Voxel c = voxel_at(region.shape(), pool[rng.index(pool.size())]);
  int r = static_cast<int>(rng.uniform_int(cfg.point_radius_min, cfg.point_radius_max));
  while (r > kMinPointRadius && !ball_inside(region, c, r)) {
    --r;
  }
  return Prompt{PointPrompt{c, r}, polarity};
}

}  // namespace

void GuidanceConfig::validate() const
{
  require(point_radius_min >= kMinPointRadius && point_radius_min <= point_radius_max &&
            point_radius_max <= kMaxPointRadius,
          "point radius range must lie in [1,5] and be non-empty");
  require(box_margin_min >= 0 && box_margin_min <= box_margin_max, "box margin range must be non-empty and >= 0");
  require(jitter >= 0 && wavy_amplitude >= 0 && wavy_frequency >= 0 && lasso_jitter >= 0,
          "jitter amplitudes must be >= 0");
}

nlohmann::json to_json(const GuidanceConfig & c)
{
  return {
    {"layout", c.layout == GuidanceLayout::shared ? "shared" : "per-type"},
    {"point_radius", {c.point_radius_min, c.point_radius_max}},
    {"box_margin", {c.box_margin_min, c.box_margin_max}},
    {"jitter", c.jitter},
    {"wavy_amplitude", c.wavy_amplitude},
    {"wavy_frequency", c.wavy_frequency},
    {"lasso_jitter", c.lasso_jitter},
  };
}

GuidanceConfig guidance_config_from_json(const nlohmann::json & j)
{
  GuidanceConfig c;
  if (j.contains("layout")) {
    const auto layout = j.at("layout").get<std::string>();
    if (layout == "shared") {
      c.layout = GuidanceLayout::shared;
    } else if (layout == "per-type" || layout == "per_type") {
      c.layout = GuidanceLayout::per_type;
    } else {
      throw InvalidArgument("unknown guidance layout '" + layout + "'");
    }
  }
  if (j.contains("point_radius")) {
    c.point_radius_min = j.at("point_radius").at(0).get<int>();
    c.point_radius_max = j.at("point_radius").at(1).get<int>();
  }
  if (j.contains("box_margin")) {
    c.box_margin_min = j.at("box_margin").at(0).get<int>();
    c.box_margin_max = j.at("box_margin").at(1).get<int>();
  }
  c.jitter = j.value("jitter", c.jitter);
  c.wavy_amplitude = j.value("wavy_amplitude", c.wavy_amplitude);
  c.wavy_frequency = j.value("wavy_frequency", c.wavy_frequency);
  c.lasso_jitter = j.value("lasso_jitter", c.lasso_jitter);
  c.validate();
  return c;
}

std::vector<std::size_t> slice_areas(const BinaryMask & mask)
{
  const Shape3 & s = mask.shape();
  std::vector<std::size_t> areas(s[0], 0);
  for (int z = 0; z < s[0]; ++z) {
    for (std::uint8_t v : mask.slice(z)) {
      areas[z] += v != 0;
    }
  }
  return areas;
}

int select_slice_weighted(const BinaryMask & mask, Rng & rng)
{
  const auto areas = slice_areas(mask);
  std::size_t total = 0;
  for (auto a : areas) {
    total += a;
  }
  require(total > 0, "cannot select a slice from an empty mask");
  auto r = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
  for (std::size_t z = 0; z < areas.size(); ++z) {
    if (r < areas[z]) {
      return static_cast<int>(z);
    }
    r -= areas[z];
  }
  return static_cast<int>(areas.size()) - 1;
}

std::vector<Prompt> simulate_point_prompts(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg)
{
  const auto all = foreground_offsets(mask);
  require(!all.empty(), "cannot simulate point prompts on an empty mask");
  const auto interior = interior_voxels(mask);
  const int count = static_cast<int>(rng.uniform_int(1, 2));
  std::vector<Prompt> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(draw_point(mask, interior, all, Polarity::positive, rng, cfg));
  }
  return out;
}

Prompt simulate_box_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg)
{
  const int z = select_slice_weighted(mask, rng);
  const Plane plane = plane_of(mask, z);
  const auto fg = plane_foreground(plane);
  Pixel lo{plane.h, plane.w};
  Pixel hi{-1, -1};
  for (Pixel p : fg) {
    lo = {std::min(lo.y, p.y), std::min(lo.x, p.x)};
    hi = {std::max(hi.y, p.y), std::max(hi.x, p.x)};
  }
  // upper corner is exclusive
  hi = {hi.y + 1, hi.x + 1};
  auto margin = [&] { return static_cast<int>(rng.uniform_int(cfg.box_margin_min, cfg.box_margin_max)); };
  const Pixel base_min{lo.y - margin(), lo.x - margin()};
  const Pixel base_max{hi.y + margin(), hi.x + margin()};

  auto clamp_box = [&](Pixel mn, Pixel mx) {
    mn = {std::clamp(mn.y, 0, plane.h - 1), std::clamp(mn.x, 0, plane.w - 1)};
    mx = {std::clamp(mx.y, mn.y + 1, plane.h), std::clamp(mx.x, mn.x + 1, plane.w)};
    return BoxPrompt{z, mn, mx};
  };
  auto coverage = [&](const BoxPrompt & b) {
    std::size_t inside = 0;
    for (Pixel p : fg) {
      inside += p.y >= b.min.y && p.y < b.max.y && p.x >= b.min.x && p.x < b.max.x;
    }
    return static_cast<double>(inside) / static_cast<double>(fg.size());
  };
  auto jit = [&] {
    return static_cast<int>(std::lround(rng.uniform(-cfg.jitter, cfg.jitter)));
  };
  for (int attempt = 0; attempt < 10; ++attempt) {
    const BoxPrompt b = clamp_box({base_min.y + jit(), base_min.x + jit()}, {base_max.y + jit(), base_max.x + jit()});
    if (coverage(b) >= 0.9) {
      return Prompt{b, Polarity::positive};
    }
  }
  return Prompt{clamp_box(base_min, base_max), Polarity::positive};
}

Prompt simulate_scribble_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg)
{
  const auto areas = slice_areas(mask);
  std::size_t usable = 0;
  for (auto a : areas) {
    usable += a >= 2 ? a : 0;
  }
  require(usable > 0, "no slice has enough foreground for a scribble");
  for (int attempt = 0; attempt < 32; ++attempt) {
    const int z = select_slice_weighted(mask, rng);
    if (areas[z] < 2) {
      continue;
    }
    if (auto sc = detail::sample_scribble_on_slice(mask, z, rng, cfg)) {
      return Prompt{*sc, Polarity::positive};
    }
  }
  throw InvalidArgument("could not place a scribble inside the mask");
}

Prompt simulate_lasso_prompt(const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg)
{
  const auto areas = slice_areas(mask);
  require(std::any_of(areas.begin(), areas.end(), [](std::size_t a) { return a >= 4; }),
          "degenerate slice: no slice has a foreground area of at least 4 voxels");
  for (int attempt = 0; attempt < 32; ++attempt) {
    const int z = select_slice_weighted(mask, rng);
    if (areas[z] < 4) {
      continue;
    }
    const int n = static_cast<int>(rng.uniform_int(kMinLassoVertices, kMaxLassoVertices));
    if (auto l = detail::sample_lasso_on_slice(mask, z, n, rng, cfg)) {
      return Prompt{*l, Polarity::positive};
    }
  }
  throw InvalidArgument("degenerate slice: could not form a simple lasso polygon");
}

std::vector<Prompt> simulate_prompts(PromptKind kind, const BinaryMask & mask, Rng & rng, const GuidanceConfig & cfg)
{
  switch (kind) {
    case PromptKind::point: return simulate_point_prompts(mask, rng, cfg);
    case PromptKind::box: return {simulate_box_prompt(mask, rng, cfg)};
    case PromptKind::lasso: return {simulate_lasso_prompt(mask, rng, cfg)};
    case PromptKind::scribble: return {simulate_scribble_prompt(mask, rng, cfg)};
  }
  return {};
}

std::optional<Prompt> sample_corrective_point(const BinaryMask & region, Polarity polarity, Rng & rng, const GuidanceConfig & cfg)
{
  const auto all = foreground_offsets(region);
  if (all.empty()) {
    return std::nullopt;
  }
  return draw_point(region, interior_voxels(region), all, polarity, rng, cfg);
}

namespace detail
{

std::optional<ScribblePrompt> sample_scribble_on_slice(const BinaryMask & mask, int z, Rng & rng, const GuidanceConfig & cfg)
{
  const Plane plane = plane_of(mask, z);
  const auto fg = plane_foreground(plane);
  if (fg.size() < 2) {
    return std::nullopt;
  }
  const Pixel seed = fg[rng.index(fg.size())];
  const auto comp = component_of(plane, seed);
  if (comp.size() < 2) {
    return std::nullopt;
  }
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform_int(kMinScribbleVertices, kMaxScribbleVertices)), comp.size());
  // partial Fisher-Yates: k distinct control points in random visiting order
  std::vector<Pixel> pool = comp;
  std::vector<Pixel> control;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    control.push_back(pool[i]);
  }
  int thickness = static_cast<int>(rng.uniform_int(1, 2));

  auto try_accept = [&](std::vector<Pixel> verts) -> std::optional<ScribblePrompt> {
    verts = dedupe_consecutive(std::move(verts));
    if (verts.size() < kMinScribbleVertices) {
      return std::nullopt;
    }
    ScribblePrompt sc{z, verts, thickness};
    if (scribble_inside(sc, plane)) {
      return sc;
    }
    sc.thickness = 1;
    if (scribble_inside(sc, plane)) {
      return sc;
    }
    return std::nullopt;
  };

  // cumulative arc-length parameter for the sinusoidal offset
  std::vector<double> t(control.size(), 0.0);
  for (std::size_t i = 1; i < control.size(); ++i) {
    t[i] = t[i - 1] + std::hypot(control[i].y - control[i - 1].y, control[i].x - control[i - 1].x);
  }
  const double total = std::max(t.back(), 1.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<Pixel> verts;
    for (std::size_t i = 0; i < control.size(); ++i) {
      const Pixel a = control[i == 0 ? 0 : i - 1];
      const Pixel b = control[i + 1 < control.size() ? i + 1 : i];
      double ny = -(b.x - a.x);
      double nx = b.y - a.y;
      const double len = std::hypot(ny, nx);
      if (len > 0.0) {
        ny /= len;
        nx /= len;
      }
      const double wave = cfg.wavy_amplitude * std::sin(2.0 * std::numbers::pi * cfg.wavy_frequency * t[i] / total + phase);
      const double y = control[i].y + rng.uniform(-cfg.jitter, cfg.jitter) + wave * ny;
      const double x = control[i].x + rng.uniform(-cfg.jitter, cfg.jitter) + wave * nx;
      const Pixel r{static_cast<int>(std::lround(y)), static_cast<int>(std::lround(x))};
      verts.push_back(plane.fg(r) ? r : nearest_of(comp, y, x));
    }
    if (auto sc = try_accept(verts)) {
      return sc;
    }
  }
  if (auto sc = try_accept(control)) {
    return sc;
  }
  // greedy: keep control points reachable from the previous kept one by an inside segment
  std::vector<Pixel> kept{control.front()};
  for (std::size_t i = 1; i < control.size(); ++i) {
    if (try_accept({kept.back(), control[i]})) {
      kept.push_back(control[i]);
    }
  }
  if (auto sc = try_accept(kept)) {
    return sc;
  }
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const Pixel n{seed.y + dy, seed.x + dx};
      if ((dy != 0 || dx != 0) && plane.fg(n)) {
        thickness = 1;
        return ScribblePrompt{z, {seed, n}, 1};
      }
    }
  }
  return std::nullopt;
}

std::vector<Pixel> boundary_pixels(std::span<const Pixel> component, const BinaryMask & mask, int z)
{
  const Plane plane = plane_of(mask, z);
  std::vector<Pixel> out;
  for (Pixel p : component) {
    const Pixel nb[4] = {{p.y - 1, p.x}, {p.y + 1, p.x}, {p.y, p.x - 1}, {p.y, p.x + 1}};
    if (std::any_of(std::begin(nb), std::end(nb), [&](Pixel n) { return !plane.fg(n); })) {
      out.push_back(p);
    }
  }
  return out;
}

std::optional<LassoPrompt> sample_lasso_on_slice(const BinaryMask & mask, int z, int vertex_count, Rng & rng, const GuidanceConfig & cfg)
{
  const Plane plane = plane_of(mask, z);
  const auto fg = plane_foreground(plane);
  if (fg.size() < 4) {
    return std::nullopt;
  }
  const auto comp = component_of(plane, fg[rng.index(fg.size())]);
  if (comp.size() < 4) {
    return std::nullopt;
  }
  double cy = 0.0;
  double cx = 0.0;
  for (Pixel p : comp) {
    cy += p.y;
    cx += p.x;
  }
  cy /= static_cast<double>(comp.size());
  cx /= static_cast<double>(comp.size());
  const auto boundary = boundary_pixels(comp, mask, z);

  const double two_pi = 2.0 * std::numbers::pi;
  const double phase = rng.uniform(0.0, two_pi);
  const double sector = two_pi / vertex_count;
  std::vector<std::optional<Pixel>> best(vertex_count);
  std::vector<double> best_r(vertex_count, -1.0);
  for (Pixel p : boundary) {
    const double dy = p.y - cy;
    const double dx = p.x - cx;
    double a = std::atan2(dy, dx) - phase;
    a = std::fmod(a, two_pi);
    if (a < 0) {
      a += two_pi;
    }
    const int s = std::min(vertex_count - 1, static_cast<int>(a / sector));
    const double r = std::hypot(dy, dx);
    if (r > best_r[s]) {
      best_r[s] = r;
      best[s] = p;
    }
  }
  std::vector<Pixel> base;
  for (const auto & b : best) {
    if (b) {
      base.push_back(*b);
    }
  }
  auto valid = [&](const std::vector<Pixel> & v) {
    return v.size() >= kMinLassoVertices && v.size() <= kMaxLassoVertices && is_simple_polygon(v) && polygon_area2(v) != 0;
  };
  for (int attempt = 0; attempt < 10 && base.size() >= kMinLassoVertices; ++attempt) {
    std::vector<Pixel> v;
    for (Pixel p : base) {
      const double dy = p.y - cy;
      const double dx = p.x - cx;
      const double r = std::hypot(dy, dx);
      const double delta = rng.uniform(-cfg.lasso_jitter, cfg.lasso_jitter);
      const double scale = r > 0.0 ? (r + delta) / r : 1.0;
      v.push_back({std::clamp(static_cast<int>(std::lround(cy + dy * scale)), 0, plane.h - 1),
                   std::clamp(static_cast<int>(std::lround(cx + dx * scale)), 0, plane.w - 1)});
    }
    if (valid(v)) {
      return LassoPrompt{z, v};
    }
  }
  if (valid(base)) {
    return LassoPrompt{z, base};
  }
  // thin or collinear components: the component's bounding rectangle, grown to non-zero area
  int y0 = plane.h;
  int y1 = -1;
  int x0 = plane.w;
  int x1 = -1;
  for (Pixel p : comp) {
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
  }
  if (y0 == y1) {
    y0 > 0 ? --y0 : ++y1;
  }
  if (x0 == x1) {
    x0 > 0 ? --x0 : ++x1;
  }
  const std::vector<Pixel> rect{{y0, x0}, {y0, x1}, {y1, x1}, {y1, x0}};
  if (y1 < plane.h && x1 < plane.w && valid(rect)) {
    return LassoPrompt{z, rect};
  }
  return std::nullopt;
}

}  // namespace detail

int guidance_channel(const Prompt & prompt, GuidanceLayout layout)
{
  const int neg = prompt.polarity == Polarity::negative ? 1 : 0;
  if (layout == GuidanceLayout::shared) {
    return 2 + neg;
  }
  return 2 + 2 * static_cast<int>(prompt.kind()) + neg;
}

namespace
{

GuidanceStack encode_impl(std::span<const Prompt> prompts, const ImageVolume & image, std::span<const float> previous,
                          const GuidanceConfig & cfg)
{
  GuidanceStack st;
  st.shape = image.shape();
  st.channels = cfg.total_channels();
  const std::size_t n = voxel_count(st.shape);
  st.data.assign(n * static_cast<std::size_t>(st.channels), 0.0F);
  std::copy(image.data.begin(), image.data.end(), st.channel(0).begin());
  if (!previous.empty()) {
    std::copy(previous.begin(), previous.end(), st.channel(1).begin());
  }
  for (const Prompt & p : prompts) {
    stamp_prompt(p, st.shape, st.channel(guidance_channel(p, cfg.layout)));
  }
  return st;
}

}  // namespace

GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image, const GuidanceConfig & cfg)
{
  return encode_impl(prompts, image, {}, cfg);
}

GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image, const BinaryMask & previous,
                              const GuidanceConfig & cfg)
{
  if (previous.shape() != image.shape()) {
    throw InvalidArgument("previous segmentation shape does not match the image");
  }
  validate_mask(previous);
  std::vector<float> prev(previous.data.begin(), previous.data.end());
  return encode_impl(prompts, image, prev, cfg);
}

GuidanceStack encode_guidance(std::span<const Prompt> prompts, const ImageVolume & image,
                              const ProbabilityMap & previous, const GuidanceConfig & cfg)
{
  if (previous.shape() != image.shape()) {
    throw InvalidArgument("previous segmentation shape does not match the image");
  }
  if (std::any_of(previous.data.begin(), previous.data.end(), [](float v) { return !(v >= 0.0F && v <= 1.0F); })) {
    throw InvalidArgument("previous probability map must lie in [0,1]");
  }
  return encode_impl(prompts, image, previous.data, cfg);
}

}  // namespace promptseg
