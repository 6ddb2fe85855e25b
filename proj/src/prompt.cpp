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

#include "promptseg/prompt.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

namespace promptseg
{
namespace
{

template <class... Ts>
struct Overloaded : Ts...
{
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

long long cross(Pixel o, Pixel a, Pixel b)
{
  return static_cast<long long>(a.x - o.x) * (b.y - o.y) - static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

bool on_segment(Pixel p, Pixel a, Pixel b)
{
  return cross(a, b, p) == 0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

int sign(long long v) { return (v > 0) - (v < 0); }

bool segments_touch(Pixel p1, Pixel p2, Pixel q1, Pixel q2)
{
  const int d1 = sign(cross(q1, q2, p1));
  const int d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1));
  const int d4 = sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) {
    return true;
  }
  return (d1 == 0 && on_segment(p1, q1, q2)) || (d2 == 0 && on_segment(p2, q1, q2)) ||
         (d3 == 0 && on_segment(q1, p1, p2)) || (d4 == 0 && on_segment(q2, p1, p2));
}

bool pixel_in_plane(Pixel p, const Shape3 & s) { return p.y >= 0 && p.x >= 0 && p.y < s[1] && p.x < s[2]; }

void require(bool ok, const std::string & message)
{
  if (!ok) {
    throw InvalidArgument(message);
  }
}

void check_slice(int slice, const Shape3 & s) { require(slice >= 0 && slice < s[0], "prompt slice out of bounds"); }

// Calls fn(y, x) for every in-plane pixel covered by the 2D prompt footprint.
template <typename Fn>
void for_each_planar_pixel(const Prompt & prompt, const Shape3 & s, Fn && fn)
{
  std::visit(Overloaded{
               [&](const PointPrompt &) {},
               [&](const BoxPrompt & b) {
                 for (int y = std::max(0, b.min.y); y < std::min(s[1], b.max.y); ++y) {
                   for (int x = std::max(0, b.min.x); x < std::min(s[2], b.max.x); ++x) {
                     fn(y, x);
                   }
                 }
               },
               [&](const ScribblePrompt & sc) {
                 auto emit = [&](Pixel p) {
                   if (pixel_in_plane(p, s)) {
                     fn(p.y, p.x);
                   }
                   if (sc.thickness >= 2) {
                     for (Pixel q : {Pixel{p.y + 1, p.x}, Pixel{p.y, p.x + 1}, Pixel{p.y + 1, p.x + 1}}) {
                       if (pixel_in_plane(q, s)) {
                         fn(q.y, q.x);
                       }
                     }
                   }
                 };
                 if (sc.vertices.size() == 1) {
                   emit(sc.vertices.front());
                 }
                 for (std::size_t i = 0; i + 1 < sc.vertices.size(); ++i) {
                   for (Pixel p : line_pixels(sc.vertices[i], sc.vertices[i + 1])) {
                     emit(p);
                   }
                 }
               },
               [&](const LassoPrompt & l) {
                 if (l.vertices.empty()) {
                   return;
                 }
                 int y0 = s[1];
                 int y1 = -1;
                 int x0 = s[2];
                 int x1 = -1;
                 for (Pixel v : l.vertices) {
                   y0 = std::min(y0, v.y);
                   y1 = std::max(y1, v.y);
                   x0 = std::min(x0, v.x);
                   x1 = std::max(x1, v.x);
                 }
                 y0 = std::max(y0, 0);
                 x0 = std::max(x0, 0);
                 y1 = std::min(y1, s[1] - 1);
                 x1 = std::min(x1, s[2] - 1);
                 const std::size_t n = l.vertices.size();
                 for (int y = y0; y <= y1; ++y) {
                   for (int x = x0; x <= x1; ++x) {
                     const Pixel p{y, x};
                     bool inside = false;
                     bool boundary = false;
                     for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                       const Pixel a = l.vertices[i];
                       const Pixel b = l.vertices[j];
                       if (on_segment(p, a, b)) {
                         boundary = true;
                         break;
                       }
                       // even-odd crossing test with a ray towards +x, half-open in y
                       if ((a.y > y) != (b.y > y)) {
                         const double xc = a.x + static_cast<double>(y - a.y) * (b.x - a.x) / (b.y - a.y);
                         if (x < xc) {
                           inside = !inside;
                         }
                       }
                     }
                     if (boundary || inside) {
                       fn(y, x);
                     }
                   }
                 }
               },
             },
             prompt.shape);
}

int slice_of(const Prompt & prompt)
{
  return std::visit(Overloaded{
                      [](const PointPrompt & p) { return p.center.z; },
                      [](const auto & planar) { return planar.slice; },
                    },
                    prompt.shape);
}

nlohmann::json pixel_json(Pixel p) { return nlohmann::json::array({p.y, p.x}); }

Pixel pixel_from(const nlohmann::json & j, const char * field)
{
  require(j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer(),
          std::string("field '") + field + "' must be [y,x] integers");
  return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<Pixel> vertices_from(const nlohmann::json & j)
{
  require(j.is_array(), "field 'vertices' must be an array of [y,x]");
  std::vector<Pixel> out;
  for (const auto & v : j) {
    out.push_back(pixel_from(v, "vertices"));
  }
  return out;
}

int int_from(const nlohmann::json & j, const char * field)
{
  require(j.is_number_integer(), std::string("field '") + field + "' must be an integer");
  return j.get<int>();
}

}  // namespace

std::string_view to_string(PromptKind kind)
{
  switch (kind) {
    case PromptKind::point: return "point";
    case PromptKind::box: return "box";
    case PromptKind::lasso: return "lasso";
    case PromptKind::scribble: return "scribble";
  }
  return "unknown";
}

std::string_view to_string(Polarity polarity) { return polarity == Polarity::positive ? "positive" : "negative"; }

PromptKind parse_prompt_kind(std::string_view name)
{
  for (PromptKind k : kAllPromptKinds) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw InvalidArgument("unknown prompt kind '" + std::string(name) + "'");
}

std::vector<Pixel> line_pixels(Pixel a, Pixel b)
{
  std::vector<Pixel> out;
  const int dx = std::abs(b.x - a.x);
  const int dy = -std::abs(b.y - a.y);
  const int sx = a.x < b.x ? 1 : -1;
  const int sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  Pixel p = a;
  while (true) {
    out.push_back(p);
    if (p == b) {
      break;
    }
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      p.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      p.y += sy;
    }
  }
  return out;
}

long long polygon_area2(std::span<const Pixel> v)
{
  long long a = 0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    a += static_cast<long long>(v[j].x) * v[i].y - static_cast<long long>(v[i].x) * v[j].y;
  }
  return a;
}

bool is_simple_polygon(std::span<const Pixel> v)
{
  const std::size_t n = v.size();
  if (n < 3) {
    return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (v[i] == v[j]) {
        return false;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel a1 = v[i];
    const Pixel a2 = v[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Pixel b1 = v[j];
      const Pixel b2 = v[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // shared vertex only: the far endpoint of either edge must not lie on the other
        const Pixel shared = j == i + 1 ? a2 : a1;
        const Pixel a_far = shared == a1 ? a2 : a1;
        const Pixel b_far = shared == b1 ? b2 : b1;
        if (on_segment(a_far, b1, b2) || on_segment(b_far, a1, a2)) {
          return false;
        }
        if (cross(shared, a_far, b_far) == 0) {
          // collinear and pointing the same way means overlap
          const long long dot = static_cast<long long>(a_far.x - shared.x) * (b_far.x - shared.x) +
                                static_cast<long long>(a_far.y - shared.y) * (b_far.y - shared.y);
          if (dot > 0) {
            return false;
          }
        }
        continue;
      }
      if (segments_touch(a1, a2, b1, b2)) {
        return false;
      }
    }
  }
  return true;
}

void validate_prompt(const Prompt & prompt, const Shape3 & s)
{
  std::visit(Overloaded{
               [&](const PointPrompt & p) {
                 require(p.radius >= kMinPointRadius && p.radius <= kMaxPointRadius, "point radius must be in [1,5]");
                 require(p.center.z >= 0 && p.center.y >= 0 && p.center.x >= 0 && p.center.z < s[0] &&
                           p.center.y < s[1] && p.center.x < s[2],
                         "point center out of bounds");
               },
               [&](const BoxPrompt & b) {
                 check_slice(b.slice, s);
                 require(b.min.y < b.max.y && b.min.x < b.max.x, "box min must be < max on both axes");
                 require(b.min.y >= 0 && b.min.x >= 0 && b.max.y <= s[1] && b.max.x <= s[2], "box out of bounds");
               },
               [&](const ScribblePrompt & sc) {
                 check_slice(sc.slice, s);
                 require(sc.vertices.size() >= kMinScribbleVertices, "scribble needs at least 2 vertices");
                 require(sc.thickness == 1 || sc.thickness == 2, "scribble thickness must be 1 or 2");
                 for (std::size_t i = 0; i < sc.vertices.size(); ++i) {
                   require(pixel_in_plane(sc.vertices[i], s), "scribble vertex out of bounds");
                   require(i == 0 || sc.vertices[i] != sc.vertices[i - 1], "consecutive scribble vertices must differ");
                 }
               },
               [&](const LassoPrompt & l) {
                 check_slice(l.slice, s);
                 require(l.vertices.size() >= kMinLassoVertices && l.vertices.size() <= kMaxLassoVertices,
                         "lasso needs 4 to 12 vertices");
                 for (Pixel p : l.vertices) {
                   require(pixel_in_plane(p, s), "lasso vertex out of bounds");
                 }
                 require(is_simple_polygon(l.vertices), "lasso polygon must be simple");
                 require(polygon_area2(l.vertices) != 0, "lasso polygon must have positive area");
               },
             },
             prompt.shape);
}

nlohmann::json to_json(const Prompt & prompt)
{
  nlohmann::json j;
  j["kind"] = to_string(prompt.kind());
  j["polarity"] = to_string(prompt.polarity);
  std::visit(Overloaded{
               [&](const PointPrompt & p) {
                 j["center"] = {p.center.z, p.center.y, p.center.x};
                 j["radius"] = p.radius;
               },
               [&](const BoxPrompt & b) {
                 j["slice"] = b.slice;
                 j["min"] = pixel_json(b.min);
                 j["max"] = pixel_json(b.max);
               },
               [&](const ScribblePrompt & sc) {
                 j["slice"] = sc.slice;
                 j["vertices"] = nlohmann::json::array();
                 for (Pixel p : sc.vertices) {
                   j["vertices"].push_back(pixel_json(p));
                 }
                 j["thickness"] = sc.thickness;
               },
               [&](const LassoPrompt & l) {
                 j["slice"] = l.slice;
                 j["vertices"] = nlohmann::json::array();
                 for (Pixel p : l.vertices) {
                   j["vertices"].push_back(pixel_json(p));
                 }
               },
             },
             prompt.shape);
  return j;
}

Prompt prompt_from_json(const nlohmann::json & j)
{
  require(j.is_object(), "prompt must be a JSON object");
  require(j.contains("kind") && j["kind"].is_string(), "prompt field 'kind' missing");
  require(j.contains("polarity") && j["polarity"].is_string(), "prompt field 'polarity' missing");
  const PromptKind kind = parse_prompt_kind(j["kind"].get<std::string>());
  const std::string pol = j["polarity"].get<std::string>();
  require(pol == "positive" || pol == "negative", "polarity must be 'positive' or 'negative'");

  static const std::array<std::set<std::string>, 4> allowed{{
    {"kind", "polarity", "center", "radius"},
    {"kind", "polarity", "slice", "min", "max"},
    {"kind", "polarity", "slice", "vertices"},
    {"kind", "polarity", "slice", "vertices", "thickness"},
  }};
  const auto & keys = allowed[static_cast<std::size_t>(kind)];
  for (const auto & [key, value] : j.items()) {
    require(keys.count(key) != 0, "field '" + key + "' not allowed for kind " + std::string(to_string(kind)));
  }
  for (const auto & key : keys) {
    require(j.contains(key), "field '" + key + "' required for kind " + std::string(to_string(kind)));
  }

  Prompt p;
  p.polarity = pol == "positive" ? Polarity::positive : Polarity::negative;
  switch (kind) {
    case PromptKind::point: {
      const auto & c = j["center"];
      require(c.is_array() && c.size() == 3 && c[0].is_number_integer() && c[1].is_number_integer() &&
                c[2].is_number_integer(),
              "field 'center' must be [z,y,x] integers");
      p.shape = PointPrompt{{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()}, int_from(j["radius"], "radius")};
      break;
    }
    case PromptKind::box:
      p.shape = BoxPrompt{int_from(j["slice"], "slice"), pixel_from(j["min"], "min"), pixel_from(j["max"], "max")};
      break;
    case PromptKind::lasso: p.shape = LassoPrompt{int_from(j["slice"], "slice"), vertices_from(j["vertices"])}; break;
    case PromptKind::scribble:
      p.shape = ScribblePrompt{int_from(j["slice"], "slice"), vertices_from(j["vertices"]),
                               int_from(j["thickness"], "thickness")};
      break;
  }
  return p;
}

void stamp_prompt(const Prompt & prompt, const Shape3 & s, std::span<float> target)
{
  validate_prompt(prompt, s);
  const auto plane = static_cast<std::size_t>(s[1]) * s[2];
  if (const auto * pt = std::get_if<PointPrompt>(&prompt.shape)) {
    const int r = pt->radius;
    for (int dz = -r; dz <= r; ++dz) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dz * dz + dy * dy + dx * dx > r * r) {
            continue;
          }
          const Voxel v{pt->center.z + dz, pt->center.y + dy, pt->center.x + dx};
          if (v.z < 0 || v.y < 0 || v.x < 0 || v.z >= s[0] || v.y >= s[1] || v.x >= s[2]) {
            continue;
          }
          target[(static_cast<std::size_t>(v.z) * s[1] + v.y) * s[2] + v.x] = 1.0F;
        }
      }
    }
    return;
  }
  const std::size_t base = static_cast<std::size_t>(slice_of(prompt)) * plane;
  for_each_planar_pixel(prompt, s, [&](int y, int x) { target[base + static_cast<std::size_t>(y) * s[2] + x] = 1.0F; });
}

BinaryMask rasterize_prompt(const Prompt & prompt, const Geometry & geometry)
{
  std::vector<float> buf(geometry.size(), 0.0F);
  stamp_prompt(prompt, geometry.shape, buf);
  BinaryMask out(geometry);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out.data[i] = buf[i] > 0.0F ? 1 : 0;
  }
  return out;
}

}  // namespace promptseg
