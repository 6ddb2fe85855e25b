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

#include "promptseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace promptseg
{
namespace
{

struct Ellipsoid
{
  Vec3 centre{};
  Vec3 radii{};
  std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};  // rows: local axes in index space
  std::array<double, 6> lobe_amp{};                       // spherical-harmonic-like surface terms
  std::array<double, 6> lobe_phase{};

  // Normalised radial coordinate; <= 1 means inside.
  double level(double z, double y, double x) const
  {
    const double d[3] = {z - centre[0], y - centre[1], x - centre[2]};
    double l[3];
    for (int r = 0; r < 3; ++r) {
      l[r] = (rot[r * 3] * d[0] + rot[r * 3 + 1] * d[1] + rot[r * 3 + 2] * d[2]) / radii[r];
    }
    const double rho = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
    if (rho == 0.0) {
      return 0.0;
    }
    const double theta = std::acos(std::clamp(l[0] / rho, -1.0, 1.0));
    const double phi = std::atan2(l[1], l[2]);
    double bump = 0.0;
    for (int k = 0; k < 3; ++k) {
      bump += lobe_amp[k] * std::cos((k + 2) * phi + lobe_phase[k]);
      bump += lobe_amp[k + 3] * std::cos((k + 2) * theta + lobe_phase[k + 3]);
    }
    return rho / std::max(0.3, 1.0 + bump);
  }

  double max_radius(double lobulation) const
  {
    return *std::max_element(radii.begin(), radii.end()) * (1.0 + 2.0 * 3.0 * lobulation);
  }
};

std::array<double, 9> random_rotation(Rng & rng)
{
  // uniform quaternion
  const double u1 = rng.uniform();
  const double u2 = rng.uniform() * 2.0 * std::numbers::pi;
  const double u3 = rng.uniform() * 2.0 * std::numbers::pi;
  const double a = std::sqrt(1 - u1) * std::sin(u2);
  const double b = std::sqrt(1 - u1) * std::cos(u2);
  const double c = std::sqrt(u1) * std::sin(u3);
  const double d = std::sqrt(u1) * std::cos(u3);
  return {a * a + b * b - c * c - d * d, 2 * (b * c - a * d),         2 * (b * d + a * c),
          2 * (b * c + a * d),         a * a - b * b + c * c - d * d, 2 * (c * d - a * b),
          2 * (b * d - a * c),         2 * (c * d + a * b),         a * a - b * b - c * c + d * d};
}

std::string case_id(int index)
{
  std::ostringstream os;
  os << "case_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

PhantomConfig PhantomConfig::easy(int size)
{
  PhantomConfig c;
  c.shape = {size, size, size};
  // radii are specified for a 64-voxel grid
  const double f = std::min(1.0, size / 64.0);
  c.radius_min = std::max(1.5, c.radius_min * f);
  c.radius_max = std::max(c.radius_min + 0.5, c.radius_max * f);
  return c;
}

PhantomConfig PhantomConfig::hard(int size)
{
  PhantomConfig c = easy(size);
  c.noise_sigma = 0.1;
  c.brain_variation = 0.15;
  c.contrast_min = 0.25;
  c.contrast_max = 0.45;
  c.rim_probability = 0.2;
  c.lobulation = 0.12;
  return c;
}

PhantomConfig PhantomConfig::preset(const std::string & name, int size)
{
  if (name == "easy") {
    return easy(size);
  }
  if (name == "hard") {
    return hard(size);
  }
  throw InvalidArgument("unknown phantom preset '" + name + "' (expected easy or hard)");
}

void PhantomConfig::validate() const
{
  for (int s : shape) {
    if (s < 8) {
      throw InvalidArgument("phantom grid must be at least 8 voxels per axis");
    }
  }
  if (tumor_count_min < 1 || tumor_count_max < tumor_count_min) {
    throw InvalidArgument("tumour count range must be non-empty and >= 1");
  }
  if (radius_min < 1.0 || radius_max < radius_min) {
    throw InvalidArgument("tumour radius range must be non-empty and >= 1");
  }
  const int smallest = *std::min_element(shape.begin(), shape.end());
  if (2.0 * radius_max * (1.0 + lobulation) + 4.0 > 2.0 * head_fraction * smallest) {
    throw InvalidArgument("tumour radii do not fit inside the head");
  }
  if (!(contrast_min > noise_sigma)) {
    throw InvalidArgument("tumour contrast must exceed the noise level");
  }
}

Phantom generate_phantom(const PhantomConfig & cfg, Rng & rng)
{
  cfg.validate();
  const Shape3 s = cfg.shape;
  Phantom out;
  out.image = ImageVolume(Geometry::with_shape(s));
  out.mask = BinaryMask(Geometry::with_shape(s));

  Ellipsoid head;
  for (int k = 0; k < 3; ++k) {
    head.centre[k] = (s[k] - 1) / 2.0 + rng.uniform(-1.0, 1.0);
    head.radii[k] = cfg.head_fraction * s[k] * rng.uniform(0.95, 1.0);
  }
  // smooth inhomogeneity: a few low-frequency cosines
  std::array<Vec3, 3> freq{};
  std::array<double, 3> phase{};
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      freq[i][k] = rng.uniform(-1.0, 1.0) * std::numbers::pi / s[k];
    }
    phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  auto brain = [&](int z, int y, int x) {
    double v = 0.0;
    for (int i = 0; i < 3; ++i) {
      v += std::cos(freq[i][0] * z + freq[i][1] * y + freq[i][2] * x + phase[i]);
    }
    return cfg.brain_intensity + cfg.brain_variation * v / 3.0;
  };

  const int total_voxels = static_cast<int>(voxel_count(s));
  const int count = static_cast<int>(rng.uniform_int(cfg.tumor_count_min, cfg.tumor_count_max));
  std::vector<Ellipsoid> tumors;
  std::vector<double> contrast;
  std::vector<bool> rim;
  std::vector<int> owner(voxel_count(s), -1);
  double volume_budget = cfg.max_tumor_fraction * total_voxels;
  for (int t = 0; t < count; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Ellipsoid e;
      for (int k = 0; k < 3; ++k) {
        e.radii[k] = rng.uniform(cfg.radius_min, cfg.radius_max);
      }
      const double nominal = 4.0 / 3.0 * std::numbers::pi * e.radii[0] * e.radii[1] * e.radii[2];
      if (nominal * (1.0 + cfg.lobulation) * (1.0 + cfg.lobulation) * (1.0 + cfg.lobulation) > volume_budget) {
        continue;
      }
      e.rot = random_rotation(rng);
      for (int k = 0; k < 6; ++k) {
        e.lobe_amp[k] = cfg.lobulation * rng.uniform(-1.0, 1.0);
        e.lobe_phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      const double reach = e.max_radius(cfg.lobulation);
      for (int k = 0; k < 3; ++k) {
        e.centre[k] = head.centre[k] + rng.uniform(-1.0, 1.0) * std::max(0.0, head.radii[k] - reach - 2.0);
      }
      // rasterise into a scratch list and check containment / separation
      std::vector<std::size_t> voxels;
      bool ok = true;
      const int r = static_cast<int>(std::ceil(reach)) + 1;
      for (int z = std::max(0, static_cast<int>(e.centre[0]) - r); ok && z <= std::min(s[0] - 1, static_cast<int>(e.centre[0]) + r); ++z) {
        for (int y = std::max(0, static_cast<int>(e.centre[1]) - r); ok && y <= std::min(s[1] - 1, static_cast<int>(e.centre[1]) + r); ++y) {
          for (int x = std::max(0, static_cast<int>(e.centre[2]) - r); x <= std::min(s[2] - 1, static_cast<int>(e.centre[2]) + r); ++x) {
            if (e.level(z, y, x) > 1.0) {
              continue;
            }
            if (head.level(z, y, x) > 0.9) {
              ok = false;
              break;
            }
            // keep a one-voxel gap so tumours stay separate components
            for (int dz = -1; dz <= 1 && ok; ++dz) {
              for (int dy = -1; dy <= 1 && ok; ++dy) {
                for (int dx = -1; dx <= 1 && ok; ++dx) {
                  const Voxel n{z + dz, y + dy, x + dx};
                  if (out.mask.geometry.contains(n) && owner[out.mask.geometry.offset(n)] >= 0) {
                    ok = false;
                  }
                }
              }
            }
            voxels.push_back(out.mask.geometry.offset(z, y, x));
          }
        }
      }
      if (!ok || voxels.size() < 8 || static_cast<double>(voxels.size()) > volume_budget) {
        continue;
      }
      for (std::size_t off : voxels) {
        owner[off] = t;
        out.mask.data[off] = 1;
      }
      volume_budget -= static_cast<double>(voxels.size());
      tumors.push_back(e);
      contrast.push_back(rng.uniform(cfg.contrast_min, cfg.contrast_max));
      rim.push_back(rng.bernoulli(cfg.rim_probability));
      placed = true;
    }
    if (!placed) {
      if (t == 0) {
        throw InvalidArgument("infeasible phantom: could not place a tumour after bounded retries");
      }
      break;
    }
  }
  out.tumor_count = static_cast<int>(tumors.size());

  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        if (head.level(z, y, x) > 1.0) {
          out.image.at(z, y, x) = 0.0F;
          continue;
        }
        double v = brain(z, y, x);
        const int t = owner[out.mask.geometry.offset(z, y, x)];
        if (t >= 0) {
          v += contrast[t];
          if (rim[t]) {
            // radial depth below the surface in voxels (approximate)
            const double depth = (1.0 - tumors[t].level(z, y, x)) * *std::min_element(tumors[t].radii.begin(), tumors[t].radii.end());
            if (depth < cfg.rim_width) {
              v += 0.5 * contrast[t];
            }
          }
        }
        if (cfg.noise_sigma > 0.0) {
          v += rng.normal(0.0, cfg.noise_sigma);
        }
        // keep the head strictly above the zero background
        out.image.at(z, y, x) = static_cast<float>(std::max(v, 1e-3));
      }
    }
  }
  return out;
}

std::vector<CaseEntry> Manifest::split(const std::string & name) const
{
  std::vector<CaseEntry> out;
  std::copy_if(cases.begin(), cases.end(), std::back_inserter(out), [&](const CaseEntry & c) { return c.split == name; });
  return out;
}

nlohmann::json to_json(const Manifest & m)
{
  nlohmann::ordered_json j;
  j["preset"] = m.preset;
  j["seed"] = m.seed;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto & c : m.cases) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["split"] = c.split;
    e["image"] = c.image;
    e["label"] = c.label;
    e["seed"] = c.seed;
    j["cases"].push_back(e);
  }
  return nlohmann::json::parse(j.dump());
}

Manifest manifest_from_json(const nlohmann::json & j)
{
  Manifest m;
  m.preset = j.value("preset", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto & e : j.at("cases")) {
    m.cases.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(), e.at("image").get<std::string>(),
                       e.at("label").get<std::string>(), e.value("seed", std::uint64_t{0})});
  }
  return m;
}

Manifest load_manifest(const std::string & dir)
{
  const auto path = std::filesystem::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception & e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Manifest generate_dataset(const PhantomConfig & cfg, const std::string & preset_name, int n_train, int n_val,
                          std::uint64_t seed, const std::string & out_dir)
{
  if (n_train < 0 || n_val < 0) {
    throw InvalidArgument("case counts must be >= 0");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create " + out_dir + ": " + ec.message());
  }
  Manifest m;
  m.preset = preset_name;
  m.seed = seed;
  for (int i = 0; i < n_train + n_val; ++i) {
    CaseEntry c;
    c.id = case_id(i);
    c.split = i < n_train ? "train" : "val";
    c.image = c.id + "_img.nii.gz";
    c.label = c.id + "_gt.nii.gz";
    c.seed = fnv1a64(c.id, seed ^ 0x5EEDULL);
    Rng rng(c.seed);
    const Phantom p = generate_phantom(cfg, rng);
    save_volume(p.image, (std::filesystem::path(out_dir) / c.image).string());
    save_volume(p.mask, (std::filesystem::path(out_dir) / c.label).string());
    m.cases.push_back(c);
  }
  std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
  out << nlohmann::ordered_json::parse(to_json(m).dump()).dump(2) << "\n";
  if (!out) {
    throw IoError("cannot write manifest in " + out_dir);
  }
  return m;
}

int count_components(const BinaryMask & mask)
{
  const Shape3 & s = mask.shape();
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  int comps = 0;
  std::vector<Voxel> stack;
  for (int z = 0; z < s[0]; ++z) {
    for (int y = 0; y < s[1]; ++y) {
      for (int x = 0; x < s[2]; ++x) {
        const std::size_t off = mask.geometry.offset(z, y, x);
        if (!mask.data[off] || seen[off]) {
          continue;
        }
        ++comps;
        seen[off] = 1;
        stack.push_back({z, y, x});
        while (!stack.empty()) {
          const Voxel v = stack.back();
          stack.pop_back();
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const Voxel n{v.z + dz, v.y + dy, v.x + dx};
                if (!mask.geometry.contains(n)) {
                  continue;
                }
                const std::size_t o = mask.geometry.offset(n);
                if (mask.data[o] && !seen[o]) {
                  seen[o] = 1;
                  stack.push_back(n);
                }
              }
            }
          }
        }
      }
    }
  }
  return comps;
}

}  // namespace promptseg
