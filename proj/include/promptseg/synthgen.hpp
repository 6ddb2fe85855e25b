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

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseg/volgrid.hpp"

namespace promptseg
{

/// Parameters of the synthetic head-and-tumour phantoms.
struct PhantomConfig
{
  Shape3 shape{64, 64, 64};
  double head_fraction = 0.42;  ///< head ellipsoid semi-axis as a fraction of the grid size
  double brain_intensity = 1.0;
  double brain_variation = 0.1;  ///< amplitude of the smooth intensity inhomogeneity
  double noise_sigma = 0.05;
  int tumor_count_min = 1;
  int tumor_count_max = 2;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double contrast_min = 0.6;
  double contrast_max = 1.0;
  double rim_probability = 0.5;
  double rim_width = 1.5;
  double lobulation = 0.0;           ///< relative amplitude of the radial surface perturbation
  double max_tumor_fraction = 0.025;  ///< cap on the total tumour volume fraction

  static PhantomConfig easy(int size = 64);
  static PhantomConfig hard(int size = 64);
  static PhantomConfig preset(const std::string & name, int size = 64);

  void validate() const;
};

struct Phantom
{
  ImageVolume image;
  BinaryMask mask;
  int tumor_count = 0;
};

/// Smooth head ellipsoid, 1-2 rotated (optionally lobulated) tumours with contrast and
/// an optional enhancing rim, plus Gaussian noise inside the head. Zero outside the head.
Phantom generate_phantom(const PhantomConfig & cfg, Rng & rng);

struct CaseEntry
{
  std::string id;
  std::string split;  ///< "train" or "val"
  std::string image;  ///< file name relative to the dataset directory
  std::string label;
  std::uint64_t seed = 0;
};

struct Manifest
{
  std::string preset;
  std::uint64_t seed = 0;
  std::vector<CaseEntry> cases;

  std::vector<CaseEntry> split(const std::string & name) const;
};

nlohmann::json to_json(const Manifest & m);
Manifest manifest_from_json(const nlohmann::json & j);
Manifest load_manifest(const std::string & dir);

/// Writes `<id>_img.nii.gz`, `<id>_gt.nii.gz` per case and `manifest.json`.
Manifest generate_dataset(const PhantomConfig & cfg, const std::string & preset_name, int n_train, int n_val,
                          std::uint64_t seed, const std::string & out_dir);

/// Number of 26-connected foreground components.
int count_components(const BinaryMask & mask);

}  // namespace promptseg
