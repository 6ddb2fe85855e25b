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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "promptseg/evalkit.hpp"
#include "promptseg/model.hpp"
#include "promptseg/promptsim.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/session.hpp"
#include "promptseg/synthgen.hpp"

namespace py = pybind11;
namespace ps = promptseg;

namespace
{

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

nlohmann::json to_nl(const py::handle & obj)
{
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_nl(const nlohmann::json & j)
{
  return py::module_::import("json").attr("loads")(j.dump());
}

ps::Shape3 shape_of(const py::array & a)
{
  if (a.ndim() != 3) {
    throw ps::InvalidArgument("expected a 3D array in (z, y, x) order");
  }
  return {static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
}

ps::Geometry geometry_of(const py::array & a, const ps::Vec3 & spacing)
{
  ps::Geometry g = ps::Geometry::with_shape(shape_of(a), spacing);
  g.validate();
  return g;
}

ps::ImageVolume image_from(const FloatArray & a, const ps::Vec3 & spacing = {1.0, 1.0, 1.0})
{
  ps::ImageVolume v(geometry_of(a, spacing));
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

ps::BinaryMask mask_from(const ByteArray & a, const ps::Vec3 & spacing = {1.0, 1.0, 1.0})
{
  ps::BinaryMask m(geometry_of(a, spacing));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  ps::validate_mask(m);
  return m;
}

template <typename T>
py::array_t<T> to_array(const ps::Volume<T> & v)
{
  const auto & s = v.shape();
  py::array_t<T> out({s[0], s[1], s[2]});
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

py::dict geometry_dict(const ps::Geometry & g)
{
  py::dict d;
  d["shape"] = g.shape;
  d["spacing"] = g.spacing;
  d["origin"] = g.origin;
  d["direction"] = g.direction;
  return d;
}

std::vector<ps::Prompt> prompts_from(const py::handle & obj)
{
  std::vector<ps::Prompt> out;
  if (obj.is_none()) {
    return out;
  }
  const nlohmann::json j = to_nl(obj);
  if (j.is_array()) {
    for (const auto & p : j) {
      out.push_back(ps::prompt_from_json(p));
    }
  } else {
    out.push_back(ps::prompt_from_json(j));
  }
  return out;
}

ps::GuidanceLayout layout_from(const std::string & name)
{
  if (name == "shared") {
    return ps::GuidanceLayout::shared;
  }
  if (name == "per_type") {
    return ps::GuidanceLayout::per_type;
  }
  throw ps::InvalidArgument("layout must be 'shared' or 'per_type'");
}

/// Loaded or freshly initialised network behind the predictor interface.
class Model
{
public:
  explicit Model(const ps::ModelWeights & w, int patch)
      : weights_(w),
        predictor_(std::make_shared<ps::NetworkPredictor>(std::make_shared<const ps::ResidualUNet<float>>(w.instantiate()),
                                                          w.guidance, patch > 0 ? patch : ps::inference_patch(w)))
  {
  }

  static Model load(const std::string & path, int patch) { return Model(ps::load_weights(path), patch); }

  static Model create(std::uint64_t seed, const std::string & layout, int patch)
  {
    ps::GuidanceConfig g;
    g.layout = layout_from(layout);
    ps::Rng rng(seed);
    return Model(ps::ModelWeights::from_network(ps::build_network(ps::NetworkConfig::toy(g.layout), rng), g), patch);
  }

  py::tuple predict(const FloatArray & image, const py::object & prompts, const py::object & previous) const
  {
    const ps::ImageVolume img = image_from(image);
    const auto ps_prompts = prompts_from(prompts);
    ps::Prediction p;
    if (previous.is_none()) {
      p = ps::predict_full(*predictor_, img, ps_prompts, nullptr);
    } else {
      const ps::BinaryMask prev = mask_from(previous.cast<ByteArray>());
      p = ps::predict_full(*predictor_, img, ps_prompts, &prev);
    }
    return py::make_tuple(to_array(p.probabilities), to_array(p.mask));
  }

  void save(const std::string & path) const { ps::save_weights(weights_, path); }
  std::string fingerprint() const { return weights_.fingerprint(); }
  int channels() const { return weights_.guidance.total_channels(); }
  std::shared_ptr<const ps::Predictor> predictor() const { return predictor_; }

private:
  ps::ModelWeights weights_;
  std::shared_ptr<const ps::Predictor> predictor_;
};

/// Mutable wrapper over the functional session API.
class Session
{
public:
  Session(const Model & model, const FloatArray & image, const ps::Vec3 & spacing, bool preprocess, const std::string & case_id)
  {
    const ps::ImageVolume img = image_from(image, spacing);
    if (preprocess) {
      ps::PreparedImage prep = ps::preprocess(img);
      state_ = ps::create_session(std::move(prep.image), prep.record, model.predictor(), {}, case_id);
    } else {
      const auto rec = ps::identity_record(img.geometry);
      state_ = ps::create_session(img, rec, model.predictor(), {}, case_id);
    }
  }

  py::array_t<std::uint8_t> add(const py::object & prompts)
  {
    const auto list = prompts_from(prompts);
    auto [next, mask] = ps::add_prompts(state_, list);
    state_ = std::move(next);
    return to_array(mask);
  }

  void undo() { state_ = ps::undo(state_); }
  int round() const { return state_.round; }
  std::vector<int> shape() const { return {state_.image->shape()[0], state_.image->shape()[1], state_.image->shape()[2]}; }
  py::object mask() const
  {
    const ps::Prediction * p = state_.current();
    return p == nullptr ? py::object(py::none()) : py::object(to_array(p->mask));
  }
  py::array_t<std::uint8_t> export_mask() const { return to_array(ps::export_result(state_)); }
  py::object transcript() const { return from_nl(ps::session_transcript(state_)); }

private:
  ps::SessionState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Promptable 3D segmentation toolkit";

  py::register_exception<ps::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ps::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ps::StateError>(m, "StateError", PyExc_RuntimeError);

  m.def("dice", [](const ByteArray & a, const ByteArray & b) { return ps::dice(mask_from(a), mask_from(b)); });
  m.def("iou", [](const ByteArray & a, const ByteArray & b) { return ps::iou(mask_from(a), mask_from(b)); });

  m.def(
      "load_volume",
      [](const std::string & path) {
        const ps::ImageVolume v = ps::load_volume(path);
        return py::make_tuple(to_array(v), geometry_dict(v.geometry));
      },
      py::arg("path"), "Returns (array, geometry dict).");
  m.def(
      "save_volume",
      [](const py::array & data, const std::string & path, const ps::Vec3 & spacing) {
        if (py::isinstance<py::array_t<std::uint8_t>>(data)) {
          ps::save_volume(mask_from(data.cast<ByteArray>(), spacing), path);
        } else {
          ps::save_volume(image_from(data.cast<FloatArray>(), spacing), path);
        }
      },
      py::arg("data"), py::arg("path"), py::arg("spacing") = ps::Vec3{1.0, 1.0, 1.0});

  m.def("zscore_normalize", [](const FloatArray & a) { return to_array(ps::zscore_normalize(image_from(a))); });
  m.def(
      "preprocess",
      [](const FloatArray & a, const ps::Vec3 & spacing) {
        const ps::PreparedImage p = ps::preprocess(image_from(a, spacing));
        return py::make_tuple(to_array(p.image), geometry_dict(p.record.original));
      },
      py::arg("image"), py::arg("spacing") = ps::Vec3{1.0, 1.0, 1.0});

  m.def(
      "generate_phantom",
      [](const std::string & preset, int size, std::uint64_t seed) {
        ps::Rng rng(seed);
        const ps::Phantom p = ps::generate_phantom(ps::PhantomConfig::preset(preset, size), rng);
        return py::make_tuple(to_array(p.image), to_array(p.mask), p.tumor_count);
      },
      py::arg("preset") = "easy", py::arg("size") = 64, py::arg("seed") = 0);
  m.def("count_components", [](const ByteArray & a) { return ps::count_components(mask_from(a)); });

  m.def(
      "simulate_prompts",
      [](const std::string & kind, const ByteArray & mask, std::uint64_t seed) {
        ps::Rng rng(seed);
        py::list out;
        for (const auto & p : ps::simulate_prompts(ps::parse_prompt_kind(kind), mask_from(mask), rng, {})) {
          out.append(from_nl(ps::to_json(p)));
        }
        return out;
      },
      py::arg("kind"), py::arg("mask"), py::arg("seed") = 0);
  m.def(
      "rasterize_prompt",
      [](const py::object & prompt, const std::vector<int> & shape) {
        if (shape.size() != 3) {
          throw ps::InvalidArgument("shape must have three entries");
        }
        const ps::Prompt p = prompts_from(prompt).at(0);
        return to_array(ps::rasterize_prompt(p, ps::Geometry::with_shape({shape[0], shape[1], shape[2]})));
      },
      py::arg("prompt"), py::arg("shape"));
  m.def(
      "encode_guidance",
      [](const py::object & prompts, const FloatArray & image, const py::object & previous, const std::string & layout) {
        ps::GuidanceConfig cfg;
        cfg.layout = layout_from(layout);
        const ps::ImageVolume img = image_from(image);
        const auto list = prompts_from(prompts);
        const ps::GuidanceStack st = previous.is_none()
                                         ? ps::encode_guidance(list, img, cfg)
                                         : ps::encode_guidance(list, img, mask_from(previous.cast<ByteArray>()), cfg);
        py::array_t<float> out({st.channels, st.shape[0], st.shape[1], st.shape[2]});
        std::copy(st.data.begin(), st.data.end(), out.mutable_data());
        return out;
      },
      py::arg("prompts"), py::arg("image"), py::arg("previous") = py::none(), py::arg("layout") = "shared");

  m.def("encode_rle", [](const ByteArray & a) { return from_nl(ps::to_json(ps::encode_rle(mask_from(a)))); });
  m.def("decode_rle", [](const py::object & j) { return to_array(ps::decode_rle(ps::rle_from_json(to_nl(j)))); });

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"), py::arg("patch") = 0)
      .def_static("create", &Model::create, py::arg("seed") = 0, py::arg("layout") = "shared", py::arg("patch") = 32)
      .def("predict", &Model::predict, py::arg("image"), py::arg("prompts") = py::none(), py::arg("previous") = py::none(),
           "Returns (probabilities, mask) for a preprocessed volume.")
      .def("save", &Model::save)
      .def_property_readonly("fingerprint", &Model::fingerprint)
      .def_property_readonly("channels", &Model::channels);

  py::class_<Session>(m, "Session")
      .def(py::init<const Model &, const FloatArray &, const ps::Vec3 &, bool, const std::string &>(), py::arg("model"),
           py::arg("image"), py::arg("spacing") = ps::Vec3{1.0, 1.0, 1.0}, py::arg("preprocess") = true,
           py::arg("case_id") = "")
      .def("add", &Session::add, py::arg("prompts"), "Runs one round; returns the new mask (preprocessed grid).")
      .def("undo", &Session::undo)
      .def_property_readonly("round", &Session::round)
      .def_property_readonly("shape", &Session::shape)
      .def_property_readonly("mask", &Session::mask)
      .def("export", &Session::export_mask, "Current mask in the original grid.")
      .def("transcript", &Session::transcript);
}
