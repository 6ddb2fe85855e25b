# Copyright 2026 The promptseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json

import numpy as np
import pytest

import promptseg as ps


def test_metrics_match_counting():
    rng = np.random.default_rng(0)
    a = (rng.random((8, 9, 10)) < 0.4).astype(np.uint8)
    b = (rng.random((8, 9, 10)) < 0.4).astype(np.uint8)
    inter = int((a & b).sum())
    assert ps.dice(a, b) == pytest.approx(2 * inter / (a.sum() + b.sum()), abs=1e-12)
    assert ps.iou(a, b) == pytest.approx(inter / int((a | b).sum()), abs=1e-12)


def test_phantom_and_prompts():
    image, mask, count = ps.generate_phantom("easy", 32, 5)
    assert image.shape == mask.shape == (32, 32, 32)
    assert ps.count_components(mask) == count
    for kind in ("point", "box", "lasso", "scribble"):
        prompts = ps.simulate_prompts(kind, mask, 1)
        assert prompts and all(p["kind"] == kind for p in prompts)
        stamp = ps.rasterize_prompt(prompts[0], list(mask.shape))
        assert stamp.sum() > 0
    points = ps.simulate_prompts("point", mask, 2)
    for p in points:
        assert mask[tuple(p["center"])] == 1


def test_guidance_layouts():
    image = np.zeros((8, 8, 8), dtype=np.float32)
    prompt = {"kind": "point", "polarity": "negative", "center": [4, 4, 4], "radius": 1}
    shared = ps.encode_guidance([prompt], image)
    per_type = ps.encode_guidance([prompt], image, layout="per_type")
    assert shared.shape == (4, 8, 8, 8)
    assert per_type.shape == (10, 8, 8, 8)
    assert shared[3].sum() == 7
    assert per_type[3].sum() == 7


def test_rle_round_trip():
    mask = np.zeros((2, 2, 2), dtype=np.uint8)
    mask[:] = 1
    assert ps.encode_rle(mask)["runs"] == [0, 8]
    rng = np.random.default_rng(1)
    m = (rng.random((3, 4, 5)) < 0.5).astype(np.uint8)
    assert np.array_equal(ps.decode_rle(ps.encode_rle(m)), m)


def test_volume_io(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = str(tmp_path / "v.nii.gz")
    ps.save_volume(data, path, (2.0, 1.0, 0.5))
    back, geom = ps.load_volume(path)
    assert np.array_equal(back, data)
    assert geom["spacing"] == pytest.approx([2.0, 1.0, 0.5])
    with pytest.raises(OSError):
        ps.load_volume(str(tmp_path / "missing.nii"))


def test_model_and_session(tmp_path):
    model = ps.Model.create(seed=3, patch=16)
    assert model.channels == 4
    image, _, _ = ps.generate_phantom("easy", 24, 9)
    prob, mask = model.predict(ps.zscore_normalize(image))
    assert prob.shape == mask.shape == image.shape
    assert set(np.unique(mask)) <= {0, 1}
    model.save(str(tmp_path / "m.w"))
    again = ps.Model.load(str(tmp_path / "m.w"), patch=16)
    assert again.fingerprint == model.fingerprint

    session = ps.Session(model, image)
    assert session.round == 0 and session.mask is None
    z, y, x = (s // 2 for s in session.shape)
    session.add({"kind": "point", "polarity": "positive", "center": [z, y, x], "radius": 2})
    assert session.round == 1
    assert session.export().shape == image.shape
    assert len(session.transcript()["prompts"]) == 1
    with pytest.raises(ValueError):
        session.add({"kind": "point", "polarity": "positive", "center": [999, 0, 0], "radius": 2})
    session.undo()
    assert session.round == 0
    with pytest.raises(RuntimeError):
        session.undo()
