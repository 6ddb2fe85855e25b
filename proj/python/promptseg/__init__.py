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

"""Python bindings for the promptseg C++ core. Arrays are (z, y, x)."""

from ._core import (
    InvalidArgument,
    IoError,
    Model,
    Session,
    StateError,
    count_components,
    decode_rle,
    dice,
    encode_guidance,
    encode_rle,
    generate_phantom,
    iou,
    load_volume,
    preprocess,
    rasterize_prompt,
    save_volume,
    simulate_prompts,
    zscore_normalize,
)

__all__ = [
    "InvalidArgument",
    "IoError",
    "Model",
    "Session",
    "StateError",
    "count_components",
    "decode_rle",
    "dice",
    "encode_guidance",
    "encode_rle",
    "generate_phantom",
    "iou",
    "load_volume",
    "preprocess",
    "rasterize_prompt",
    "save_volume",
    "simulate_prompts",
    "zscore_normalize",
]
