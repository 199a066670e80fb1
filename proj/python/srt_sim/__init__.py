# Copyright 2026 The SRT Authors. All Rights Reserved.
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
# ==============================================================================
"""Speculative rollout simulator with per-prompt tree caches."""

import json

from ._core import (
    ConfigError,
    ExactnessViolation,
    InsertMode,
    MarkovOptions,
    PolicyKind,
    PolicySpec,
    RolloutTree,
    TreeConfig,
    baseline_generate,
    ngram_overlap,
    resolved_config,
    run_cli,
    speculative_generate,
    verify_exactness,
)
from ._core import simulate as _simulate


def simulate(config):
  """Runs one simulation. `config` is a dict or a JSON string."""
  if not isinstance(config, str):
    config = json.dumps(config)
  return _simulate(config)


__all__ = [
    "ConfigError",
    "ExactnessViolation",
    "InsertMode",
    "MarkovOptions",
    "PolicyKind",
    "PolicySpec",
    "RolloutTree",
    "TreeConfig",
    "baseline_generate",
    "ngram_overlap",
    "resolved_config",
    "run_cli",
    "simulate",
    "speculative_generate",
    "verify_exactness",
]
