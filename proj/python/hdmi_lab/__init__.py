# Copyright 2026 The hdmi_lab Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the hdmi_lab C++ core."""

import json

from . import _core
from ._core import (
    ConfigError,
    accuracy,
    brier,
    ce_kl_identity_residual,
    conditional_entropy,
    disagreement_rates,
    ece,
    hdmi_loss,
    kl_matrix,
    known_keys,
    marginal_entropy,
    mutual_information,
)

__all__ = [
    "ConfigError",
    "accuracy",
    "brier",
    "ce_kl_identity_residual",
    "cli",
    "conditional_entropy",
    "disagreement_rates",
    "ece",
    "generate",
    "hdmi_loss",
    "kl_matrix",
    "known_keys",
    "marginal_entropy",
    "mutual_information",
    "resolve_config",
    "run",
]


def _overrides(kwargs):
    out = {}
    for key, value in kwargs.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        out[key] = str(value)
    return out


def resolve_config(**overrides):
    """Resolved configuration: {"values": ..., "provenance": ...}."""
    return json.loads(_core.resolve_config(_overrides(overrides)))


def generate(**overrides):
    """(x_source, y_source, x_target, y_target) for the configured shift."""
    return _core.generate(_overrides(overrides))


def run(run_dir=None, **overrides):
    """Generate, train, adapt and analyze; returns the report document."""
    return json.loads(_core.run(_overrides(overrides), "" if run_dir is None else str(run_dir)))


def cli(*args):
    """Runs the command-line front end in-process: (exit_code, stdout, stderr)."""
    return _core.cli([str(a) for a in args])
