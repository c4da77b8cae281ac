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

import math

import numpy as np
import pytest

import hdmi_lab

QUICK = dict(n_source=120, n_target=120, source_steps=40, steps=30)


def test_config_defaults_and_provenance():
    cfg = hdmi_lab.resolve_config(m=3)
    assert cfg["values"]["m"] == "3"
    assert cfg["provenance"]["m"] == "flag"
    assert cfg["provenance"]["lambda"] == "default"
    assert "lambda" in hdmi_lab.known_keys()


def test_invalid_config_raises():
    with pytest.raises(ValueError):
        hdmi_lab.resolve_config(objective="hd_only", m=1)


def test_generate_shapes():
    xs, ys, xt, yt = hdmi_lab.generate(n_source=50, n_target=40)
    assert xs.shape == (50, 2) and xt.shape == (40, 2)
    assert len(ys) == 50 and len(yt) == 40
    assert set(ys) == {0, 1}


def test_mutual_information_extremes():
    k = 4
    assert abs(hdmi_lab.mutual_information(np.eye(k)) - math.log(k)) < 1e-9
    same = np.tile(np.array([[0.1, 0.2, 0.3, 0.4]]), (5, 1))
    assert abs(hdmi_lab.mutual_information(same)) < 1e-10


def test_ce_kl_identity():
    rng = np.random.default_rng(0)
    ps = []
    for _ in range(3):
        logits = rng.normal(size=(8, 3))
        p = np.exp(logits)
        ps.append(p / p.sum(axis=1, keepdims=True))
    ce = hdmi_lab.hdmi_loss(ps, 1, 0.7, "cross_entropy", "sum")["total"]
    kl = hdmi_lab.hdmi_loss(ps, 1, 0.7, "kl", "sum")["total"]
    h = -np.mean(np.sum(ps[1] * np.log(ps[1] + 1e-12), axis=1))
    assert abs(ce - kl - 0.7 * 2 * h) < 1e-9
    assert hdmi_lab.ce_kl_identity_residual(ps, 1, 0.7) < 1e-9


def test_metrics_against_numpy():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(3), size=20)
    y = rng.integers(0, 3, size=20).tolist()
    onehot = np.eye(3)[y]
    assert abs(hdmi_lab.brier(p, y) - np.mean(np.sum((p - onehot) ** 2, axis=1))) < 1e-12
    assert abs(hdmi_lab.accuracy(p, y) - np.mean(p.argmax(axis=1) == y)) < 1e-15
    assert 0.0 <= hdmi_lab.ece(p, y) <= 1.0
    d = hdmi_lab.disagreement_rates([p, p[::-1].copy()])
    assert d.shape == (2, 2) and d[0, 0] == 0.0
    assert abs(d[0, 1] - np.mean(p.argmax(1) != p[::-1].argmax(1))) < 1e-15


def test_run_is_deterministic(tmp_path):
    a = hdmi_lab.run(run_dir=tmp_path / "a", **QUICK)
    b = hdmi_lab.run(**QUICK)
    assert a["report"] == b["report"]
    assert (tmp_path / "a" / "report.json").exists()
    assert 0.0 <= a["report"]["accuracy"] <= 1.0


def test_cli_exit_codes(tmp_path):
    code, out, err = hdmi_lab.cli("run", "--dir", tmp_path / "r", "--n-source", 80, "--n-target", 80,
                                  "--source-steps", 10, "--steps", 10)
    assert code == 0, err
    code, _, err = hdmi_lab.cli("run", "--bogus", "1")
    assert code == 1 and "lambda" in err
