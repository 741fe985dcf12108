"""Tests for INI run-configuration parsing."""

import glob
import math
import os

import numpy as np
import pytest

from pdmpkit.errors import ConfigError
from pdmpkit.models.run_config import MechanismForm, SamplerKind, load_run_config, parse_run_config
from pdmpkit.models.specs import BpsVariant, Construction, RecordMode
from pdmpkit.state_space import GaussianPotential, VelocityKind

FULL = """
# comment line
[sampler]
kind = bps
potential = gaussian
d = 2
precision = 2 0.5; 0.5 1   # rows split by ';'
velocity = unit_sphere
lambda_c = 0.5
variant = truncated
cap = 3
form = total
x0 = 1, -1

[engine]
t_end = 50
seed = 16
construction = C2
record = grid
dt = 0.5

[experiment]
caps = 0.5, 1, inf
functions = x, xy
t_grid = 0.5 1 2
"""


class TestParse:
    def test_full_config(self):
        rc = parse_run_config(FULL)
        assert rc.sampler.kind == SamplerKind.BPS
        assert rc.sampler.precision == [[2.0, 0.5], [0.5, 1.0]]
        assert rc.sampler.x0 == [1.0, -1.0]
        assert rc.sampler.form == MechanismForm.TOTAL
        assert rc.engine.construction == Construction.C2
        assert rc.experiment.caps == [0.5, 1.0, math.inf]
        assert rc.experiment.functions == ["x", "xy"]
        assert rc.experiment.t_grid == [0.5, 1.0, 2.0]

    def test_hex_seed_is_an_error(self):
        # seeds in the file are decimal; the command line accepts hex
        with pytest.raises(ConfigError):
            parse_run_config(FULL.replace("seed = 16", "seed = 0x10"))

    def test_defaults(self):
        rc = parse_run_config("[sampler]\nd = 1\n")
        assert rc.engine.t_end == 10.0
        assert rc.engine.seed == 0
        assert rc.experiment.caps == [0.5, 1.0, 2.0, 4.0]
        assert rc.experiment.functions == ["x", "x2", "y", "xy", "bump"]
        assert rc.sampler.velocity == VelocityKind.STD_GAUSSIAN

    def test_specs(self):
        rc = parse_run_config(FULL)
        spec = rc.sampler.bps_spec()
        assert isinstance(spec.potential, GaussianPotential)
        np.testing.assert_allclose(spec.potential.A, [[2.0, 0.5], [0.5, 1.0]])
        assert spec.variant == BpsVariant.TRUNCATED and spec.cap == 3.0
        cfg = rc.engine.engine_config()
        assert cfg.record == RecordMode.GRID and cfg.dt == 0.5 and cfg.seed == 16
        assert rc.engine.engine_config(t_end=2.0).t_end == 2.0

    def test_zigzag_spec(self):
        rc = parse_run_config("[sampler]\nkind = zigzag\nd = 2\nrefresh_rate = 0.5\nfull_reversal = true\n")
        spec = rc.sampler.zigzag_spec()
        assert spec.full_reversal
        assert spec.refresh_rate == 0.5

    def test_with_seed(self):
        rc = parse_run_config("[engine]\nseed = 3\n")
        assert rc.with_seed(None) is rc
        assert rc.with_seed(99).engine.seed == 99
        assert rc.engine.seed == 3

    def test_require(self):
        rc = parse_run_config("[experiment]\nn_runs = 5\n")
        with pytest.raises(ConfigError, match="partner_eps"):
            rc.require("experiment", "partner_eps")
        rc.require("experiment", "n_runs")


class TestRejects:
    @pytest.mark.parametrize(
        "text",
        [
            "[sampler]\nlambda = 1\n",  # unknown key
            "[simulation]\nt_end = 1\n",  # unknown section
            "[engine]\nt_end = -1\n",
            "[experiment]\ncaps = 1, 0.5\n",  # caps must increase
            "[experiment]\ncaps = 1, 1\n",
            "[sampler]\nd = 2\nx0 = 1\n",
            "[sampler]\nkind = zigzag\nvelocity = unit_sphere\n",
            "[sampler]\nvelocity = torus\n",
            "not an ini file",
        ],
    )
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_run_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(str(tmp_path / "absent.ini"))

    def test_load_records_source(self, write_config):
        path = write_config("[engine]\nt_end = 2\n")
        rc = load_run_config(path)
        assert rc.source == path
        assert rc.engine.t_end == 2.0

    def test_shipped_configs_parse(self):
        root = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
        paths = sorted(glob.glob(os.path.join(root, "*.ini")))
        assert paths
        for path in paths:
            load_run_config(path)
