"""Tests for the compiled Gaussian BPS loop."""

import math

import numpy as np
import pytest

from pdmpkit.utils.fastpath import gaussian_bps_run


def test_result_fields():
    run = gaussian_bps_run(np.eye(2), 1.0, 10.0, seed=1)
    assert set(run) == {"events", "bounces", "refreshes", "completed", "x", "y", "wall_time", "compiled"}
    assert run["completed"]
    assert run["events"] == run["bounces"] + run["refreshes"]
    assert run["x"].shape == (2,)


def test_reproducible_per_seed():
    a = gaussian_bps_run(np.eye(2), 1.0, 50.0, seed=11)
    b = gaussian_bps_run(np.eye(2), 1.0, 50.0, seed=11)
    c = gaussian_bps_run(np.eye(2), 1.0, 50.0, seed=12)
    assert a["events"] == b["events"]
    np.testing.assert_array_equal(a["x"], b["x"])
    assert not np.array_equal(a["x"], c["x"])


@pytest.mark.parametrize("sphere", [False, True])
def test_refreshments_follow_a_poisson_count(sphere):
    lambda_c, t_end = 1.0, 2000.0
    run = gaussian_bps_run(np.eye(1), lambda_c, t_end, seed=3, sphere=sphere)
    mean = lambda_c * t_end
    assert abs(run["refreshes"] - mean) < 5.0 * math.sqrt(mean)
    if sphere:
        assert abs(run["y"][0]) == pytest.approx(1.0)


def test_event_cap():
    run = gaussian_bps_run(np.eye(1), 100.0, 10.0, seed=0, max_events=10)
    assert not run["completed"]
    assert run["events"] == 10
