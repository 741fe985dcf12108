"""Tests for the event loop, trajectories and first-jump laws."""

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from pdmpkit.engine import (
    Characteristics,
    EmpiricalCdf,
    TrajectoryStatus,
    first_type_jump_representation,
    first_type_jump_time,
    run_replicas,
    simulate,
    simulate_c1,
    simulate_c2,
)
from pdmpkit.mechanisms import (
    BoundedBy,
    DeterministicMap,
    JumpMechanism,
    KernelSpec,
    add_phantom_rate,
    constant_rate_mechanism,
    kernel_expectation,
    minimal_mechanism,
    total_mechanism,
)
from pdmpkit.models.specs import BpsSpec, Construction, EngineConfig, RecordMode, ZigZagSpec
from pdmpkit.samplers import build_bps, build_merged_bps, build_zigzag, velocity_reversal
from pdmpkit.state_space import FreeTransport, make_state
from pdmpkit.utils.csv_io import read_csv


def poisson_clock(rate: float) -> Characteristics:
    return Characteristics(FreeTransport(), (constant_rate_mechanism(rate, KernelSpec.identity(), "tick"),))


class TestEngineConfig:
    def test_grid_needs_dt(self):
        with pytest.raises(ValidationError):
            EngineConfig(t_end=1.0, record=RecordMode.GRID)

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValidationError):
            EngineConfig(t_end=0.0)

    def test_characteristics_need_a_mechanism(self):
        with pytest.raises(ValueError):
            Characteristics(FreeTransport(), ())


class TestConstructions:
    def test_poisson_event_counts(self, start1):
        ch = poisson_clock(2.0)
        counts = [
            simulate(ch, start1, EngineConfig(t_end=5.0, seed=11), prefix=(r,)).n_events for r in range(400)
        ]
        mean = np.mean(counts)
        assert abs(mean - 10.0) < 4 * math.sqrt(10.0 / 400)

    def test_identity_kernel_events_are_phantom(self, start1):
        traj = simulate(poisson_clock(3.0), start1, EngineConfig(t_end=5.0, seed=2))
        assert traj.n_events > 0
        assert traj.jump_counts() == (0, traj.n_events)
        np.testing.assert_allclose(traj.xs[:, 0], traj.times)

    def test_single_mechanism_constructions_agree_exactly(self, bps1, start1):
        ch = build_merged_bps(bps1)
        cfg = EngineConfig(t_end=20.0, seed=3)
        a = simulate_c1(ch, start1, cfg)
        b = simulate_c2(ch, start1, cfg)
        assert a.n_events > 10
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.xs, b.xs)
        np.testing.assert_array_equal(a.ys, b.ys)

    @pytest.mark.parametrize("construction", list(Construction))
    def test_same_seed_reproduces(self, bps2, construction):
        ch = build_bps(bps2)
        init = make_state([0.5, -0.5], [1.0, 0.0])
        cfg = EngineConfig(t_end=10.0, seed=7, construction=construction)
        a, b = simulate(ch, init, cfg), simulate(ch, init, cfg)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.ys, b.ys)
        c = simulate(ch, init, cfg, prefix=(1,))
        assert not np.array_equal(a.times, c.times)

    @pytest.mark.parametrize("construction", list(Construction))
    def test_trajectory_shape(self, bps1, start1, construction):
        traj = simulate(build_bps(bps1), start1, EngineConfig(t_end=10.0, seed=1, construction=construction))
        assert traj.status == TrajectoryStatus.COMPLETED
        assert traj.times[0] == 0.0 and traj.types[0] == 0
        assert np.all(np.diff(traj.times) >= 0.0)
        assert traj.times[-1] <= traj.t_end
        assert set(traj.types[1:]) <= {1, 2}

    @pytest.mark.slow
    def test_constructions_share_the_law(self, bps1, start1):
        ch = build_bps(bps1)
        c1 = EngineConfig(t_end=5.0, seed=9)
        c2 = EngineConfig(t_end=5.0, seed=9, construction=Construction.C2)
        a = [simulate(ch, start1, c1, prefix=(r,)).final_state().x[0] for r in range(1000)]
        b = [simulate(ch, start1, c2, prefix=(5000 + r,)).final_state().x[0] for r in range(1000)]
        assert stats.ks_2samp(a, b).pvalue > 0.01


def final_x(ch: Characteristics, init, cfg: EngineConfig, n: int, block: int) -> np.ndarray:
    return np.array([simulate(ch, init, cfg, prefix=(r, block)).final_state().x[0] for r in range(n)])


def two_unit_clocks() -> Characteristics:
    identity = KernelSpec.identity()
    return Characteristics(
        FreeTransport(),
        (constant_rate_mechanism(1.0, identity, "a"), constant_rate_mechanism(1.0, identity, "b")),
    )


class TestEquivalentLaws:
    @pytest.mark.slow
    def test_list_total_and_minimal_forms(self, bps1, start1):
        ch = build_bps(bps1)
        ms = list(ch.mechanisms)
        forms = [
            ch,
            Characteristics(ch.flow, (total_mechanism(ms),)),
            Characteristics(ch.flow, (minimal_mechanism(ms),)),
        ]
        cfg = EngineConfig(t_end=2.0, seed=31)
        samples = [final_x(form, start1, cfg, 2000, i) for i, form in enumerate(forms)]
        for a, b in [(0, 1), (0, 2), (1, 2)]:
            assert stats.ks_2samp(samples[a], samples[b]).pvalue > 0.01

    @pytest.mark.slow
    def test_thinned_bounce_matches_the_analytic_bounce(self, bps1_sphere, start1):
        # unit speed from 0 keeps |x| <= 2, so the bounce rate stays below 10
        plain = build_bps(bps1_sphere)
        thinned = build_bps(BpsSpec(**{**dict(bps1_sphere), "lambda_star": 10.0}))
        cfg = EngineConfig(t_end=2.0, seed=32)
        a = final_x(plain, start1, cfg, 2000, 0)
        b = final_x(thinned, start1, cfg, 2000, 1)
        assert stats.ks_2samp(a, b).pvalue > 0.01

    @pytest.mark.slow
    def test_phantom_rate_changes_nothing_but_the_phantom_count(self, bps1, start1):
        ch = build_bps(bps1)
        total = total_mechanism(list(ch.mechanisms))
        plain = Characteristics(ch.flow, (total,))
        padded = Characteristics(ch.flow, tuple(add_phantom_rate(total, 2.0)))
        t_end, n = 2.0, 2000
        cfg = EngineConfig(t_end=t_end, seed=33)
        a = [simulate(plain, start1, cfg, prefix=(r, 0)) for r in range(n)]
        b = [simulate(padded, start1, cfg, prefix=(r, 1)) for r in range(n)]
        assert stats.ks_2samp([t.final_state().x[0] for t in a], [t.final_state().x[0] for t in b]).pvalue > 0.01
        assert stats.ks_2samp([t.jump_counts()[0] for t in a], [t.jump_counts()[0] for t in b]).pvalue > 0.01
        assert all(t.jump_counts()[1] == 0 for t in a)
        phantoms = np.mean([t.jump_counts()[1] for t in b])
        assert abs(phantoms - 2.0 * t_end) < 4.0 * math.sqrt(2.0 * t_end / n)

    def test_total_equals_minimal_plus_phantom_rate(self, gauss2, rng):
        ms = list(build_zigzag(ZigZagSpec(potential=gauss2, refresh_rate=2.0)).mechanisms)
        total, minimal = total_mechanism(ms), minimal_mechanism(ms)
        rebuilt = total_mechanism(add_phantom_rate(minimal, lambda s: total.rate_at(s) - minimal.rate_at(s)))
        corners = [np.array([a, b]) for a in (-1.0, 1.0) for b in (-1.0, 1.0)]
        for _ in range(20):
            s = make_state(rng.standard_normal(2), rng.choice([-1.0, 1.0], size=2))
            assert rebuilt.rate_at(s) == pytest.approx(total.rate_at(s), abs=1e-12)
            for v in corners:

                def at_corner(state, v=v):
                    return np.all(np.asarray(state.y) == v, axis=-1).astype(float)

                expected, _ = kernel_expectation(total.kernel, at_corner, s)
                got, _ = kernel_expectation(rebuilt.kernel, at_corner, s)
                assert got == pytest.approx(expected, abs=1e-12)

    @pytest.mark.slow
    def test_minimal_mechanism_has_no_phantom_events(self, gauss2):
        ms = list(build_zigzag(ZigZagSpec(potential=gauss2, refresh_rate=2.0)).mechanisms)
        init = make_state([0.0, 0.0], [1.0, 1.0])
        cfg = EngineConfig(t_end=8000.0, seed=34)
        listed = simulate(Characteristics(FreeTransport(), tuple(ms)), init, cfg)
        minimal = simulate(Characteristics(FreeTransport(), (minimal_mechanism(ms),)), init, cfg)
        assert listed.jump_counts()[1] > 0
        assert minimal.n_events >= 10_000
        assert minimal.jump_counts()[1] == 0

    def test_c2_inter_event_times_are_exponential(self, start1):
        traj = simulate_c2(two_unit_clocks(), start1, EngineConfig(t_end=2000.0, seed=35))
        gaps = np.diff(traj.times)
        assert stats.kstest(gaps, "expon", args=(0.0, 0.5)).pvalue > 0.01

    def test_c1_picks_either_clock_evenly(self, start1):
        traj = simulate_c1(two_unit_clocks(), start1, EngineConfig(t_end=2000.0, seed=36))
        n = traj.n_events
        share = float(np.mean(traj.types[1:] == 1))
        assert abs(share - 0.5) < 4.0 * math.sqrt(0.25 / n)

    @pytest.mark.slow
    def test_gaussian_bps_does_not_explode(self, bps1, start1):
        ch = build_bps(bps1)
        for seed in range(100):
            traj = simulate(ch, start1, EngineConfig(t_end=100.0, seed=seed))
            assert traj.status == TrajectoryStatus.COMPLETED


class TestTerminalStatus:
    def test_event_cap_signals_explosion(self, start1, bps1):
        spec = BpsSpec(**{**dict(bps1), "lambda_c": 100.0})
        traj = simulate(build_bps(spec), start1, EngineConfig(t_end=10.0, max_events=10, seed=0))
        assert traj.status == TrajectoryStatus.EXPLOSION_SUSPECTED
        assert traj.n_events == 10

    def test_rate_bound_violation_stops_the_run(self):
        m = JumpMechanism(
            lambda s: abs(s.x[0]),
            KernelSpec.of((1.0, DeterministicMap(velocity_reversal, "reverse"))),
            BoundedBy(0.5),
            "capped",
        )
        ch = Characteristics(FreeTransport(), (m,))
        traj = simulate(ch, make_state([3.0], [1.0]), EngineConfig(t_end=5.0))
        assert traj.status == TrajectoryStatus.RATE_BOUND_VIOLATED
        assert traj.n_events == 0

    def test_stop_types(self, bps1, start1):
        traj = simulate(build_bps(bps1), start1, EngineConfig(t_end=100.0, seed=4), stop_types=frozenset({2}))
        assert traj.types[-1] == 2
        assert 2 not in traj.types[1:-1]
        assert traj.first_jump([2]) == (traj.times[-1], 2)


class TestTrajectory:
    def test_state_at_follows_the_flow(self, bps1, start1):
        traj = simulate(build_bps(bps1), start1, EngineConfig(t_end=10.0, seed=8))
        k = traj.n_events // 2
        s = traj.state_at(traj.times[k])
        np.testing.assert_array_equal(s.x, traj.xs[k])
        mid = 0.5 * (traj.times[k] + traj.times[k + 1])
        np.testing.assert_allclose(traj.state_at(mid).x, traj.xs[k] + (mid - traj.times[k]) * traj.ys[k])
        assert traj.state_at(0.0).x[0] == 0.0

    def test_first_jump_without_events(self, start1):
        traj = simulate(poisson_clock(1e-9), start1, EngineConfig(t_end=1.0))
        assert traj.first_jump() == (math.inf, 0)
        np.testing.assert_allclose(traj.final_state().x, [1.0])

    def test_grid(self, bps1, start1):
        cfg = EngineConfig(t_end=1.0, seed=1, record=RecordMode.GRID, dt=0.1)
        traj = simulate(build_bps(bps1), start1, cfg)
        ts, x, y = traj.grid()
        assert len(ts) == 11
        assert ts[-1] == 1.0
        np.testing.assert_allclose(x[3], traj.state_at(ts[3]).x)
        with pytest.raises(ValueError):
            simulate(build_bps(bps1), start1, EngineConfig(t_end=1.0)).grid()

    def test_csv_keeps_full_precision(self, bps2, tmp_path):
        traj = simulate(build_bps(bps2), make_state([0.1, 0.2], [1.0, -1.0]), EngineConfig(t_end=5.0, seed=2))
        header, rows = read_csv(traj.to_csv(str(tmp_path / "out" / "trajectory.csv")))
        assert header == ["k", "time", "type", "phantom", "x_1", "x_2", "y_1", "y_2"]
        assert len(rows) == traj.n_events + 1
        assert rows[0][2:4] == ["0", "false"]
        for row, t, x in zip(rows, traj.times, traj.xs):
            assert float(row[1]) == t
            assert float(row[4]) == x[0]

    def test_grid_csv(self, bps1, start1, tmp_path):
        traj = simulate(build_bps(bps1), start1, EngineConfig(t_end=2.0, seed=2))
        header, rows = read_csv(traj.grid_to_csv(str(tmp_path / "grid.csv"), dt=0.5))
        assert header == ["t", "x_1", "y_1"]
        assert [float(r[0]) for r in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]


class TestReplicas:
    def test_threads_keep_replica_order(self):
        assert run_replicas(lambda r: r * r, 20, threads=4) == [r * r for r in range(20)]

    def test_empirical_cdf(self):
        cdf = EmpiricalCdf(np.array([math.inf, 2.0, 1.0]))
        assert cdf(0.5) == 0.0
        assert cdf(1.5) == pytest.approx(1 / 3)
        assert cdf(math.inf) == 1.0
        np.testing.assert_array_equal(cdf.finite, [1.0, 2.0])


class TestFirstTypeJump:
    def test_first_refresh_is_exponential(self, bps1, start1):
        cdf = first_type_jump_time(build_bps(bps1), 1, start1, EngineConfig(t_end=3.0, seed=1), 600)
        p = 1 - math.exp(-1.0)
        assert abs(cdf(1.0) - p) < 4 * math.sqrt(p * (1 - p) / 600)

    def test_representation_matches_direct_simulation(self, bps1, start1):
        bounce, refresh = build_bps(bps1).mechanisms
        # first bounce of a process that also refreshes
        ch = Characteristics(FreeTransport(), (refresh, bounce))
        cfg = EngineConfig(t_end=4.0, seed=12)
        direct = first_type_jump_time(ch, 1, start1, cfg, 500)
        rep = first_type_jump_representation(ch, 1, start1, cfg, 500)
        censor = 2 * cfg.t_end
        a = np.minimum(direct.samples, censor)
        b = np.minimum(rep.samples, censor)
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_split_out_of_range(self, bps1, start1, short_run):
        ch = build_bps(bps1)
        with pytest.raises(ValueError):
            first_type_jump_time(ch, 0, start1, short_run, 10)
        with pytest.raises(ValueError):
            first_type_jump_representation(ch, 2, start1, short_run, 10)
