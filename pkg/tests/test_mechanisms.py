"""Tests for kernels, mechanisms and the mechanism transforms."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdmpkit.errors import RateBoundViolated, StayingMassUnavailable
from pdmpkit.mechanisms import (
    AnalyticAffine,
    BoundedBy,
    DeterministicMap,
    DominatedBy,
    Identity,
    JumpMechanism,
    KernelSpec,
    Refreshment,
    add_phantom_rate,
    constant,
    constant_phantom_mechanism,
    constant_rate_mechanism,
    kernel_expectation,
    minimal_mechanism,
    smoothed_bps_rate,
    staying_probability,
    thin_to_constant,
    total_mechanism,
    truncate_rate,
)
from pdmpkit.samplers import build_bps, build_zigzag, velocity_reversal
from pdmpkit.models.specs import ZigZagSpec
from pdmpkit.state_space import GaussianIsoPotential, VelocityKind, VelocitySpace, make_state

CUBE2 = VelocitySpace(kind=VelocityKind.SIGNED_HYPERCUBE, d=2)
GAUSS1 = VelocitySpace(kind=VelocityKind.STD_GAUSSIAN, d=1)
REVERSE = DeterministicMap(velocity_reversal, "reverse")


class TestKernelSpec:
    def test_weights_are_normalised(self):
        k = KernelSpec.of((1.0, REVERSE), (3.0, Identity()))
        s = make_state([0.0], [1.0])
        np.testing.assert_allclose(k.probabilities(s), [0.25, 0.75])

    def test_mixture_merges_duplicate_keys(self):
        k = KernelSpec.of((1.0, REVERSE), (1.0, REVERSE), (2.0, Identity()))
        mix = k.mixture(make_state([0.0], [1.0]))
        assert set(mix) == {"map:reverse", "identity"}
        assert mix["map:reverse"][0] == pytest.approx(0.5)

    def test_zero_weight_kernel_is_identity(self, rng):
        k = KernelSpec.of((0.0, REVERSE))
        s = make_state([0.5], [1.0])
        assert k.sample(s, rng) is s
        assert k.mixture(s) == {"identity": (1.0, Identity())}
        assert k.staying_mass(s) == 1.0

    def test_negative_weights_are_clamped(self):
        k = KernelSpec.of((lambda s: -2.0, REVERSE), (1.0, Identity()))
        np.testing.assert_allclose(k.probabilities(make_state([0.0], [1.0])), [0.0, 1.0])

    def test_refreshment_keys_distinguish_conditioning(self):
        assert Refreshment(CUBE2).key != Refreshment(CUBE2, exclude_current=True).key
        assert Refreshment(CUBE2).key == Refreshment(VelocitySpace(kind=VelocityKind.SIGNED_HYPERCUBE, d=2)).key


class TestStayingMass:
    def test_actions(self):
        s = make_state([0.0, 0.0], [1.0, -1.0])
        assert staying_probability(Identity(), s) == 1.0
        assert staying_probability(REVERSE, s) == 0.0
        assert staying_probability(Refreshment(CUBE2), s) == pytest.approx(0.25)
        assert staying_probability(Refreshment(CUBE2, exclude_current=True), s) == 0.0
        assert staying_probability(Refreshment(GAUSS1), make_state([0.0], [0.3])) == 0.0

    def test_unknown_action(self):
        with pytest.raises(StayingMassUnavailable):
            staying_probability("teleport", make_state([0.0], [1.0]))

    def test_map_fixing_the_state_stays(self):
        fixed = DeterministicMap(lambda s: s, "noop")
        assert staying_probability(fixed, make_state([1.0], [1.0])) == 1.0

    def test_excluded_refresh_moves(self, rng):
        s = make_state([0.0, 0.0], [1.0, 1.0])
        action = Refreshment(CUBE2, exclude_current=True)
        k = KernelSpec.of((1.0, action))
        for _ in range(100):
            assert not np.array_equal(k.sample(s, rng).y, s.y)


class TestTotalAndMinimal:
    def test_total_of_one_mechanism_is_itself(self, bps1):
        m = build_bps(bps1).mechanisms[0]
        assert total_mechanism([m]) is m

    def test_total_rate_and_kernel(self, bps1):
        bounce, refresh = build_bps(bps1).mechanisms
        total = total_mechanism([bounce, refresh])
        s = make_state([1.0], [2.0])
        assert total.rate_at(s) == pytest.approx(2.0 + 1.0)
        mix = total.kernel.mixture(s)
        assert mix["map:reflect"][0] == pytest.approx(2 / 3)
        assert isinstance(total.capability, AnalyticAffine)
        assert len(total.capability.terms) == 2

    def test_total_needs_a_mechanism(self):
        with pytest.raises(ValueError):
            total_mechanism([])

    def test_minimal_removes_hypercube_staying_mass(self):
        ch = build_zigzag(ZigZagSpec(potential=GaussianIsoPotential(2), refresh_rate=2.0))
        m = minimal_mechanism(list(ch.mechanisms))
        s = make_state([1.0, -0.5], [1.0, 1.0])
        flips = 1.0  # only coordinate 1 moves uphill
        assert m.rate_at(s) == pytest.approx(flips + 2.0 * (1 - 0.25))
        assert all(not isinstance(c.action, Identity) for c in m.kernel.components)
        assert any(isinstance(c.action, Refreshment) and c.action.exclude_current for c in m.kernel.components)
        assert isinstance(m.capability, DominatedBy)

    def test_minimal_of_pure_phantom_is_silent(self):
        phantom = constant_rate_mechanism(3.0, KernelSpec.identity(), "phantom")
        m = minimal_mechanism([phantom])
        assert m.rate_at(make_state([0.0], [1.0])) == 0.0


class TestThinning:
    def test_acceptance_probabilities(self):
        m = JumpMechanism(lambda s: abs(s.x[0]), KernelSpec.of((1.0, REVERSE)), label="abs")
        thin = thin_to_constant(m, 4.0)
        s = make_state([1.0], [1.0])
        assert thin.rate_at(s) == 4.0
        np.testing.assert_allclose(thin.kernel.probabilities(s), [0.25, 0.75])
        assert isinstance(thin.capability, AnalyticAffine)

    def test_violation_raises(self):
        m = JumpMechanism(lambda s: abs(s.x[0]), KernelSpec.of((1.0, REVERSE)))
        thin = thin_to_constant(m, 0.5)
        with pytest.raises(RateBoundViolated) as info:
            thin.kernel.probabilities(make_state([2.0], [1.0]))
        assert info.value.bound == 0.5

    def test_rejects_non_positive_bound(self):
        with pytest.raises(ValueError):
            thin_to_constant(constant_rate_mechanism(1.0, KernelSpec.identity()), 0.0)


class TestPhantomAndTruncation:
    def test_add_phantom_rate(self):
        m = constant_rate_mechanism(2.0, KernelSpec.of((1.0, REVERSE)))
        pair = add_phantom_rate(m, 0.5)
        assert len(pair) == 2
        assert pair[1].rate_at(make_state([0.0], [1.0])) == 0.5
        assert pair[1].kernel.staying_mass(make_state([0.0], [1.0])) == 1.0

    def test_constant_phantom_mechanism(self):
        m = JumpMechanism(lambda s: s.x[0] ** 2, KernelSpec.of((1.0, REVERSE)))
        aug = constant_phantom_mechanism(m)
        s = make_state([2.0], [1.0])
        assert aug.rate_at(s) == pytest.approx(5.0)
        assert aug.kernel.staying_mass(s) == pytest.approx(1 / 5)

    def test_truncate(self, bps1):
        bounce = build_bps(bps1).mechanisms[0]
        capped = truncate_rate(bounce, 1.5)
        assert capped.rate_at(make_state([3.0], [1.0])) == 1.5
        assert capped.rate_at(make_state([0.5], [1.0])) == pytest.approx(0.5)
        assert capped.capability == BoundedBy(1.5)
        assert truncate_rate(bounce, 0.0).rate_at(make_state([3.0], [1.0])) == 0.0


@given(st.floats(-20, 20), st.floats(1e-3, 2.0))
def test_smoothed_rate_sits_within_two_eps_below(t, eps):
    pot = GaussianIsoPotential(1)
    rate = smoothed_bps_rate(pot, eps)
    s = make_state([t], [1.0])
    exact = max(t, 0.0)
    smooth = rate(s)
    assert smooth <= exact + 1e-12
    assert exact - smooth <= 2 * eps + 1e-12


def test_smoothed_rate_needs_positive_eps():
    with pytest.raises(ValueError):
        smoothed_bps_rate(GaussianIsoPotential(1), 0.0)


class TestKernelExpectation:
    def test_refresh_second_moment(self):
        k = KernelSpec.of((1.0, Refreshment(GAUSS1)))
        value, err = kernel_expectation(k, lambda s: s.y[..., 0] ** 2, make_state([3.0], [0.2]))
        assert value == pytest.approx(1.0, rel=1e-10)
        assert err == 0.0

    def test_excluded_refresh_on_cube(self):
        cube1 = VelocitySpace(kind=VelocityKind.SIGNED_HYPERCUBE, d=1)
        k = KernelSpec.of((1.0, Refreshment(cube1, exclude_current=True)))
        value, _ = kernel_expectation(k, lambda s: s.y[..., 0], make_state([0.0], [1.0]))
        assert value == pytest.approx(-1.0)

    def test_mixture_of_map_and_identity(self):
        k = KernelSpec.of((1.0, REVERSE), (1.0, Identity()))
        value, _ = kernel_expectation(k, lambda s: s.y[..., 0] + 2.0, make_state([0.0], [1.0]))
        assert value == pytest.approx(0.5 * 1.0 + 0.5 * 3.0)


def test_constant_carries_its_value():
    fn = constant(2.5)
    assert fn(make_state([0.0], [1.0])) == 2.5
    assert fn.constant_value == 2.5
