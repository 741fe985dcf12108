"""Tests for hazard inversion: closed form, numeric and thinning strategies."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pdmpkit.engine import (
    affine_hazard,
    integrated_hazard,
    invert_affine,
    invert_affine_terms,
    invert_hazard,
    invert_numeric,
    sample_event_time,
)
from pdmpkit.errors import NumericInversionFailed, RateBoundViolated
from pdmpkit.mechanisms import (
    AnalyticAffine,
    BoundedBy,
    DominatedBy,
    JumpMechanism,
    KernelSpec,
    Numeric,
    constant,
    smoothed_bps_rate,
)
from pdmpkit.state_space import FreeTransport, GaussianIsoPotential, make_state

FLOW = FreeTransport()
# x runs at unit speed from 0, so a rate written in x is a rate in time
ORIGIN = make_state([0.0], [1.0])


def coefficients(bound: float):
    return st.floats(-bound, bound).map(lambda v: round(v, 3))


def affine_in_time(a: float, b: float, capability=None) -> JumpMechanism:
    return JumpMechanism(
        lambda s: max(a + b * s.x[0], 0.0),
        KernelSpec.identity(),
        capability or Numeric(),
        "affine",
    )


class TestInvertAffine:
    @pytest.mark.parametrize(
        "a, b, E, expected",
        [
            (2.0, 0.0, 4.0, 2.0),  # constant rate
            (0.0, 0.0, 1.0, math.inf),  # zero rate
            (-1.0, 0.0, 1.0, math.inf),
            (1.0, 2.0, 2.0, 1.0),  # t + t^2 = 2
            (-1.0, 1.0, 0.5, 2.0),  # waits until the rate turns positive
            (2.0, -1.0, 1.5, 1.0),  # 2t - t^2/2 = 1.5 before the root
            (2.0, -1.0, 2.5, math.inf),  # total hazard is only 2
            (-1.0, -1.0, 0.1, math.inf),
        ],
    )
    def test_cases(self, a, b, E, expected):
        assert invert_affine(a, b, E) == pytest.approx(expected, rel=1e-14)

    @given(coefficients(5), coefficients(5), st.floats(1e-3, 20))
    def test_hazard_at_inverse_is_E(self, a, b, E):
        h = invert_affine(a, b, E)
        if math.isfinite(h):
            assert affine_hazard(np.array([a]), np.array([b]), h) == pytest.approx(E, rel=1e-9, abs=1e-12)
        else:
            assert b <= 0.0
            assert affine_hazard(np.array([a]), np.array([b]), 1e6) < E + 1e-9

    @given(
        st.lists(coefficients(3), min_size=2, max_size=4),
        st.lists(coefficients(3), min_size=4, max_size=4),
        st.floats(1e-3, 10),
    )
    def test_multi_term_hazard_at_inverse_is_E(self, a, b, E):
        a = np.array(a)
        b = np.array(b[: len(a)])
        h = invert_affine_terms(a, b, E)
        if math.isfinite(h):
            assert affine_hazard(a, b, h) == pytest.approx(E, rel=1e-8, abs=1e-10)
        else:
            assert affine_hazard(a, b, 1e6) < E + 1e-8


def _random_triples(n: int, seed: int):
    """(a, b, E) covering every sign case, away from the ill-conditioned plateau edge."""
    rng = np.random.default_rng(seed)
    triples = []
    while len(triples) < n:
        case = len(triples) % 5
        a, b = rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)
        E = rng.exponential()
        if case == 0:
            triples.append((a, 0.0, E))
        elif case == 1:
            triples.append((a, b, E))
        elif case == 2:
            triples.append((-a, b, E))
        elif case == 3:
            plateau = a * a / (2 * b)
            if E < 0.9 * plateau or E > 1.1 * plateau:
                triples.append((a, -b, E))
        else:
            triples.append((-a, -b, E))
    return triples


def _check_agreement(triples):
    for a, b, E in triples:
        closed = invert_affine(a, b, E)
        numeric = invert_numeric(affine_in_time(a, b), ORIGIN, FLOW, E)
        if math.isinf(closed):
            assert math.isinf(numeric), (a, b, E)
        else:
            assert numeric == pytest.approx(closed, rel=1e-8), (a, b, E)


def test_numeric_agrees_with_closed_form():
    _check_agreement(_random_triples(100, seed=1))


@pytest.mark.slow
def test_numeric_agrees_with_closed_form_full():
    _check_agreement(_random_triples(1000, seed=2))


class TestNumeric:
    def test_plateau_gives_infinity(self):
        m = JumpMechanism(lambda s: max(1.0 - s.x[0], 0.0), KernelSpec.identity())
        assert invert_numeric(m, ORIGIN, FLOW, 5.0) == math.inf

    def test_slowly_growing_hazard_fails(self):
        m = JumpMechanism(lambda s: 1e-13, KernelSpec.identity())
        with pytest.raises(NumericInversionFailed):
            invert_numeric(m, ORIGIN, FLOW, 10.0)

    def test_integrated_hazard_matches_closed_form(self):
        affine = affine_in_time(1.0, -0.5, AnalyticAffine.single(constant(1.0), constant(-0.5)))
        numeric = affine_in_time(1.0, -0.5)
        for h in (0.5, 2.0, 5.0):
            assert integrated_hazard(numeric, ORIGIN, FLOW, h) == pytest.approx(
                integrated_hazard(affine, ORIGIN, FLOW, h), rel=1e-10
            )
        assert integrated_hazard(numeric, ORIGIN, FLOW, 0.0) == 0.0

    def test_invert_hazard_dispatch(self):
        affine = affine_in_time(1.0, 1.0, AnalyticAffine.single(constant(1.0), constant(1.0)))
        numeric = affine_in_time(1.0, 1.0)
        assert invert_hazard(affine, ORIGIN, FLOW, 1.5) == pytest.approx(1.0)
        assert invert_hazard(numeric, ORIGIN, FLOW, 1.5) == pytest.approx(1.0, rel=1e-8)


class TestThinning:
    def test_bounded_thinning_reproduces_constant_rate(self, rng):
        m = JumpMechanism(constant(2.0), KernelSpec.identity(), BoundedBy(5.0))
        times = [sample_event_time(m, ORIGIN, FLOW, rng.standard_exponential(), rng) for _ in range(3000)]
        assert stats.kstest(times, stats.expon(scale=0.5).cdf).pvalue > 0.01

    def test_bounded_thinning_flags_violations(self, rng):
        m = JumpMechanism(lambda s: 10.0 + s.x[0], KernelSpec.identity(), BoundedBy(5.0))
        with pytest.raises(RateBoundViolated):
            sample_event_time(m, ORIGIN, FLOW, 0.1, rng)

    def test_thinning_needs_a_stream(self):
        m = JumpMechanism(constant(2.0), KernelSpec.identity(), BoundedBy(5.0))
        with pytest.raises(ValueError):
            sample_event_time(m, ORIGIN, FLOW, 1.0)

    def test_envelope_thinning_matches_numeric_inversion(self, rng):
        pot = GaussianIsoPotential(1)
        envelope = AnalyticAffine.single(lambda s: float(s.y @ s.x), lambda s: float(s.y @ s.y))
        rate = smoothed_bps_rate(pot, 0.3)
        thinned = JumpMechanism(rate, KernelSpec.identity(), DominatedBy(envelope))
        exact = JumpMechanism(rate, KernelSpec.identity(), Numeric())
        start = make_state([-0.5], [1.0])
        a = [sample_event_time(thinned, start, FLOW, rng.standard_exponential(), rng) for _ in range(2000)]
        b = [invert_numeric(exact, start, FLOW, rng.standard_exponential()) for _ in range(2000)]
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_affine_capability_uses_closed_form(self):
        m = affine_in_time(0.0, 2.0, AnalyticAffine.single(constant(0.0), constant(2.0)))
        assert sample_event_time(m, ORIGIN, FLOW, 1.0) == pytest.approx(1.0)
