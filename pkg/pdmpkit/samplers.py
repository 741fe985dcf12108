"""Concrete PDMP Monte Carlo samplers: Bouncy Particle Sampler and Zig-Zag."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from pdmpkit.engine import Characteristics
from pdmpkit.mechanisms import (
    AnalyticAffine,
    BoundedBy,
    DeterministicMap,
    DominatedBy,
    EventTimeCapability,
    JumpMechanism,
    KernelSpec,
    Numeric,
    Refreshment,
    constant_rate_mechanism,
    smoothed_bps_rate,
    thin_to_constant,
    total_mechanism,
    truncate_rate,
)
from pdmpkit.models.specs import BounceStrategy, BpsSpec, BpsVariant, ZigZagSpec
from pdmpkit.state_space import (
    FreeTransport,
    GaussianPotential,
    PhaseState,
    Potential,
    VelocitySpace,
    reflect,
)

logger = logging.getLogger(__name__)


# ── Kernel maps ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class GradientReflection:
    """Bounce: reflect y off the level set of U at x."""

    potential: Potential
    space: Optional[VelocitySpace] = None

    def __call__(self, state: PhaseState) -> PhaseState:
        return reflect(state, self.potential.gradient(state.x), self.space)


@dataclass(frozen=True)
class CoordinateFlip:
    """Flip the sign of velocity coordinate `index` (0-based)."""

    index: int

    def __call__(self, state: PhaseState) -> PhaseState:
        y = state.y.copy()
        y[self.index] = -y[self.index]
        return PhaseState(state.x, y)


def velocity_reversal(state: PhaseState) -> PhaseState:
    return PhaseState(state.x, -state.y)


# ── Rates ───────────────────────────────────────────────────────────


def bps_bounce_rate(potential: Potential) -> Callable[[PhaseState], float]:
    """<y, grad U(x)>_+."""

    def rate(state: PhaseState) -> float:
        return max(0.0, float(np.dot(state.y, potential.gradient(state.x))))

    return rate


def gaussian_bounce_capability(potential: Potential) -> Optional[AnalyticAffine]:
    """Along free transport <y, A(x + t y)> = <y, Ax> + t <y, Ay> when U is quadratic."""
    A = potential.quadratic_matrix
    if A is None:
        return None

    def a_fn(state: PhaseState) -> float:
        return float(state.y @ (A @ state.x))

    def b_fn(state: PhaseState) -> float:
        return float(state.y @ (A @ state.y))

    return AnalyticAffine.single(a_fn, b_fn)


def zigzag_rate(potential: Potential, i: int) -> Callable[[PhaseState], float]:
    """(y_i d_i U(x))_+."""

    def rate(state: PhaseState) -> float:
        return max(0.0, float(state.y[i] * potential.gradient(state.x)[i]))

    return rate


def zigzag_capability(potential: Potential, i: int) -> Optional[AnalyticAffine]:
    A = potential.quadratic_matrix
    if A is None:
        return None

    def a_fn(state: PhaseState) -> float:
        return float(state.y[i] * (A[i] @ state.x))

    def b_fn(state: PhaseState) -> float:
        return float(state.y[i] * (A[i] @ state.y))

    return AnalyticAffine.single(a_fn, b_fn)


# ── Builders ────────────────────────────────────────────────────────


def _exact_bounce_capability(spec: BpsSpec) -> EventTimeCapability:
    if spec.bounce_strategy == BounceStrategy.BOUNDED:
        return BoundedBy(spec.bounce_bound)
    if spec.bounce_strategy == BounceStrategy.NUMERIC:
        return Numeric()
    return gaussian_bounce_capability(spec.potential) or Numeric()


def bounce_mechanism(spec: BpsSpec) -> JumpMechanism:
    """Mechanism 1 of the BPS for the requested variant."""
    kernel = KernelSpec.of(
        (1.0, DeterministicMap(GradientReflection(spec.potential, spec.velocity_space), "reflect"))
    )
    exact_cap = _exact_bounce_capability(spec)
    exact = JumpMechanism(bps_bounce_rate(spec.potential), kernel, exact_cap, "bounce")

    if spec.variant == BpsVariant.TRUNCATED:
        m = truncate_rate(exact, spec.cap)
    elif spec.variant == BpsVariant.SMOOTHED:
        cap: EventTimeCapability = exact_cap
        if isinstance(exact_cap, AnalyticAffine):
            cap = DominatedBy(exact_cap)
        m = JumpMechanism(smoothed_bps_rate(spec.potential, spec.eps), kernel, cap, "bounce_smoothed")
    else:
        m = exact

    if spec.lambda_star is not None:
        m = thin_to_constant(m, spec.lambda_star)
    return m


def refresh_mechanism(space: VelocitySpace, rate: float) -> JumpMechanism:
    return constant_rate_mechanism(rate, KernelSpec.of((1.0, Refreshment(space))), "refresh")


def build_bps(spec: BpsSpec) -> Characteristics:
    """Two mechanisms: bounce (type 1) and refreshment (type 2)."""
    ch = Characteristics(
        FreeTransport(),
        (bounce_mechanism(spec), refresh_mechanism(spec.velocity_space, spec.lambda_c)),
    )
    logger.debug(
        f"[BPS] Built d={spec.d} variant={spec.variant.value} "
        f"bounce capability={type(ch.mechanisms[0].capability).__name__}"
    )
    return ch


def build_merged_bps(spec: BpsSpec) -> Characteristics:
    """Single-mechanism BPS with rate <grad U, y>_+ + lambda_c."""
    bps = build_bps(spec)
    return Characteristics(bps.flow, (total_mechanism(list(bps.mechanisms)),))


def build_zigzag(spec: ZigZagSpec) -> Characteristics:
    """d flip mechanisms, plus an optional refreshment mechanism last.

    Mechanism i flips y_i; with `full_reversal` every mechanism reverses
    the whole velocity instead.
    """
    mechanisms = []
    for i in range(spec.d):
        if spec.full_reversal:
            action = DeterministicMap(velocity_reversal, "reverse")
        else:
            action = DeterministicMap(CoordinateFlip(i), f"flip_{i + 1}")
        cap = zigzag_capability(spec.potential, i) or Numeric()
        mechanisms.append(
            JumpMechanism(zigzag_rate(spec.potential, i), KernelSpec.of((1.0, action)), cap, f"flip_{i + 1}")
        )
    if spec.refresh_rate is not None:
        mechanisms.append(refresh_mechanism(spec.velocity_space, spec.refresh_rate))
    return Characteristics(FreeTransport(), tuple(mechanisms))


# ── Initial states and candidate measures ───────────────────────────


def default_initial_state(
    space: VelocitySpace,
    rng: np.random.Generator,
    x0: Optional[np.ndarray] = None,
) -> PhaseState:
    """x = x0 (zero by default), y drawn from the refreshment law."""
    x = np.zeros(space.d) if x0 is None else np.array(x0, dtype=float)
    return PhaseState(x, space.sample(rng))


class GaussianProductCandidate:
    """I.i.d. draws from N(0, scale * A^-1) x mu_nu.

    scale = 1 is the invariant law of the Gaussian BPS and Zig-Zag; any
    other scale gives a deliberately wrong candidate.
    """

    def __init__(self, potential: GaussianPotential, space: VelocitySpace, variance_scale: float = 1.0):
        if potential.quadratic_matrix is None:
            raise ValueError("a Gaussian product candidate needs a quadratic potential")
        self.space = space
        self.variance_scale = float(variance_scale)
        cov = np.linalg.inv(potential.quadratic_matrix) * self.variance_scale
        self._chol = np.linalg.cholesky(cov)

    def __call__(self, rng: np.random.Generator) -> PhaseState:
        x = self._chol @ rng.standard_normal(self.space.d)
        return PhaseState(x, self.space.sample(rng))


def gaussian_product_candidate(
    potential: GaussianPotential, space: VelocitySpace, variance_scale: float = 1.0
) -> GaussianProductCandidate:
    return GaussianProductCandidate(potential, space, variance_scale)
