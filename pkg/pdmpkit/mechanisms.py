"""Jump mechanisms (rate, kernel) and their algebra.

A mechanism pairs a homogeneous jump rate with a finite mixture kernel
whose components are deterministic maps, velocity refreshments or the
identity. Every mechanism also carries an event-time capability that
tells the engine how to invert its integrated hazard along the flow.

Transforms provided here: total and minimal mechanisms of a list,
constant-rate thinning, phantom-rate augmentation, rate truncation and
the smoothed bounce rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from pdmpkit.errors import RateBoundViolated, StayingMassUnavailable
from pdmpkit.state_space import (
    MEMBERSHIP_TOL,
    PhaseState,
    Potential,
    VelocitySpace,
    states_close,
)

logger = logging.getLogger(__name__)

RateFn = Callable[[PhaseState], float]
StateFn = Callable[[PhaseState], float]


def constant(value: float) -> StateFn:
    """A state function that ignores the state."""
    value = float(value)

    def _const(state: PhaseState) -> float:
        return value

    _const.constant_value = value
    return _const


def _constant_value(fn) -> Optional[float]:
    return getattr(fn, "constant_value", None)


# ── Event-time capabilities ─────────────────────────────────────────


@dataclass(frozen=True)
class AnalyticAffine:
    """The rate along the flow is a sum of positive parts of affine terms.

    lambda(phi_t(s)) = sum_k (a_k(s) + b_k(s) t)_+ for every t >= 0.
    """

    terms: tuple[tuple[StateFn, StateFn], ...]

    @classmethod
    def single(cls, a_fn: StateFn, b_fn: StateFn) -> "AnalyticAffine":
        return cls(((a_fn, b_fn),))

    def coefficients(self, state: PhaseState) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([float(a_fn(state)) for a_fn, _ in self.terms])
        b = np.array([float(b_fn(state)) for _, b_fn in self.terms])
        return a, b

    def rate_along(self, state: PhaseState, t: float) -> float:
        a, b = self.coefficients(state)
        return float(np.sum(np.maximum(a + b * t, 0.0)))


@dataclass(frozen=True)
class BoundedBy:
    """The rate never exceeds a constant; events are found by thinning."""

    bound: float


@dataclass(frozen=True)
class DominatedBy:
    """The rate is dominated by an affine envelope; events are found by thinning."""

    envelope: AnalyticAffine


@dataclass(frozen=True)
class Numeric:
    """No structure is known; the hazard is integrated and inverted numerically."""


EventTimeCapability = Union[AnalyticAffine, BoundedBy, DominatedBy, Numeric]


# ── Kernels ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DeterministicMap:
    """Jump to f(s). Maps are matched across kernels by `label`."""

    f: Callable[[PhaseState], PhaseState]
    label: str

    @property
    def key(self) -> str:
        return f"map:{self.label}"


@dataclass(frozen=True)
class Refreshment:
    """Keep x and redraw y from the space's refreshment law.

    With `exclude_current` the draw is conditioned on y' != y, which only
    differs from the plain law when the law has an atom at y.
    """

    space: VelocitySpace
    exclude_current: bool = False

    @property
    def key(self) -> str:
        suffix = ":moving" if self.exclude_current else ""
        return f"refresh:{self.space.kind.value}({self.space.d},{self.space.radius}){suffix}"


@dataclass(frozen=True)
class Identity:
    """Stay at the current state (a phantom jump)."""

    @property
    def key(self) -> str:
        return "identity"


Action = Union[DeterministicMap, Refreshment, Identity]


def apply_action(action: Action, state: PhaseState, rng: np.random.Generator) -> PhaseState:
    """Sample the post-jump state of a single kernel component."""
    if isinstance(action, Identity):
        return state
    if isinstance(action, DeterministicMap):
        return action.f(state)
    if isinstance(action, Refreshment):
        y = action.space.sample(rng)
        if action.exclude_current and action.space.atom_mass(state.y) > 0.0:
            while np.array_equal(y, state.y):
                y = action.space.sample(rng)
        return PhaseState(state.x, y)
    raise TypeError(f"unsupported kernel action {action!r}")


def staying_probability(action: Action, state: PhaseState) -> float:
    """Probability that one component returns exactly `state`."""
    if isinstance(action, Identity):
        return 1.0
    if isinstance(action, DeterministicMap):
        return 1.0 if states_close(action.f(state), state, MEMBERSHIP_TOL) else 0.0
    if isinstance(action, Refreshment):
        if action.exclude_current:
            return 0.0
        return action.space.atom_mass(state.y)
    raise StayingMassUnavailable(f"cannot compute the staying mass of {action!r}")


@dataclass(frozen=True)
class KernelComponent:
    weight: StateFn
    action: Action


@dataclass(frozen=True)
class KernelSpec:
    """Finite mixture kernel; weights are normalised when sampled.

    A zero total weight at a state makes the kernel the identity there.
    """

    components: tuple[KernelComponent, ...]

    @classmethod
    def of(cls, *parts: tuple[Union[StateFn, float], Action]) -> "KernelSpec":
        comps = []
        for weight, action in parts:
            if not callable(weight):
                weight = constant(weight)
            comps.append(KernelComponent(weight, action))
        return cls(tuple(comps))

    @classmethod
    def identity(cls) -> "KernelSpec":
        return cls.of((1.0, Identity()))

    def weights(self, state: PhaseState) -> np.ndarray:
        return np.array([max(0.0, float(c.weight(state))) for c in self.components])

    def probabilities(self, state: PhaseState) -> np.ndarray:
        """Normalised mixture weights; all zero when the total weight vanishes."""
        w = self.weights(state)
        total = w.sum()
        if total <= 0.0:
            return np.zeros_like(w)
        return w / total

    def mixture(self, state: PhaseState) -> dict[str, tuple[float, Action]]:
        """Normalised weights keyed by action key (duplicate keys are merged)."""
        out: dict[str, tuple[float, Action]] = {}
        probs = self.probabilities(state)
        if probs.sum() <= 0.0:
            return {"identity": (1.0, Identity())}
        for p, comp in zip(probs, self.components):
            key = comp.action.key
            prev = out.get(key, (0.0, comp.action))[0]
            out[key] = (prev + float(p), comp.action)
        return out

    def sample(self, state: PhaseState, rng: np.random.Generator) -> PhaseState:
        probs = self.probabilities(state)
        if probs.sum() <= 0.0:
            return state
        idx = _choose(probs, rng)
        return apply_action(self.components[idx].action, state, rng)

    def staying_mass(self, state: PhaseState) -> float:
        """Q(s, {s})."""
        probs = self.probabilities(state)
        if probs.sum() <= 0.0:
            return 1.0
        return float(
            sum(p * staying_probability(c.action, state) for p, c in zip(probs, self.components) if p > 0.0)
        )


def _choose(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random() * probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


# ── Mechanisms ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class JumpMechanism:
    """A (rate, kernel) pair with an event-time capability."""

    rate: RateFn
    kernel: KernelSpec
    capability: EventTimeCapability = field(default_factory=Numeric)
    label: str = ""

    def rate_at(self, state: PhaseState) -> float:
        return max(0.0, float(self.rate(state)))


def constant_rate_mechanism(rate: float, kernel: KernelSpec, label: str = "") -> JumpMechanism:
    """Mechanism with a constant rate; its hazard inverts in closed form."""
    fn = constant(rate)
    return JumpMechanism(fn, kernel, AnalyticAffine.single(fn, constant(0.0)), label)


def _summed_capability(caps: list[EventTimeCapability]) -> EventTimeCapability:
    if all(isinstance(c, AnalyticAffine) for c in caps):
        return AnalyticAffine(tuple(t for c in caps for t in c.terms))
    if all(isinstance(c, (AnalyticAffine, DominatedBy)) for c in caps):
        envelopes = [c if isinstance(c, AnalyticAffine) else c.envelope for c in caps]
        return DominatedBy(AnalyticAffine(tuple(t for e in envelopes for t in e.terms)))
    if all(isinstance(c, BoundedBy) for c in caps):
        return BoundedBy(sum(c.bound for c in caps))
    return Numeric()


def _dominated_capability(cap: EventTimeCapability) -> EventTimeCapability:
    """Capability of a rate known to sit below a rate with capability `cap`."""
    if isinstance(cap, AnalyticAffine):
        return DominatedBy(cap)
    return cap


def total_mechanism(ms: list[JumpMechanism]) -> JumpMechanism:
    """Superpose mechanisms: summed rate, rate-weighted kernel mixture."""
    if not ms:
        raise ValueError("total_mechanism needs at least one mechanism")
    if len(ms) == 1:
        return ms[0]
    mechanisms = tuple(ms)

    def rate(state: PhaseState) -> float:
        return sum(m.rate_at(state) for m in mechanisms)

    components = []
    for m in mechanisms:
        for c_idx, comp in enumerate(m.kernel.components):
            components.append(KernelComponent(_rate_weighted(m, c_idx), comp.action))

    label = "+".join(m.label or f"m{i + 1}" for i, m in enumerate(mechanisms))
    return JumpMechanism(
        rate,
        KernelSpec(tuple(components)),
        _summed_capability([m.capability for m in mechanisms]),
        label,
    )


def _rate_weighted(m: JumpMechanism, c_idx: int) -> StateFn:
    def weight(state: PhaseState) -> float:
        lam = m.rate_at(state)
        if lam <= 0.0:
            return 0.0
        return lam * float(m.kernel.probabilities(state)[c_idx])

    return weight


def minimal_mechanism(ms: list[JumpMechanism]) -> JumpMechanism:
    """Total mechanism with all staying mass removed.

    lambda_m(s) = sum_i lambda_i(s) Q_i(s, M \\ {s}); the kernel keeps only
    the moving part. Hypercube refreshment components are replaced by
    refreshments conditioned to move.
    """
    base = total_mechanism(ms)

    def moving_weight(comp: KernelComponent) -> StateFn:
        def weight(state: PhaseState) -> float:
            w = max(0.0, float(comp.weight(state)))
            if w <= 0.0:
                return 0.0
            return w * (1.0 - staying_probability(comp.action, state))

        return weight

    components = []
    for comp in base.kernel.components:
        if isinstance(comp.action, Identity):
            continue
        action = comp.action
        if isinstance(action, Refreshment):
            action = Refreshment(action.space, exclude_current=True)
        components.append(KernelComponent(moving_weight(comp), action))
    kernel = KernelSpec(tuple(components)) if components else KernelSpec.identity()

    def rate(state: PhaseState) -> float:
        lam = base.rate_at(state)
        if lam <= 0.0:
            return 0.0
        return lam * (1.0 - base.kernel.staying_mass(state))

    return JumpMechanism(rate, kernel, _dominated_capability(base.capability), f"min({base.label})")


def thin_to_constant(m: JumpMechanism, lambda_star: float) -> JumpMechanism:
    """Constant-rate mechanism that accepts Q with probability lambda/lambda_star.

    The rejected proposals are phantom jumps. Raises RateBoundViolated when
    the kernel is queried at a state whose rate exceeds lambda_star.
    """
    if lambda_star <= 0.0:
        raise ValueError("lambda_star must be positive")
    lambda_star = float(lambda_star)

    def acceptance(state: PhaseState) -> float:
        lam = m.rate_at(state)
        if lam > lambda_star:
            raise RateBoundViolated(lam, lambda_star)
        return lam / lambda_star

    def accepted_weight(c_idx: int) -> StateFn:
        def weight(state: PhaseState) -> float:
            return acceptance(state) * float(m.kernel.probabilities(state)[c_idx])

        return weight

    def rejected_weight(state: PhaseState) -> float:
        acc = acceptance(state)
        if m.kernel.probabilities(state).sum() <= 0.0:
            return 1.0
        return 1.0 - acc

    components = [KernelComponent(accepted_weight(i), c.action) for i, c in enumerate(m.kernel.components)]
    components.append(KernelComponent(rejected_weight, Identity()))
    return constant_rate_mechanism(lambda_star, KernelSpec(tuple(components)), f"thin({m.label})")


def add_phantom_rate(
    m: JumpMechanism,
    lambda_prime: Union[RateFn, float],
    capability: Optional[EventTimeCapability] = None,
) -> list[JumpMechanism]:
    """[m, (lambda', identity)]: same process law, extra phantom events."""
    if not callable(lambda_prime):
        return [m, constant_rate_mechanism(lambda_prime, KernelSpec.identity(), "phantom")]
    return [m, JumpMechanism(lambda_prime, KernelSpec.identity(), capability or Numeric(), "phantom")]


def constant_phantom_mechanism(m: JumpMechanism) -> JumpMechanism:
    """Rate lambda + 1 with kernel lambda/(1+lambda) Q + 1/(1+lambda) delta."""
    return total_mechanism(add_phantom_rate(m, 1.0))


def truncate_rate(m: JumpMechanism, cap: float) -> JumpMechanism:
    """Cap the rate at `cap`; the kernel is unchanged.

    A cap of zero (or below) switches the mechanism off.
    """
    if cap <= 0.0:
        zero = constant(0.0)
        return JumpMechanism(zero, m.kernel, AnalyticAffine.single(zero, zero), f"trunc({m.label},0)")
    cap = float(cap)

    def rate(state: PhaseState) -> float:
        return min(m.rate_at(state), cap)

    return JumpMechanism(rate, m.kernel, BoundedBy(cap), f"trunc({m.label},{cap:g})")


def smoothed_bps_rate(potential: Potential, eps: float) -> RateFn:
    """Continuously differentiable bounce rate within 2 eps of <y, grad U>_+.

    With t = <y, grad U(x)>: (t - eps)_+^2 / (eps + (t - eps)_+).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    def rate(state: PhaseState) -> float:
        t = float(np.dot(state.y, potential.gradient(state.x)))
        excess = max(t - eps, 0.0)
        return excess * excess / (eps + excess)

    return rate


def kernel_expectation(
    kernel: KernelSpec,
    f: Callable[[PhaseState], float],
    state: PhaseState,
    n_nodes: int = 64,
) -> tuple[float, float]:
    """(Qf)(s) with the recorded error of any inner rule used.

    `f` must accept batched states (rows of x and y) for refreshment
    components, which are integrated in one call over the velocity nodes.
    """
    probs = kernel.probabilities(state)
    if probs.sum() <= 0.0:
        return float(f(state)), 0.0
    value, err_sq = 0.0, 0.0
    for p, comp in zip(probs, kernel.components):
        if p <= 0.0:
            continue
        v, e = _action_expectation(comp.action, f, state, n_nodes)
        value += p * v
        err_sq += (p * e) ** 2
    return value, float(np.sqrt(err_sq))


def _action_expectation(action: Action, f, state: PhaseState, n_nodes: int) -> tuple[float, float]:
    if isinstance(action, Identity):
        return float(f(state)), 0.0
    if isinstance(action, DeterministicMap):
        return float(f(action.f(state))), 0.0
    if isinstance(action, Refreshment):
        x = state.x

        def on_nodes(ys: np.ndarray) -> np.ndarray:
            return np.asarray(f(PhaseState(np.broadcast_to(x, ys.shape), ys)), dtype=float)

        mean, err = action.space.expectation(on_nodes, n_nodes=n_nodes)
        if action.exclude_current:
            atom = action.space.atom_mass(state.y)
            if atom > 0.0:
                mean = (mean - atom * float(f(state))) / (1.0 - atom)
                err = err / (1.0 - atom)
        return mean, err
    raise TypeError(f"unsupported kernel action {action!r}")
