"""Phase space of velocity-jump PDMPs: velocity spaces, potentials, flows.

A state is a pair (x, y) in R^d x V. Positions are dense float vectors;
velocities live in one of four shipped velocity spaces, each carrying its
canonical refreshment distribution.
"""

from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from enum import Enum
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from pydantic import BaseModel, ConfigDict, Field

from pdmpkit.errors import KernelExpectationUnavailable
from pdmpkit.utils.rng import stream

logger = logging.getLogger(__name__)

ZERO_GRADIENT_TOL = 1e-14
MEMBERSHIP_TOL = 1e-12
INNER_RULE_NODES = 64
_INNER_RULE_SEED = 0x5EED


# ── Velocity spaces ─────────────────────────────────────────────────


class VelocityKind(str, Enum):
    UNIT_SPHERE = "unit_sphere"
    STD_GAUSSIAN = "std_gaussian"
    SIGNED_HYPERCUBE = "signed_hypercube"
    BALL = "ball"


class VelocitySpace(BaseModel):
    """A velocity set V in R^d together with its refreshment law mu_nu."""

    model_config = ConfigDict(frozen=True)

    kind: VelocityKind = Field(description="Which velocity set")
    d: int = Field(gt=0, description="Dimension")
    radius: float = Field(default=1.0, gt=0, description="Radius, used by the ball only")

    def contains(self, y: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        """Membership predicate of V."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.d,) or not np.all(np.isfinite(y)):
            return False
        if self.kind == VelocityKind.UNIT_SPHERE:
            return abs(float(np.linalg.norm(y)) - 1.0) <= tol
        if self.kind == VelocityKind.SIGNED_HYPERCUBE:
            return bool(np.all(np.abs(np.abs(y) - 1.0) <= tol))
        if self.kind == VelocityKind.BALL:
            return float(np.linalg.norm(y)) <= self.radius + tol
        return True

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from mu_nu."""
        if self.kind == VelocityKind.STD_GAUSSIAN:
            return rng.standard_normal(self.d)
        if self.kind == VelocityKind.SIGNED_HYPERCUBE:
            return np.where(rng.random(self.d) < 0.5, -1.0, 1.0)
        direction = rng.standard_normal(self.d)
        norm = float(np.linalg.norm(direction))
        while norm == 0.0:
            direction = rng.standard_normal(self.d)
            norm = float(np.linalg.norm(direction))
        direction = direction / norm
        if self.kind == VelocityKind.UNIT_SPHERE:
            return direction
        return direction * self.radius * rng.random() ** (1.0 / self.d)

    def normalize(self, y: np.ndarray) -> np.ndarray:
        """Project a velocity back onto V after floating-point drift."""
        if self.kind == VelocityKind.UNIT_SPHERE:
            norm = float(np.linalg.norm(y))
            return y / norm if norm > 0.0 else y
        return y

    def atom_mass(self, y: np.ndarray) -> float:
        """mu_nu({y}): 2^-d on hypercube corners, zero for the diffuse laws."""
        if self.kind == VelocityKind.SIGNED_HYPERCUBE and self.contains(y):
            return 2.0 ** (-self.d)
        if self.kind == VelocityKind.UNIT_SPHERE and self.d == 1:
            return 0.5 if self.contains(y) else 0.0
        return 0.0

    @property
    def speed_bound(self) -> float:
        """sup of |y| over V."""
        if self.kind == VelocityKind.UNIT_SPHERE:
            return 1.0
        if self.kind == VelocityKind.SIGNED_HYPERCUBE:
            return float(np.sqrt(self.d))
        if self.kind == VelocityKind.BALL:
            return self.radius
        return float("inf")

    def expectation(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        n_nodes: int = INNER_RULE_NODES,
        allow_monte_carlo: bool = True,
    ) -> tuple[float, float]:
        """Integrate `fn` against mu_nu; returns (value, recorded error).

        `fn` receives an (n, d) array of velocities and returns n values.
        Exact or Gaussian rules report zero error; the fixed-seed Monte
        Carlo fallback reports its standard error.
        """
        nodes, weights, exact = _inner_rule(self, n_nodes)
        if not exact and not allow_monte_carlo:
            raise KernelExpectationUnavailable(f"no deterministic rule for {self.kind.value}({self.d})")
        values = np.asarray(fn(nodes), dtype=float)
        if values.shape != (len(nodes),):
            raise KernelExpectationUnavailable(
                f"integrand returned shape {values.shape} for {len(nodes)} velocity nodes"
            )
        if exact:
            return float(np.dot(weights, values)), 0.0
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


@lru_cache(maxsize=64)
def _inner_rule(space: VelocitySpace, n_nodes: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """(nodes, weights, exact) for integrating against mu_nu."""
    if space.kind == VelocityKind.SIGNED_HYPERCUBE and space.d <= 12:
        nodes = np.array(list(itertools.product((-1.0, 1.0), repeat=space.d)))
        return nodes, np.full(len(nodes), 2.0 ** (-space.d)), True
    if space.kind == VelocityKind.UNIT_SPHERE and space.d == 1:
        return np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]), True
    if space.kind == VelocityKind.UNIT_SPHERE and space.d == 2:
        theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
        return np.column_stack([np.cos(theta), np.sin(theta)]), np.full(n_nodes, 1.0 / n_nodes), True
    if space.kind == VelocityKind.STD_GAUSSIAN and space.d <= 3:
        per_axis = max(2, int(round(n_nodes ** (1.0 / space.d))))
        x, w = hermegauss(per_axis)
        w = w / w.sum()
        nodes = np.array(list(itertools.product(x, repeat=space.d)))
        weights = np.array([np.prod(c) for c in itertools.product(w, repeat=space.d)])
        return nodes, weights, True
    rng = stream(_INNER_RULE_SEED, space.d, list(VelocityKind).index(space.kind))
    draws = np.stack([space.sample(rng) for _ in range(n_nodes)])
    logger.debug(f"[VelocitySpace] Monte Carlo inner rule for {space.kind.value}({space.d})")
    return draws, np.full(n_nodes, 1.0 / n_nodes), False


def refresh_sample(space: VelocitySpace, rng: np.random.Generator) -> np.ndarray:
    """Draw a fresh velocity from the space's refreshment law."""
    return space.sample(rng)


# ── States ──────────────────────────────────────────────────────────


class PhaseState(NamedTuple):
    """A point (x, y) of R^d x V. Arrays are never mutated in place."""

    x: np.ndarray
    y: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


def make_state(x, y) -> PhaseState:
    return PhaseState(np.array(x, dtype=float).reshape(-1), np.array(y, dtype=float).reshape(-1))


def states_close(a: PhaseState, b: PhaseState, tol: float = MEMBERSHIP_TOL) -> bool:
    """True when two states agree to `tol` in max-norm."""
    return bool(
        np.max(np.abs(a.x - b.x), initial=0.0) < tol and np.max(np.abs(a.y - b.y), initial=0.0) < tol
    )


# ── Potentials ──────────────────────────────────────────────────────


class Potential(ABC):
    """Potential U of a target density proportional to exp(-U).

    Methods accept a single position of shape (d,) or a batch (..., d).
    """

    d: int

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hessian_action(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        ...

    @property
    def quadratic_matrix(self) -> Optional[np.ndarray]:
        """A when U(x) = <x, Ax>/2, else None."""
        return None

    @property
    def lipschitz_gradient(self) -> Optional[float]:
        """A global Lipschitz constant of grad U when one exists."""
        return None


class GaussianPotential(Potential):
    """Anisotropic Gaussian U(x) = <x, Ax>/2 with A symmetric positive definite."""

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"precision matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ValueError("precision matrix must be symmetric")
        np.linalg.cholesky(a)
        self.A = a
        self.d = a.shape[0]
        self._lipschitz = float(np.max(np.linalg.eigvalsh(a)))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * (x @ self.A), axis=-1)

    def gradient(self, x):
        return np.asarray(x, dtype=float) @ self.A

    def hessian_action(self, x, v):
        return np.asarray(v, dtype=float) @ self.A

    @property
    def quadratic_matrix(self):
        return self.A

    @property
    def lipschitz_gradient(self):
        return self._lipschitz


class GaussianIsoPotential(GaussianPotential):
    """Isotropic Gaussian U(x) = |x|^2/2; the gradient is x itself."""

    def __init__(self, d: int):
        super().__init__(np.eye(d))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    def gradient(self, x):
        return np.array(x, dtype=float)

    def hessian_action(self, x, v):
        return np.array(v, dtype=float)


class DoubleWellPotential(Potential):
    """One-dimensional double well U(x) = x^4/4 - x^2/2."""

    d = 1

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(0.25 * x**4 - 0.5 * x**2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return x**3 - x

    def hessian_action(self, x, v):
        x = np.asarray(x, dtype=float)
        return (3.0 * x**2 - 1.0) * np.asarray(v, dtype=float)


# ── Flows ───────────────────────────────────────────────────────────


class Flow(ABC):
    """Deterministic differential flow on the phase space."""

    @abstractmethod
    def advance(self, state: PhaseState, h: float) -> PhaseState:
        ...

    @abstractmethod
    def advance_arrays(self, x: np.ndarray, y: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised advance: rows of x, y moved by the matching entries of h."""
        ...

    @abstractmethod
    def drift(self, state: PhaseState) -> tuple[np.ndarray, np.ndarray]:
        """Time derivative of the flow at `state`, split into (dx, dy)."""
        ...


class FreeTransport(Flow):
    """phi_t(x, y) = (x + t y, y)."""

    def advance(self, state: PhaseState, h: float) -> PhaseState:
        if h == 0.0:
            return state
        return PhaseState(state.x + h * state.y, state.y)

    def advance_arrays(self, x, y, h):
        h = np.asarray(h, dtype=float)
        return x + h[..., None] * y, y

    def drift(self, state: PhaseState):
        return state.y, np.zeros_like(state.y)


def free_transport_advance(state: PhaseState, h: float) -> PhaseState:
    """Advance along straight lines: (x + h y, y)."""
    return FreeTransport().advance(state, h)


def reflect(state: PhaseState, g: np.ndarray, space: Optional[VelocitySpace] = None) -> PhaseState:
    """Reflect the velocity in the hyperplane orthogonal to g.

    A numerically zero g leaves the state unchanged. When a velocity space
    is given the result is re-projected onto it.
    """
    g = np.asarray(g, dtype=float)
    norm_sq = float(np.dot(g, g))
    if np.sqrt(norm_sq) < ZERO_GRADIENT_TOL:
        return state
    y = state.y - (2.0 * float(np.dot(g, state.y)) / norm_sq) * g
    if space is not None:
        y = space.normalize(y)
    return PhaseState(state.x, y)


# ── Registries ──────────────────────────────────────────────────────

POTENTIALS = ("gaussian_iso", "gaussian", "double_well")


def make_potential(key: str, d: int, matrix=None) -> Potential:
    """Build a shipped potential from its config key."""
    if key == "gaussian_iso":
        return GaussianIsoPotential(d)
    if key == "gaussian":
        if matrix is None:
            raise ValueError("potential 'gaussian' needs a precision matrix")
        pot = GaussianPotential(matrix)
        if pot.d != d:
            raise ValueError(f"matrix dimension {pot.d} does not match d={d}")
        return pot
    if key == "double_well":
        if d != 1:
            raise ValueError("double_well is one-dimensional")
        return DoubleWellPotential()
    raise ValueError(f"unknown potential '{key}'; expected one of {POTENTIALS}")


VELOCITY_SPACES = tuple(k.value for k in VelocityKind)


def make_velocity_space(key: str, d: int, radius: float = 1.0) -> VelocitySpace:
    """Build a velocity space from its config key."""
    if key not in VELOCITY_SPACES:
        raise ValueError(f"unknown velocity space '{key}'; expected one of {VELOCITY_SPACES}")
    return VelocitySpace(kind=VelocityKind(key), d=d, radius=radius)
