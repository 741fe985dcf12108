"""Generator, invariance tests, ergodic averages and the truncation bias sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from pdmpkit.engine import Characteristics, Trajectory, run_replicas, simulate
from pdmpkit.errors import TrajectoryTooShort
from pdmpkit.mechanisms import kernel_expectation
from pdmpkit.models.reports import (
    BiasRow,
    BiasSweepReport,
    EstimateWithError,
    InvarianceReport,
    InvarianceRow,
)
from pdmpkit.models.specs import BpsSpec, BpsVariant, EngineConfig
from pdmpkit.samplers import build_bps, default_initial_state
from pdmpkit.state_space import PhaseState, Potential
from pdmpkit.utils.rng import auxiliary_stream, replica_prefix
from pdmpkit.utils.stats import batch_means, iid_estimate, pool_estimates

logger = logging.getLogger(__name__)

Z_THRESHOLD = 4.0
SEGMENT_NODES = 8
N_BATCHES = 20
MIN_EVENTS = 40
DEFAULT_BURN_IN = 0.1

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ── Test functions ──────────────────────────────────────────────────


@dataclass(frozen=True)
class TestFunction:
    """f(x, y) with its partial gradients.

    All callables take arrays x, y of shape (..., d) and broadcast.
    """

    __test__ = False

    name: str
    value: ArrayFn
    gradient_x: ArrayFn
    gradient_y: ArrayFn
    support_radius: float = math.inf

    def __call__(self, state: PhaseState):
        return self.value(state.x, state.y)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return linear_combination([(1.0, self), (1.0, other)])


def linear_combination(terms: Sequence[tuple[float, TestFunction]]) -> TestFunction:
    """sum_k c_k f_k."""
    terms = tuple(terms)

    def value(x, y):
        return sum(c * f.value(x, y) for c, f in terms)

    def gx(x, y):
        return sum(c * f.gradient_x(x, y) for c, f in terms)

    def gy(x, y):
        return sum(c * f.gradient_y(x, y) for c, f in terms)

    name = " + ".join(f"{c:g}*{f.name}" for c, f in terms)
    return TestFunction(name, value, gx, gy, max(f.support_radius for _, f in terms))


def _unit(x: np.ndarray, i: int) -> np.ndarray:
    e = np.zeros(np.shape(x))
    e[..., i] = 1.0
    return e


def constant_function(c: float = 1.0) -> TestFunction:
    def value(x, y):
        return np.full(np.shape(x)[:-1], float(c))

    def zero(x, y):
        return np.zeros(np.shape(x))

    return TestFunction(f"const({c:g})", value, zero, zero)


def coordinate_x(i: int = 0) -> TestFunction:
    return TestFunction(
        f"x{i + 1}",
        lambda x, y: x[..., i],
        lambda x, y: _unit(x, i),
        lambda x, y: np.zeros(np.shape(y)),
    )


def square_x(i: int = 0) -> TestFunction:
    return TestFunction(
        f"x{i + 1}^2",
        lambda x, y: x[..., i] ** 2,
        lambda x, y: 2.0 * x[..., i, None] * _unit(x, i),
        lambda x, y: np.zeros(np.shape(y)),
    )


def coordinate_y(i: int = 0) -> TestFunction:
    return TestFunction(
        f"y{i + 1}",
        lambda x, y: y[..., i],
        lambda x, y: np.zeros(np.shape(x)),
        lambda x, y: _unit(y, i),
    )


def product_xy(i: int = 0) -> TestFunction:
    return TestFunction(
        f"x{i + 1}*y{i + 1}",
        lambda x, y: x[..., i] * y[..., i],
        lambda x, y: y[..., i, None] * _unit(x, i),
        lambda x, y: x[..., i, None] * _unit(y, i),
    )


def smooth_bump(center: Optional[np.ndarray] = None, radius: float = 2.0, tilt: float = 0.5) -> TestFunction:
    """psi(|x - c|^2 / R^2) (1 + tilt y_1) with psi(q) = exp(-1 / (1 - q)) on q < 1.

    Compactly supported in x, smooth everywhere.
    """
    r2 = radius * radius

    def _q(x):
        c = 0.0 if center is None else np.asarray(center, dtype=float)
        diff = np.asarray(x, dtype=float) - c
        return diff, np.sum(diff * diff, axis=-1) / r2

    def _psi(q):
        inside = q < 1.0
        safe = np.where(inside, q, 0.0)
        psi = np.where(inside, np.exp(-1.0 / (1.0 - safe)), 0.0)
        dpsi = np.where(inside, -psi / (1.0 - safe) ** 2, 0.0)
        return psi, dpsi

    def value(x, y):
        _, q = _q(x)
        psi, _ = _psi(q)
        return psi * (1.0 + tilt * y[..., 0])

    def gx(x, y):
        diff, q = _q(x)
        _, dpsi = _psi(q)
        return (dpsi * (1.0 + tilt * y[..., 0]))[..., None] * 2.0 * diff / r2

    def gy(x, y):
        _, q = _q(x)
        psi, _ = _psi(q)
        return (psi * tilt)[..., None] * _unit(y, 0)

    return TestFunction("bump", value, gx, gy, support_radius=radius)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def _smoothstep_prime(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u * u * (u - 1.0) ** 2, 0.0)


def lyapunov_function(potential: Potential) -> TestFunction:
    """V(x, y) = exp(W(x)) phi(<y, grad W(x)>) with W = sqrt(1 + U).

    phi(r) = 1 + 2 S((r + 2) / 3) for the quintic smoothstep S, so phi = 1
    for r <= -2, phi = 3 for r >= 1 and phi is C^2.
    """

    def parts(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        w = np.sqrt(1.0 + potential.value(x))
        grad_u = potential.gradient(x)
        grad_w = grad_u / (2.0 * w[..., None])
        r = np.sum(y * grad_w, axis=-1)
        u = (r + 2.0) / 3.0
        phi = 1.0 + 2.0 * _smoothstep(u)
        dphi = (2.0 / 3.0) * _smoothstep_prime(u)
        return x, y, w, grad_u, grad_w, r, phi, dphi

    def value(x, y):
        _, _, w, _, _, _, phi, _ = parts(x, y)
        return np.exp(w) * phi

    def gx(x, y):
        x, y, w, grad_u, grad_w, _, phi, dphi = parts(x, y)
        hess_y = potential.hessian_action(x, y)
        grad_u_dot_y = np.sum(grad_u * y, axis=-1)
        dr_dx = hess_y / (2.0 * w[..., None]) - grad_u * (grad_u_dot_y / (4.0 * w**3))[..., None]
        ew = np.exp(w)
        return (ew * phi)[..., None] * grad_w + (ew * dphi)[..., None] * dr_dx

    def gy(x, y):
        _, _, w, _, grad_w, _, _, dphi = parts(x, y)
        return (np.exp(w) * dphi)[..., None] * grad_w

    return TestFunction("lyapunov", value, gx, gy)


TEST_FUNCTIONS = ("one", "x", "x2", "y", "xy", "bump", "lyapunov")


def make_test_function(key: str, potential: Optional[Potential] = None, index: int = 0) -> TestFunction:
    """Build a shipped test function from its config key."""
    if key == "one":
        return constant_function(1.0)
    if key == "x":
        return coordinate_x(index)
    if key == "x2":
        return square_x(index)
    if key == "y":
        return coordinate_y(index)
    if key == "xy":
        return product_xy(index)
    if key == "bump":
        return smooth_bump()
    if key == "lyapunov":
        if potential is None:
            raise ValueError("the lyapunov test function needs a potential")
        return lyapunov_function(potential)
    raise ValueError(f"unknown test function '{key}'; expected one of {TEST_FUNCTIONS}")


# ── Generator ───────────────────────────────────────────────────────


def apply_generator_detailed(
    ch: Characteristics, f: TestFunction, s: PhaseState, n_nodes: int = 64
) -> tuple[float, float]:
    """(Af(s), recorded inner-rule error).

    Af = D_phi f + sum_i lambda_i (Q_i f - f), with D_phi f the derivative
    of f along the flow.
    """
    dx, dy = ch.flow.drift(s)
    value = float(np.dot(dx, f.gradient_x(s.x, s.y)) + np.dot(dy, f.gradient_y(s.x, s.y)))
    f_here = float(f(s))
    err_sq = 0.0
    for m in ch.mechanisms:
        lam = m.rate_at(s)
        if lam <= 0.0:
            continue
        qf, err = kernel_expectation(m.kernel, f, s, n_nodes)
        value += lam * (qf - f_here)
        err_sq += (lam * err) ** 2
    return value, math.sqrt(err_sq)


def apply_generator(ch: Characteristics, f: TestFunction, s: PhaseState, n_nodes: int = 64) -> float:
    return apply_generator_detailed(ch, f, s, n_nodes)[0]


def drift_profile(ch: Characteristics, V: TestFunction, states: Sequence[PhaseState]) -> np.ndarray:
    """AV at each state (diagnostic for Lyapunov drift)."""
    return np.array([apply_generator(ch, V, s) for s in states])


def invariance_test(
    ch: Characteristics,
    candidate_sampler: Callable[[np.random.Generator], PhaseState],
    fs: Sequence[TestFunction],
    n: int,
    seed: int = 0,
    threshold: float = Z_THRESHOLD,
    n_nodes: int = 64,
) -> InvarianceReport:
    """Estimate E_mu[Af] from n i.i.d. candidate draws for every f.

    PASS iff every |z| <= threshold.
    """
    rng = auxiliary_stream(seed, (), ch.n_mechanisms)
    values = np.empty((len(fs), n))
    inner = np.zeros(len(fs))
    for k in range(n):
        s = candidate_sampler(rng)
        for j, f in enumerate(fs):
            values[j, k], err = apply_generator_detailed(ch, f, s, n_nodes)
            inner[j] = max(inner[j], err)

    rows = []
    for j, f in enumerate(fs):
        est = iid_estimate(values[j], inner_error=float(inner[j]))
        z = est.z_score()
        rows.append(InvarianceRow(function=f.name, estimate=est, z=z, passed=abs(z) <= threshold))
        logger.debug(f"[Invariance] {f.name}: {est.to_summary()} z={z:.2f}")
    report = InvarianceReport(rows=rows, threshold=threshold)
    logger.info(f"[Invariance] {len(fs)} functions, n={n}: {'PASS' if report.passed else 'FAIL'}")
    return report


# ── Ergodic averages ────────────────────────────────────────────────


def ergodic_average(
    traj: Trajectory,
    f: TestFunction,
    burn_in_fraction: float = DEFAULT_BURN_IN,
    n_batches: int = N_BATCHES,
) -> EstimateWithError:
    """(1/(T - b)) int_b^T f(X_s) ds with a batch-means standard error.

    Each piece of the path between events and batch edges is integrated
    with an 8-node Gauss-Legendre rule, exact for polynomial f of degree
    up to 15 along linear flows.
    """
    T = traj.t_end
    b = burn_in_fraction * T
    n_after = int(np.sum(traj.times[1:] >= b))
    if n_after < MIN_EVENTS:
        raise TrajectoryTooShort(f"{n_after} events after burn-in, need at least {MIN_EVENTS}")

    batch_edges = np.linspace(b, T, n_batches + 1)
    inner_times = traj.times[(traj.times > b) & (traj.times < T)]
    edges = np.unique(np.concatenate([batch_edges, inner_times]))
    lo, hi = edges[:-1], edges[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]

    ks = np.maximum(np.searchsorted(traj.times, lo, side="right") - 1, 0)
    nodes, weights = leggauss(SEGMENT_NODES)
    half = 0.5 * (hi - lo)
    s = (lo + half)[:, None] + half[:, None] * nodes[None, :]
    h = (s - traj.times[ks][:, None]).reshape(-1)
    x0 = np.repeat(traj.xs[ks], SEGMENT_NODES, axis=0)
    y0 = np.repeat(traj.ys[ks], SEGMENT_NODES, axis=0)
    x, y = traj.flow.advance_arrays(x0, y0, h)
    fv = np.asarray(f.value(x, y), dtype=float).reshape(len(lo), SEGMENT_NODES)
    piece_integrals = half * (fv @ weights)

    batch_idx = np.clip(np.searchsorted(batch_edges, lo, side="right") - 1, 0, n_batches - 1)
    batch_integrals = np.bincount(batch_idx, weights=piece_integrals, minlength=n_batches)
    batch_len = (T - b) / n_batches
    return batch_means(batch_integrals / batch_len, n=n_after)


def replicated_ergodic_estimates(
    ch: Characteristics,
    initial_state: Callable[[np.random.Generator], PhaseState],
    cfg: EngineConfig,
    fs: Sequence[TestFunction],
    n_replicas: int,
    burn_in_fraction: float = DEFAULT_BURN_IN,
    replica_offset: int = 0,
    threads: int = 1,
) -> dict[str, EstimateWithError]:
    """Pool per-replica ergodic averages of each f (replica-ordered reduction)."""

    def one(r: int) -> list[EstimateWithError]:
        prefix = replica_prefix(ch.n_mechanisms, replica_offset + r)
        init = initial_state(auxiliary_stream(cfg.seed, prefix, ch.n_mechanisms))
        traj = simulate(ch, init, cfg, prefix)
        return [ergodic_average(traj, f, burn_in_fraction) for f in fs]

    per_replica = run_replicas(one, n_replicas, threads)
    return {f.name: pool_estimates([est[j] for est in per_replica]) for j, f in enumerate(fs)}


# ── Truncation bias ─────────────────────────────────────────────────


def bound_proxy(potential: Potential, cap: float, half_width: float = 12.0, limit: int = 200) -> float:
    """B(M) = int (|grad U(x)| - M)_+ exp(W(x) - U(x)) dx with W = sqrt(1 + U).

    Integrated over the box [-half_width, half_width]^d for d in {1, 2}.
    """

    def integrand_vec(x: np.ndarray) -> float:
        u = float(potential.value(x))
        excess = float(np.linalg.norm(potential.gradient(x))) - cap
        if excess <= 0.0:
            return 0.0
        return excess * math.exp(math.sqrt(1.0 + u) - u)

    L = half_width
    if potential.d == 1:
        value, _ = integrate.quad(lambda t: integrand_vec(np.array([t])), -L, L, limit=limit, epsabs=1e-14)
    elif potential.d == 2:
        value, _ = integrate.dblquad(
            lambda t2, t1: integrand_vec(np.array([t1, t2])), -L, L, -L, L, epsabs=1e-12
        )
    else:
        raise ValueError(f"bound proxy quadrature supports d = 1 or 2, got d = {potential.d}")
    return float(value)


def bias_sweep(
    base: BpsSpec,
    caps: Sequence[float],
    fs: Sequence[TestFunction],
    t_end: float,
    n_replicas: int,
    seed: int = 0,
    burn_in_fraction: float = DEFAULT_BURN_IN,
    max_events: int = 10_000_000,
    half_width: float = 12.0,
    threads: int = 1,
) -> BiasSweepReport:
    """Ergodic estimates of E[f] under rate-capped samplers against the exact sampler.

    Every cap runs its own replica streams with the same budget. An
    infinite cap runs the exact sampler on fresh streams.
    """
    cfg = EngineConfig(t_end=t_end, max_events=max_events, seed=seed)
    space = base.velocity_space

    def init(rng: np.random.Generator) -> PhaseState:
        return default_initial_state(space, rng)

    exact_spec = base.model_copy(update={"variant": BpsVariant.EXACT, "cap": None})
    exact = build_bps(exact_spec)
    reference = replicated_ergodic_estimates(exact, init, cfg, fs, n_replicas, burn_in_fraction, 0, threads)
    logger.info(f"[BiasSweep] Reference estimates from {n_replicas} exact replicas")

    rows = []
    for i, cap in enumerate(caps):
        if math.isinf(cap):
            ch = exact
            proxy = 0.0
        else:
            ch = build_bps(base.model_copy(update={"variant": BpsVariant.TRUNCATED, "cap": float(cap)}))
            proxy = bound_proxy(base.potential, float(cap), half_width)
        estimates = replicated_ergodic_estimates(
            ch, init, cfg, fs, n_replicas, burn_in_fraction, (i + 1) * n_replicas, threads
        )
        for f in fs:
            est, ref = estimates[f.name], reference[f.name]
            rows.append(
                BiasRow(
                    M=float(cap),
                    function=f.name,
                    estimate=est.mean,
                    stderr=est.stderr,
                    bias=est.mean - ref.mean,
                    bias_stderr=math.hypot(est.stderr, ref.stderr),
                    bound_proxy=proxy,
                )
            )
        logger.info(f"[BiasSweep] M={cap:g} done")
    return BiasSweepReport(rows=rows, reference=reference)


# ── Generator against semigroup ─────────────────────────────────────


def richardson_weights(hs: Sequence[float]) -> np.ndarray:
    """Weights extrapolating D(h) polynomially in h to h = 0."""
    hs = np.asarray(hs, dtype=float)
    w = np.ones(len(hs))
    for i in range(len(hs)):
        for j in range(len(hs)):
            if i != j:
                w[i] *= hs[j] / (hs[j] - hs[i])
    return w


def semigroup_slope(
    ch: Characteristics,
    f: TestFunction,
    s: PhaseState,
    hs: Sequence[float] = (0.1, 0.05, 0.025),
    n: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> tuple[EstimateWithError, list[EstimateWithError]]:
    """Richardson-extrapolated (E f(X_h) - f(s)) / h and the raw slopes per h.

    Every replica path is simulated once up to max(hs) and read at each h,
    so the slopes share random numbers.
    """
    hs = [float(h) for h in hs]
    cfg = EngineConfig(t_end=max(hs), seed=seed)
    f0 = float(f(s))
    weights = richardson_weights(hs)

    def one(r: int) -> np.ndarray:
        traj = simulate(ch, s, cfg, replica_prefix(ch.n_mechanisms, r))
        return np.array([(float(f(traj.state_at(h))) - f0) / h for h in hs])

    slopes = np.array(run_replicas(one, n, threads))
    raw = [iid_estimate(slopes[:, i]) for i in range(len(hs))]
    return iid_estimate(slopes @ weights), raw

