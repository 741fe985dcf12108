"""Event loop for PDMPs defined by their characteristics.

Two constructions are provided. Construction 1 draws a fresh exponential
clock for every mechanism after every event and lets the earliest one
win. Construction 2 keeps each mechanism's residual hazard and only
redraws the winner's clock. Both stop at the horizon or at the event cap.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, NamedTuple, Optional, Sequence, TypeVar

import numpy as np
from scipy import integrate

from pdmpkit.errors import NumericInversionFailed, RateBoundViolated
from pdmpkit.mechanisms import (
    AnalyticAffine,
    BoundedBy,
    DominatedBy,
    JumpMechanism,
    total_mechanism,
)
from pdmpkit.models.specs import Construction, EngineConfig, RecordMode
from pdmpkit.state_space import Flow, FreeTransport, PhaseState, states_close
from pdmpkit.utils.csv_io import state_columns, write_csv
from pdmpkit.utils.rng import auxiliary_stream, mechanism_streams, replica_prefix

logger = logging.getLogger(__name__)

INF = math.inf
PHANTOM_TOL = 1e-12
HORIZON_DOUBLINGS = 40
TIME_RTOL = 1e-10
BOUND_SLACK = 1e-9

T = TypeVar("T")


# ── Characteristics and trajectories ────────────────────────────────


@dataclass(frozen=True)
class Characteristics:
    """A flow and an ordered, non-empty list of jump mechanisms."""

    flow: Flow
    mechanisms: tuple[JumpMechanism, ...]

    def __post_init__(self):
        if len(self.mechanisms) < 1:
            raise ValueError("characteristics need at least one mechanism")
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    @property
    def n_mechanisms(self) -> int:
        return len(self.mechanisms)

    def total_rate(self, state: PhaseState) -> float:
        return sum(m.rate_at(state) for m in self.mechanisms)

    def reduced(self, n_first: int) -> "Characteristics":
        """Characteristics keeping only the first `n_first` mechanisms."""
        return Characteristics(self.flow, self.mechanisms[:n_first])


class TrajectoryStatus(str, Enum):
    COMPLETED = "completed"
    EXPLOSION_SUSPECTED = "explosion_suspected"
    RATE_BOUND_VIOLATED = "rate_bound_violated"


class Event(NamedTuple):
    time: float
    state: PhaseState
    type: int  # 1-based mechanism index; 0 marks the initial state
    phantom: bool


@dataclass
class Trajectory:
    """Embedded chain (S_k, X'_k, I_k) with phantom labels and a terminal status.

    Row 0 is the initial state at time 0 with type 0.
    """

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    types: np.ndarray
    phantom: np.ndarray
    t_end: float
    status: TrajectoryStatus
    flow: Flow = field(default_factory=FreeTransport)
    grid_dt: Optional[float] = None

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    def events(self) -> Iterator[Event]:
        for k in range(len(self.times)):
            yield Event(
                float(self.times[k]),
                PhaseState(self.xs[k], self.ys[k]),
                int(self.types[k]),
                bool(self.phantom[k]),
            )

    def jump_counts(self) -> tuple[int, int]:
        """(true jumps, phantom jumps)."""
        n_phantom = int(self.phantom[1:].sum())
        return self.n_events - n_phantom, n_phantom

    def first_jump(self, types: Optional[Sequence[int]] = None) -> tuple[float, int]:
        """Time and type of the first event (restricted to `types`); (inf, 0) if none."""
        for k in range(1, len(self.times)):
            if types is None or int(self.types[k]) in types:
                return float(self.times[k]), int(self.types[k])
        return INF, 0

    def state_at(self, t: float) -> PhaseState:
        """Continuous-time path value X_t for 0 <= t <= t_end."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = max(k, 0)
        return self.flow.advance(PhaseState(self.xs[k], self.ys[k]), float(t - self.times[k]))

    def final_state(self) -> PhaseState:
        return self.state_at(self.t_end)

    def grid(self, dt: Optional[float] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Path sampled on 0, dt, 2dt, ... <= t_end: (t, x, y)."""
        dt = dt or self.grid_dt
        if dt is None or dt <= 0:
            raise ValueError("grid spacing must be positive")
        n = int(math.floor(self.t_end / dt + 1e-9))
        ts = np.minimum(dt * np.arange(n + 1), self.t_end)
        ks = np.maximum(np.searchsorted(self.times, ts, side="right") - 1, 0)
        x, y = self.flow.advance_arrays(self.xs[ks], self.ys[ks], ts - self.times[ks])
        return ts, x, y

    def to_csv(self, path: str) -> str:
        header = ["k", "time", "type", "phantom"] + state_columns(self.d)
        rows = (
            [k, float(self.times[k]), int(self.types[k]), bool(self.phantom[k]), *self.xs[k], *self.ys[k]]
            for k in range(len(self.times))
        )
        return write_csv(path, header, rows)

    def grid_to_csv(self, path: str, dt: Optional[float] = None) -> str:
        ts, x, y = self.grid(dt)
        header = ["t"] + state_columns(self.d)
        return write_csv(path, header, ([t, *xi, *yi] for t, xi, yi in zip(ts, x, y)))


class _Recorder:
    def __init__(self, init: PhaseState):
        self.times = [0.0]
        self.xs = [init.x]
        self.ys = [init.y]
        self.types = [0]
        self.phantom = [False]

    def add(self, t: float, state: PhaseState, j: int, phantom: bool) -> None:
        self.times.append(t)
        self.xs.append(state.x)
        self.ys.append(state.y)
        self.types.append(j)
        self.phantom.append(phantom)

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    def build(self, cfg: EngineConfig, status: TrajectoryStatus, flow: Flow) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            xs=np.array(self.xs, dtype=float),
            ys=np.array(self.ys, dtype=float),
            types=np.array(self.types, dtype=int),
            phantom=np.array(self.phantom, dtype=bool),
            t_end=cfg.t_end,
            status=status,
            flow=flow,
            grid_dt=cfg.dt if cfg.record == RecordMode.GRID else None,
        )


# ── Hazards ─────────────────────────────────────────────────────────


def invert_affine(a: float, b: float, E: float) -> float:
    """First h >= 0 with int_0^h (a + b s)_+ ds = E, or inf."""
    if b == 0.0:
        return E / a if a > 0.0 else INF
    if b > 0.0:
        if a >= 0.0:
            return 2.0 * E / (a + math.sqrt(a * a + 2.0 * b * E))
        return -a / b + math.sqrt(2.0 * E / b)
    if a <= 0.0:
        return INF
    if E >= a * a / (-2.0 * b):
        return INF
    return 2.0 * E / (a + math.sqrt(a * a + 2.0 * b * E))


def affine_hazard(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """sum_k int_0^h (a_k + b_k s)_+ ds in closed form."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    total = 0.0
    for ak, bk in zip(a, b):
        if bk == 0.0:
            total += max(ak, 0.0) * h
            continue
        root = -ak / bk
        if bk > 0.0:
            lo = max(0.0, root)
            if h > lo:
                total += ak * (h - lo) + 0.5 * bk * (h * h - lo * lo)
        else:
            hi = min(h, root)
            if hi > 0.0:
                total += ak * hi + 0.5 * bk * hi * hi
    return total


def invert_affine_terms(a: np.ndarray, b: np.ndarray, E: float) -> float:
    """Invert sum_k int_0^h (a_k + b_k s)_+ ds = E by walking the kinks."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if len(a) == 1:
        return invert_affine(float(a[0]), float(b[0]), E)
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = np.where(b != 0.0, -a / b, -1.0)
    kinks = np.unique(roots[roots > 0.0])
    edges = np.concatenate([[0.0], kinks, [INF]])
    remaining = E
    for lo, hi in zip(edges[:-1], edges[1:]):
        probe = lo + 1.0 if hi == INF else 0.5 * (lo + hi)
        active = (a + b * probe) > 0.0
        slope = float(b[active].sum())
        start = float((a[active] + b[active] * lo).sum())
        h = invert_affine(start, slope, remaining)
        if lo + h <= hi:
            return lo + h
        remaining -= affine_hazard(np.array([start]), np.array([slope]), hi - lo)
    return INF


def _rate_along(m: JumpMechanism, state: PhaseState, flow: Flow) -> Callable[[float], float]:
    def rate(s: float) -> float:
        return m.rate_at(flow.advance(state, s))

    return rate


def integrated_hazard(m: JumpMechanism, state: PhaseState, flow: Flow, h: float) -> float:
    """int_0^h lambda(phi_s(state)) ds."""
    if h <= 0.0:
        return 0.0
    if isinstance(m.capability, AnalyticAffine):
        a, b = m.capability.coefficients(state)
        return affine_hazard(a, b, h)
    return _quad(_rate_along(m, state, flow), 0.0, h)


def _quad(fn: Callable[[float], float], lo: float, hi: float) -> float:
    value, _ = integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(value)


def invert_numeric(m: JumpMechanism, state: PhaseState, flow: Flow, E: float) -> float:
    """Step-doubling bracket then bisection of the integrated hazard.

    Returns inf when the hazard has stopped growing below E at the
    horizon; raises NumericInversionFailed when it is still growing.
    """
    rate = _rate_along(m, state, flow)
    r0 = rate(0.0)
    step = min(1.0, E / r0) if r0 > 0.0 else 1.0
    lo, h_lo = 0.0, 0.0
    hi = step
    last_increment = INF
    for _ in range(HORIZON_DOUBLINGS + 1):
        increment = _quad(rate, lo, hi)
        if h_lo + increment >= E:
            break
        lo, h_lo = hi, h_lo + increment
        last_increment = increment
        hi *= 2.0
    else:
        if last_increment <= 1e-9 * (1.0 + E):
            return INF
        raise NumericInversionFailed(
            f"hazard {h_lo:.6g} still below {E:.6g} at horizon {lo:.6g} ({m.label or 'mechanism'})"
        )
    while hi - lo > TIME_RTOL * hi:
        mid = 0.5 * (lo + hi)
        h_mid = h_lo + _quad(rate, lo, mid)
        if h_mid < E:
            lo, h_lo = mid, h_mid
        else:
            hi = mid
    return hi


def invert_hazard(m: JumpMechanism, state: PhaseState, flow: Flow, E: float) -> float:
    """Deterministic inversion: closed form for affine rates, numeric otherwise."""
    if isinstance(m.capability, AnalyticAffine):
        a, b = m.capability.coefficients(state)
        return invert_affine_terms(a, b, E)
    return invert_numeric(m, state, flow, E)


def _thin_constant(m, state, flow, E, bound, rng) -> float:
    t = E / bound
    while True:
        lam = m.rate_at(flow.advance(state, t))
        if lam > bound * (1.0 + BOUND_SLACK):
            raise RateBoundViolated(lam, bound)
        if rng.random() * bound < lam:
            return t
        t += rng.standard_exponential() / bound


def _thin_envelope(m, state, flow, E, envelope: AnalyticAffine, rng) -> float:
    a, b = envelope.coefficients(state)
    cumulative = E
    while True:
        t = invert_affine_terms(a, b, cumulative)
        if t == INF:
            return INF
        env = float(np.sum(np.maximum(a + b * t, 0.0)))
        lam = m.rate_at(flow.advance(state, t))
        if lam > env * (1.0 + BOUND_SLACK) + 1e-12:
            raise RateBoundViolated(lam, env)
        if rng.random() * env < lam:
            return t
        cumulative += rng.standard_exponential()


def sample_event_time(
    m: JumpMechanism,
    start_state: PhaseState,
    flow: Flow,
    E: float,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Time to the mechanism's next event from `start_state` given clock E.

    Affine rates invert in closed form, bounded and dominated rates are
    thinned (the first proposal uses E, later ones draw from `rng`),
    other rates are inverted numerically.
    """
    cap = m.capability
    if isinstance(cap, AnalyticAffine):
        a, b = cap.coefficients(start_state)
        return invert_affine_terms(a, b, E)
    if isinstance(cap, BoundedBy):
        if rng is None:
            raise ValueError("thinning needs a random stream")
        return _thin_constant(m, start_state, flow, E, cap.bound, rng)
    if isinstance(cap, DominatedBy):
        if rng is None:
            raise ValueError("thinning needs a random stream")
        return _thin_envelope(m, start_state, flow, E, cap.envelope, rng)
    return invert_numeric(m, start_state, flow, E)


# ── Constructions ───────────────────────────────────────────────────


def _jump(m: JumpMechanism, flow: Flow, state: PhaseState, h: float, rng) -> tuple[PhaseState, bool]:
    pre = flow.advance(state, h)
    post = m.kernel.sample(pre, rng)
    return post, states_close(post, pre, PHANTOM_TOL)


def _finish(rec: _Recorder, cfg: EngineConfig, status: TrajectoryStatus, flow: Flow, label: str) -> Trajectory:
    if status == TrajectoryStatus.EXPLOSION_SUSPECTED:
        logger.warning(f"[{label}] Event cap {cfg.max_events} reached before t_end={cfg.t_end}")
    elif status == TrajectoryStatus.RATE_BOUND_VIOLATED:
        logger.warning(f"[{label}] Rate bound violated after {rec.n_events} events")
    return rec.build(cfg, status, flow)


def simulate_c1(
    ch: Characteristics,
    init: PhaseState,
    cfg: EngineConfig,
    prefix: tuple[int, ...] = (),
    stop_types: Optional[frozenset[int]] = None,
) -> Trajectory:
    """Construction 1: fresh clocks for all mechanisms after every event.

    Ties go to the smallest index. The winner's stream also drives its
    kernel. With `stop_types` the run ends at the first event of those types.
    """
    flow, mechanisms = ch.flow, ch.mechanisms
    streams = mechanism_streams(cfg.seed, prefix, len(mechanisms))
    rec = _Recorder(init)
    state, t = init, 0.0
    try:
        while True:
            clocks = [
                sample_event_time(m, state, flow, rng.standard_exponential(), rng)
                for m, rng in zip(mechanisms, streams)
            ]
            j = int(np.argmin(clocks))
            h = clocks[j]
            if t + h > cfg.t_end:
                return _finish(rec, cfg, TrajectoryStatus.COMPLETED, flow, "C1")
            if rec.n_events >= cfg.max_events:
                return _finish(rec, cfg, TrajectoryStatus.EXPLOSION_SUSPECTED, flow, "C1")
            state, phantom = _jump(mechanisms[j], flow, state, h, streams[j])
            t += h
            rec.add(t, state, j + 1, phantom)
            if stop_types is not None and j + 1 in stop_types:
                return _finish(rec, cfg, TrajectoryStatus.COMPLETED, flow, "C1")
    except RateBoundViolated as e:
        logger.debug(f"[C1] {e}")
        return _finish(rec, cfg, TrajectoryStatus.RATE_BOUND_VIOLATED, flow, "C1")


def simulate_c2(
    ch: Characteristics,
    init: PhaseState,
    cfg: EngineConfig,
    prefix: tuple[int, ...] = (),
    stop_types: Optional[frozenset[int]] = None,
) -> Trajectory:
    """Construction 2: residual hazards carried across events.

    Each mechanism keeps the hazard it still has to accumulate; only the
    winner redraws after applying its kernel. Residuals need exact
    hazards, so thinned mechanisms are inverted numerically here.
    """
    flow, mechanisms = ch.flow, ch.mechanisms
    streams = mechanism_streams(cfg.seed, prefix, len(mechanisms))
    residual = [rng.standard_exponential() for rng in streams]
    rec = _Recorder(init)
    state, t = init, 0.0
    try:
        while True:
            clocks = [invert_hazard(m, state, flow, r) for m, r in zip(mechanisms, residual)]
            j = int(np.argmin(clocks))
            h = clocks[j]
            if t + h > cfg.t_end:
                return _finish(rec, cfg, TrajectoryStatus.COMPLETED, flow, "C2")
            if rec.n_events >= cfg.max_events:
                return _finish(rec, cfg, TrajectoryStatus.EXPLOSION_SUSPECTED, flow, "C2")
            for i, m in enumerate(mechanisms):
                if i != j:
                    residual[i] = max(residual[i] - integrated_hazard(m, state, flow, h), 0.0)
            state, phantom = _jump(mechanisms[j], flow, state, h, streams[j])
            residual[j] = streams[j].standard_exponential()
            t += h
            rec.add(t, state, j + 1, phantom)
            if stop_types is not None and j + 1 in stop_types:
                return _finish(rec, cfg, TrajectoryStatus.COMPLETED, flow, "C2")
    except RateBoundViolated as e:
        logger.debug(f"[C2] {e}")
        return _finish(rec, cfg, TrajectoryStatus.RATE_BOUND_VIOLATED, flow, "C2")


def simulate(
    ch: Characteristics,
    init: PhaseState,
    cfg: EngineConfig,
    prefix: tuple[int, ...] = (),
    stop_types: Optional[frozenset[int]] = None,
) -> Trajectory:
    """Run the construction selected by `cfg.construction`."""
    if cfg.construction == Construction.C2:
        return simulate_c2(ch, init, cfg, prefix, stop_types)
    return simulate_c1(ch, init, cfg, prefix, stop_types)


# ── Replicas and first-jump laws ────────────────────────────────────


def run_replicas(fn: Callable[[int], T], n: int, threads: int = 1) -> list[T]:
    """Evaluate fn(0..n-1); results come back in replica order."""
    if threads <= 1 or n <= 1:
        return [fn(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


@dataclass(frozen=True)
class EmpiricalCdf:
    """Empirical law of a time that may be infinite."""

    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", np.sort(np.asarray(self.samples, dtype=float)))

    def __call__(self, u: float) -> float:
        return float(np.searchsorted(self.samples, u, side="right")) / len(self.samples)

    @property
    def finite(self) -> np.ndarray:
        return self.samples[np.isfinite(self.samples)]


def first_type_jump_time(
    ch: Characteristics,
    split: int,
    init: PhaseState,
    cfg: EngineConfig,
    n_runs: int,
    threads: int = 1,
) -> EmpiricalCdf:
    """Law of the first jump of any type > split (inf when none before t_end)."""
    if not 1 <= split < ch.n_mechanisms:
        raise ValueError(f"split must lie in [1, {ch.n_mechanisms - 1}], got {split}")
    targets = frozenset(range(split + 1, ch.n_mechanisms + 1))

    def one(r: int) -> float:
        traj = simulate(ch, init, cfg, replica_prefix(ch.n_mechanisms, r), stop_types=targets)
        return traj.first_jump(targets)[0]

    return EmpiricalCdf(np.array(run_replicas(one, n_runs, threads)))


def first_type_jump_representation(
    ch: Characteristics,
    split: int,
    init: PhaseState,
    cfg: EngineConfig,
    n_runs: int,
    threads: int = 1,
) -> EmpiricalCdf:
    """Same law built from the reduced process Z and one independent exponential.

    T = inf{u : E < int_0^u sum_{i > split} lambda_i(Z_s) ds}, where Z runs
    with the first `split` mechanisms only. Streams are disjoint from the
    ones `first_type_jump_time` uses for the same replica indices.
    """
    if not 1 <= split < ch.n_mechanisms:
        raise ValueError(f"split must lie in [1, {ch.n_mechanisms - 1}], got {split}")
    reduced = ch.reduced(split)
    rest = total_mechanism(list(ch.mechanisms[split:]))
    offset = ch.n_mechanisms + n_runs

    def one(r: int) -> float:
        prefix = (offset + r,)
        traj = simulate(reduced, init, cfg, prefix)
        remaining = auxiliary_stream(cfg.seed, prefix, reduced.n_mechanisms).standard_exponential()
        bounds = list(traj.times[1:]) + [cfg.t_end]
        for k, seg_end in enumerate(bounds):
            start = PhaseState(traj.xs[k], traj.ys[k])
            length = seg_end - traj.times[k]
            h = invert_hazard(rest, start, ch.flow, remaining)
            if h <= length:
                return float(traj.times[k] + h)
            remaining -= integrated_hazard(rest, start, ch.flow, length)
        return INF

    return EmpiricalCdf(np.array(run_replicas(one, n_runs, threads)))
