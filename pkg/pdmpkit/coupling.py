"""Synchronous coupling of two PDMPs sharing a flow.

Both chains are driven jointly by three competing rates

    r0 = lambda1(x) ^ lambda2(y),  r1 = (lambda1(x) - lambda2(y))_+,  r2 = (lambda2(y) - lambda1(x))_+

An r0 event jumps both chains through a maximal coupling of their
kernels, r1 and r2 events jump one chain only. The time the chains first
differ is compared with the bound 1 - exp(-int_0^t g) for a dominator g
of the rate at which they can split.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from pdmpkit.engine import Characteristics, TrajectoryStatus, run_replicas, sample_event_time, simulate
from pdmpkit.errors import RateBoundViolated, UnalignedKernels
from pdmpkit.mechanisms import Action, JumpMechanism, KernelSpec, apply_action, total_mechanism
from pdmpkit.models.reports import CouplingReport, CouplingRow
from pdmpkit.models.specs import BpsSpec, BpsVariant, EngineConfig
from pdmpkit.samplers import build_bps
from pdmpkit.state_space import Flow, PhaseState, Potential, VelocitySpace, states_close
from pdmpkit.utils.rng import mechanism_streams, replica_prefix
from pdmpkit.utils.stats import binomial_stderr, two_sample_ks

logger = logging.getLogger(__name__)

DOMINATOR_FORMS = ("split", "signed", "doubled")
MIN_TV_RUNS = 1000


# ── Dominators ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class Dominator:
    """g(t) together with its running integral."""

    g: Callable[[float], float]
    constant: Optional[float] = None
    description: str = ""

    def __call__(self, t: float) -> float:
        return self.g(t)

    def integral(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if self.constant is not None:
            return self.constant * t
        value, _ = integrate.quad(self.g, 0.0, t, limit=200)
        return float(value)

    def bound(self, t: float) -> float:
        """1 - exp(-int_0^t g)."""
        return -math.expm1(-self.integral(t))


def constant_dominator(c: float) -> Dominator:
    c = float(c)
    return Dominator(lambda t: c, constant=c, description=f"g={c:g}")


def smoothed_pair_g(eps: float) -> Dominator:
    """Certified dominator 4 eps for exact vs eps-smoothed bounce rates."""
    return Dominator(lambda t: 4.0 * eps, constant=4.0 * eps, description=f"g=4eps, eps={eps:g}")


def truncation_pair_g(potential: Potential, space: VelocitySpace, cap: float, x0_norm: float) -> Dominator:
    """g(t) = 2 (L v (|x0| + v t) - M)_+ for exact vs rate-capped bounces.

    L is the gradient Lipschitz constant, v the speed bound. The bounce
    rate at time t is at most L v |x_t| and |x_t| <= |x0| + v t.
    """
    L = potential.lipschitz_gradient
    v = space.speed_bound
    if L is None or not math.isfinite(v):
        raise ValueError("truncation dominator needs a Lipschitz gradient and bounded speeds")

    def g(t: float) -> float:
        return 2.0 * max(L * v * (x0_norm + v * t) - cap, 0.0)

    return Dominator(g, description=f"g=2(Lv(|x0|+vt)-M)_+, M={cap:g}")


def _signed_sup(weights: dict[str, float]) -> float:
    """sup_A |mu(A)| of a signed measure with mutually singular components."""
    pos = sum(w for w in weights.values() if w > 0.0)
    neg = -sum(w for w in weights.values() if w < 0.0)
    return max(pos, neg)


def _aligned(k1: KernelSpec, k2: KernelSpec, s1: PhaseState, s2: PhaseState):
    mix1, mix2 = k1.mixture(s1), k2.mixture(s2)
    for key in mix1.keys() & mix2.keys():
        if mix1[key][1] != mix2[key][1]:
            raise UnalignedKernels(f"component '{key}' differs between the two kernels")
    return mix1, mix2


def kernel_tv(k1: KernelSpec, k2: KernelSpec, state: PhaseState) -> float:
    """sup_A |Q1(s, A) - Q2(s, A)| for aligned mixture kernels."""
    mix1, mix2 = _aligned(k1, k2, state, state)
    keys = mix1.keys() | mix2.keys()
    return _signed_sup({k: mix1.get(k, (0.0,))[0] - mix2.get(k, (0.0,))[0] for k in keys})


def dominator_expression(m1: JumpMechanism, m2: JumpMechanism, state: PhaseState, form: str = "split") -> float:
    """Pointwise value of one of the dominator forms at `state`.

    split:   (l1 ^ l2) sup_A |Q1 - Q2| + |l1 - l2|
    signed:  sup_A |l1 (Q1 - delta) - l2 (Q2 - delta)|
    doubled: 2 sup_A |l1 Q1 - l2 Q2|
    """
    l1, l2 = m1.rate_at(state), m2.rate_at(state)
    if form == "split":
        return min(l1, l2) * kernel_tv(m1.kernel, m2.kernel, state) + abs(l1 - l2)
    mix1, mix2 = _aligned(m1.kernel, m2.kernel, state, state)
    keys = mix1.keys() | mix2.keys()
    weights = {k: l1 * mix1.get(k, (0.0,))[0] - l2 * mix2.get(k, (0.0,))[0] for k in keys}
    if form == "doubled":
        return 2.0 * _signed_sup(weights)
    if form == "signed":
        weights["identity"] = weights.get("identity", 0.0) - l1 + l2
        return _signed_sup(weights)
    raise ValueError(f"unknown dominator form '{form}'; expected one of {DOMINATOR_FORMS}")


def certify_dominator(
    m1: JumpMechanism,
    m2: JumpMechanism,
    g: Dominator,
    states: list[PhaseState],
    t: float = 0.0,
    form: str = "split",
    tol: float = 1e-9,
) -> tuple[bool, float]:
    """Check expression <= g(t) + tol on the given states; returns (ok, max excess)."""
    level = g(t)
    excess = max(dominator_expression(m1, m2, s, form) - level for s in states)
    return excess <= tol, float(excess)


# ── Coupled characteristics and trajectories ────────────────────────


@dataclass(frozen=True)
class CoupledCharacteristics:
    """Shared flow, one merged mechanism per marginal and the dominator g."""

    flow: Flow
    m1: JumpMechanism
    m2: JumpMechanism
    g: Dominator

    def residual_rates(self, x: PhaseState, y: PhaseState) -> tuple[float, float, float]:
        """(r0, r1, r2) at the pair (x, y)."""
        l1, l2 = self.m1.rate_at(x), self.m2.rate_at(y)
        return min(l1, l2), max(l1 - l2, 0.0), max(l2 - l1, 0.0)


def couple_characteristics(ch1: Characteristics, ch2: Characteristics, g: Dominator) -> CoupledCharacteristics:
    """Merge each side into its total mechanism and pair them."""
    return CoupledCharacteristics(
        ch1.flow, total_mechanism(list(ch1.mechanisms)), total_mechanism(list(ch2.mechanisms)), g
    )


@dataclass
class CoupledTrajectory:
    """Paired embedded chains. kinds: 0 joint event, 1 chain 1 only, 2 chain 2 only.

    decouple_time is the first event time at which the two states differ,
    not the first one-sided event: a one-sided jump whose kernel leaves the
    state in place keeps the chains coupled.
    """

    times: np.ndarray
    xs1: np.ndarray
    ys1: np.ndarray
    xs2: np.ndarray
    ys2: np.ndarray
    kinds: np.ndarray
    decouple_time: Optional[float]
    t_end: float
    status: TrajectoryStatus
    flow: Flow

    def _state(self, xs, ys, t: float) -> PhaseState:
        k = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return self.flow.advance(PhaseState(xs[k], ys[k]), float(t - self.times[k]))

    def state1_at(self, t: float) -> PhaseState:
        return self._state(self.xs1, self.ys1, t)

    def state2_at(self, t: float) -> PhaseState:
        return self._state(self.xs2, self.ys2, t)

    def decoupled_by(self, t: float) -> bool:
        return self.decouple_time is not None and self.decouple_time <= t


def maximal_kernel_coupling(
    k1: KernelSpec, k2: KernelSpec, state: PhaseState, rng: np.random.Generator
) -> tuple[PhaseState, PhaseState, bool]:
    """Draw (X1, X2) with X1 ~ Q1(s), X2 ~ Q2(s) and P(X1 = X2) = 1 - sup_A |Q1 - Q2|.

    The common part sum_c min(p1_c, p2_c) is drawn once for both chains;
    the residual parts are drawn independently.
    """
    mix1, mix2 = _aligned(k1, k2, state, state)
    keys = sorted(mix1.keys() | mix2.keys())
    p1 = np.array([mix1.get(k, (0.0,))[0] for k in keys])
    p2 = np.array([mix2.get(k, (0.0,))[0] for k in keys])
    actions: list[Action] = [mix1[k][1] if k in mix1 else mix2[k][1] for k in keys]
    common = np.minimum(p1, p2)
    c = float(common.sum())
    if rng.random() < c:
        idx = _pick(common, rng)
        post = apply_action(actions[idx], state, rng)
        return post, post, True
    post1 = apply_action(actions[_pick(p1 - common, rng)], state, rng)
    post2 = apply_action(actions[_pick(p2 - common, rng)], state, rng)
    return post1, post2, states_close(post1, post2)


def _pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    weights = np.maximum(weights, 0.0)
    total = weights.sum()
    if total <= 0.0:
        return int(np.argmax(weights))
    idx = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    return min(idx, len(weights) - 1)


def simulate_coupled(
    cc: CoupledCharacteristics,
    init: PhaseState,
    cfg: EngineConfig,
    init2: Optional[PhaseState] = None,
    prefix: tuple[int, ...] = (),
) -> CoupledTrajectory:
    """Simulate the synchronous coupling up to cfg.t_end.

    Candidate events come from the superposition of both marginal clocks
    (rate l1 + l2) and are accepted with probability max(l1, l2)/(l1 + l2),
    which leaves events at rate r0 + r1 + r2. An accepted event is joint
    with probability r0/max(l1, l2). Once the chains differ, joint events
    draw from the two kernels independently.
    """
    flow = cc.flow
    clock1, clock2, aux = mechanism_streams(cfg.seed, prefix, 3)
    x = init
    y = init if init2 is None else init2
    t = 0.0
    decouple_time = None if states_close(x, y) else 0.0
    times, xs1, ys1, xs2, ys2, kinds = [0.0], [x.x], [x.y], [y.x], [y.y], [-1]
    status = TrajectoryStatus.COMPLETED

    try:
        while True:
            h1 = sample_event_time(cc.m1, x, flow, clock1.standard_exponential(), clock1)
            h2 = sample_event_time(cc.m2, y, flow, clock2.standard_exponential(), clock2)
            h = min(h1, h2)
            if t + h > cfg.t_end:
                break
            if len(times) - 1 >= cfg.max_events:
                status = TrajectoryStatus.EXPLOSION_SUSPECTED
                break
            x, y, t = flow.advance(x, h), flow.advance(y, h), t + h
            l1, l2 = cc.m1.rate_at(x), cc.m2.rate_at(y)
            top = max(l1, l2)
            if aux.random() * (l1 + l2) >= top:
                continue
            u = aux.random() * top
            if u < min(l1, l2):
                kind = 0
                if decouple_time is None:
                    x, y, _ = maximal_kernel_coupling(cc.m1.kernel, cc.m2.kernel, x, aux)
                else:
                    x, y = cc.m1.kernel.sample(x, aux), cc.m2.kernel.sample(y, aux)
            elif l1 > l2:
                kind = 1
                x = cc.m1.kernel.sample(x, aux)
            else:
                kind = 2
                y = cc.m2.kernel.sample(y, aux)
            if decouple_time is None and not states_close(x, y):
                decouple_time = t
            times.append(t)
            xs1.append(x.x)
            ys1.append(x.y)
            xs2.append(y.x)
            ys2.append(y.y)
            kinds.append(kind)
    except RateBoundViolated as e:
        logger.warning(f"[Coupling] {e}")
        status = TrajectoryStatus.RATE_BOUND_VIOLATED

    return CoupledTrajectory(
        times=np.array(times),
        xs1=np.array(xs1),
        ys1=np.array(ys1),
        xs2=np.array(xs2),
        ys2=np.array(ys2),
        kinds=np.array(kinds),
        decouple_time=decouple_time,
        t_end=cfg.t_end,
        status=status,
        flow=flow,
    )


# ── Verification ────────────────────────────────────────────────────


def verify_tv_bound(
    cc: CoupledCharacteristics,
    init: PhaseState,
    t_grid: list[float],
    n_runs: int,
    seed: int = 0,
    max_events: int = 1_000_000,
    marginal_check: bool = True,
    threads: int = 1,
) -> CouplingReport:
    """Empirical decoupling probability against 1 - exp(-int_0^t g) on a grid.

    A grid point passes when p_hat <= bound + 3 stderr. The marginal checks
    compare each chain's first coordinate at the last grid time with a
    standalone run of its own mechanism (two-sample KS).
    """
    if not t_grid:
        raise ValueError("t_grid must not be empty")
    if n_runs < MIN_TV_RUNS:
        logger.warning(
            f"[Coupling] n_runs={n_runs} is below {MIN_TV_RUNS}; the verdict is indicative only"
        )
    t_grid = sorted(float(t) for t in t_grid)
    cfg = EngineConfig(t_end=t_grid[-1], max_events=max_events, seed=seed)

    def one(r: int) -> tuple[Optional[float], float, float]:
        traj = simulate_coupled(cc, init, cfg, prefix=replica_prefix(3, r))
        return traj.decouple_time, float(traj.state1_at(cfg.t_end).x[0]), float(traj.state2_at(cfg.t_end).x[0])

    results = run_replicas(one, n_runs, threads)
    decouple = np.array([math.inf if d is None else d for d, _, _ in results])

    rows = []
    for t in t_grid:
        p = float(np.mean(decouple <= t))
        se = binomial_stderr(p, n_runs)
        bound = cc.g.bound(t)
        rows.append(CouplingRow(t=t, p_decouple=p, stderr=se, bound=bound, passed=p <= bound + 3.0 * se))

    marginals = []
    if marginal_check:
        for chain, m in enumerate((cc.m1, cc.m2), start=1):
            standalone = Characteristics(cc.flow, (m,))
            offset = 3 + chain * n_runs

            def alone(r: int, standalone=standalone, offset=offset) -> float:
                traj = simulate(standalone, init, cfg, prefix=(offset + r,))
                return float(traj.final_state().x[0])

            reference = run_replicas(alone, n_runs, threads)
            coupled = [res[chain] for res in results]
            marginals.append(two_sample_ks(f"chain{chain}_marginal", coupled, reference))

    report = CouplingReport(rows=rows, marginals=marginals, n_runs=n_runs)
    logger.info(f"[Coupling] {cc.g.description}: {'PASS' if report.passed else 'FAIL'}")
    return report


def agreement_curve(
    base: BpsSpec,
    caps: list[float],
    t: float,
    n_runs: int,
    init: PhaseState,
    seed: int = 0,
    threads: int = 1,
) -> list[tuple[float, float, float]]:
    """(M, P(exact and truncated(M) samplers still coupled at t), stderr) per cap."""
    exact = build_bps(base.model_copy(update={"variant": BpsVariant.EXACT}))
    out = []
    for cap in sorted(caps):
        truncated = build_bps(base.model_copy(update={"variant": BpsVariant.TRUNCATED, "cap": cap}))
        cc = couple_characteristics(exact, truncated, constant_dominator(0.0))
        cfg = EngineConfig(t_end=t, seed=seed)
        runs = run_replicas(
            lambda r: simulate_coupled(cc, init, cfg, prefix=replica_prefix(3, r)).decoupled_by(t),
            n_runs,
            threads,
        )
        p = 1.0 - float(np.mean(runs))
        out.append((float(cap), p, binomial_stderr(p, n_runs)))
        logger.debug(f"[Coupling] M={cap:g}: P(coupled at {t:g}) = {p:.4f}")
    return out
