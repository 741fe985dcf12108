"""Compiled event loop for the Gaussian Bouncy Particle Sampler.

Used by the `bench` subcommand to document the hot path. The loop draws
from numba's internal generator, seeded once per run, so its output is
reproducible for a given seed but does not follow the stream splitter.
Without numba the same code runs as plain Python.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

logger = logging.getLogger(__name__)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False
    logger.info("numba not installed; fast path runs uncompiled")

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True, inline="always")
def _bounce_time(a, b, e):
    # int_0^t (a + b s)_+ ds = e with b > 0
    if a >= 0.0:
        return (-a + math.sqrt(a * a + 2.0 * b * e)) / b
    return -a / b + math.sqrt(2.0 * e / b)


@njit(cache=True)
def _gaussian_bps_loop(A, x, y, lambda_c, t_end, max_events, sphere):
    d = x.shape[0]
    t = 0.0
    n_events = 0
    n_bounces = 0
    while n_events < max_events:
        ax = A @ x
        ay = A @ y
        a = 0.0
        b = 0.0
        for i in range(d):
            a += y[i] * ax[i]
            b += y[i] * ay[i]
        tau_bounce = _bounce_time(a, b, np.random.exponential(1.0)) if b > 0.0 else np.inf
        tau_refresh = np.random.exponential(1.0) / lambda_c
        tau = min(tau_bounce, tau_refresh)
        if t + tau > t_end:
            for i in range(d):
                x[i] += (t_end - t) * y[i]
            return n_events, n_bounces, True
        t += tau
        for i in range(d):
            x[i] += tau * y[i]
        if tau_bounce <= tau_refresh:
            g = A @ x
            gg = 0.0
            yg = 0.0
            for i in range(d):
                gg += g[i] * g[i]
                yg += y[i] * g[i]
            if gg > 0.0:
                for i in range(d):
                    y[i] -= 2.0 * yg / gg * g[i]
            n_bounces += 1
        else:
            norm = 0.0
            for i in range(d):
                y[i] = np.random.standard_normal()
                norm += y[i] * y[i]
            if sphere:
                norm = math.sqrt(norm)
                for i in range(d):
                    y[i] /= norm
        n_events += 1
    return n_events, n_bounces, False


def gaussian_bps_run(
    matrix: np.ndarray,
    lambda_c: float,
    t_end: float,
    seed: int = 0,
    max_events: int = 100_000_000,
    sphere: bool = False,
    x0: np.ndarray | None = None,
) -> dict:
    """Run the compiled loop once; returns counts, final state and wall time.

    sphere=True refreshes on the unit sphere, else on the standard Gaussian.
    """
    A = np.ascontiguousarray(matrix, dtype=np.float64)
    d = A.shape[0]
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    _seed(int(seed) % (2**32))
    y = np.random.default_rng(seed).standard_normal(d)
    if sphere:
        y /= np.linalg.norm(y)

    start = time.perf_counter()
    n_events, n_bounces, completed = _gaussian_bps_loop(A, x, y, float(lambda_c), float(t_end), int(max_events), sphere)
    wall = time.perf_counter() - start
    return {
        "events": int(n_events),
        "bounces": int(n_bounces),
        "refreshes": int(n_events - n_bounces),
        "completed": bool(completed),
        "x": x,
        "y": y,
        "wall_time": wall,
        "compiled": NUMBA_AVAILABLE,
    }


def warm_up() -> None:
    """Trigger compilation outside any timed region."""
    gaussian_bps_run(np.eye(1), 1.0, 1.0, seed=0)
