"""Statistics helpers shared by the experiments: KS checks, estimates, pooling."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats

from pdmpkit.models.reports import EstimateMethod, EstimateWithError, KsCheck

ALPHA = 0.01
MIN_BATCHES = 20


def censor(samples: np.ndarray, at: float) -> np.ndarray:
    """Replace infinite times (no event) by a common finite value."""
    samples = np.asarray(samples, dtype=float)
    return np.where(np.isfinite(samples), samples, at)


def two_sample_ks(name: str, a: Sequence[float], b: Sequence[float], alpha: float = ALPHA) -> KsCheck:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return KsCheck(check=name, statistic=float(res.statistic), p_value=float(res.pvalue), passed=res.pvalue > alpha)


def one_sample_ks(name: str, a: Sequence[float], cdf, alpha: float = ALPHA) -> KsCheck:
    """KS against a reference law given as a scipy frozen distribution or CDF callable."""
    cdf_fn = cdf.cdf if hasattr(cdf, "cdf") else cdf
    res = stats.kstest(np.asarray(a, dtype=float), cdf_fn)
    return KsCheck(check=name, statistic=float(res.statistic), p_value=float(res.pvalue), passed=res.pvalue > alpha)


def iid_estimate(values: Sequence[float], inner_error: float = 0.0) -> EstimateWithError:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ValueError("no samples")
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateWithError(mean=float(values.mean()), stderr=stderr, n=n, inner_error=inner_error)


def batch_means(batch_values: Sequence[float], n: int) -> EstimateWithError:
    """Estimate from equally weighted batch averages."""
    batch_values = np.asarray(batch_values, dtype=float)
    k = len(batch_values)
    if k < MIN_BATCHES:
        raise ValueError(f"batch means needs at least {MIN_BATCHES} batches, got {k}")
    return EstimateWithError(
        mean=float(batch_values.mean()),
        stderr=float(batch_values.std(ddof=1) / math.sqrt(k)),
        n=n,
        method=EstimateMethod.BATCH_MEANS,
        n_batches=k,
    )


def pool_estimates(estimates: Sequence[EstimateWithError]) -> EstimateWithError:
    """Average of independent replica estimates.

    The standard error is the spread of the replica means when there are
    enough of them, else the propagated replica errors.
    """
    if not estimates:
        raise ValueError("nothing to pool")
    means = np.array([e.mean for e in estimates])
    k = len(means)
    propagated = math.sqrt(sum(e.stderr**2 for e in estimates)) / k
    spread = float(means.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return EstimateWithError(
        mean=float(means.mean()),
        stderr=spread if k >= MIN_BATCHES else max(spread, propagated),
        n=sum(e.n for e in estimates),
        method=EstimateMethod.IID,
        n_batches=None,
        inner_error=math.sqrt(sum(e.inner_error**2 for e in estimates)) / k,
    )


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else math.inf
