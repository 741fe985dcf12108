"""equivalence: KS battery comparing simulations that must share one law.

Checks:
- Construction 1 against Construction 2 (first jump time, x_1 at t, jump count)
- mechanism list against total and minimal mechanisms (x_1 at t)
- constant-bound thinning against the unthinned sampler (x_1 at t, BPS only)
- first jump of the last mechanism against its reduced-process representation
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from pdmpkit.engine import (
    Characteristics,
    TrajectoryStatus,
    first_type_jump_representation,
    first_type_jump_time,
    run_replicas,
    simulate,
)
from pdmpkit.experiments.base import BaseExperiment
from pdmpkit.models.reports import EquivalenceReport, ExperimentResult, KsCheck
from pdmpkit.models.run_config import MechanismForm, SamplerKind
from pdmpkit.models.specs import BpsSpec, Construction, EngineConfig
from pdmpkit.samplers import build_bps
from pdmpkit.state_space import PhaseState
from pdmpkit.utils.rng import replica_prefix
from pdmpkit.utils.stats import ALPHA, censor, two_sample_ks

logger = logging.getLogger(__name__)


class PathSamples:
    """Per-replica first jump time, x_1 at t_end and jump count."""

    def __init__(self, rows: list[tuple[float, float, int]], t_end: float):
        arr = np.array(rows, dtype=float)
        self.first_jump = censor(arr[:, 0], 2.0 * t_end)
        self.x1 = arr[:, 1]
        self.jumps = arr[:, 2]


def sample_paths(
    ch: Characteristics,
    init: PhaseState,
    cfg: EngineConfig,
    n_runs: int,
    block: int,
    threads: int = 1,
) -> PathSamples:
    """n_runs replicas; `block` keeps the streams of different sample sets apart."""
    violations = []

    def one(r: int) -> tuple[float, float, int]:
        traj = simulate(ch, init, cfg, replica_prefix(ch.n_mechanisms, r) + (block,))
        if traj.status != TrajectoryStatus.COMPLETED:
            violations.append(traj.status)
        return traj.first_jump()[0], float(traj.final_state().x[0]), traj.jump_counts()[0]

    rows = run_replicas(one, n_runs, threads)
    if violations:
        logger.warning(f"[Equivalence] {len(violations)} of {n_runs} runs ended early ({violations[0].value})")
    return PathSamples(rows, cfg.t_end)


class EquivalenceExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "Equivalence"

    def engine_config(self, construction: Construction = Construction.C1) -> EngineConfig:
        return EngineConfig(
            t_end=self.experiment.t_check,
            max_events=self.run_config.engine.max_events,
            seed=self.seed,
            construction=construction,
        )

    def construction_checks(self, ch: Characteristics, init: PhaseState) -> list[KsCheck]:
        n = self.experiment.n_runs
        c1 = sample_paths(ch, init, self.engine_config(Construction.C1), n, 0, self.threads)
        c2 = sample_paths(ch, init, self.engine_config(Construction.C2), n, 1, self.threads)
        return [
            two_sample_ks("c1_vs_c2_first_jump", c1.first_jump, c2.first_jump, ALPHA),
            two_sample_ks("c1_vs_c2_x1", c1.x1, c2.x1, ALPHA),
            two_sample_ks("c1_vs_c2_jump_count", c1.jumps, c2.jumps, ALPHA),
        ]

    def superposition_checks(self, init: PhaseState) -> list[KsCheck]:
        n, cfg = self.experiment.n_runs, self.engine_config()
        samples = {
            form.value: sample_paths(self.characteristics(form), init, cfg, n, 2 + i, self.threads).x1
            for i, form in enumerate(MechanismForm)
        }
        return [
            two_sample_ks("list_vs_total_x1", samples["list"], samples["total"], ALPHA),
            two_sample_ks("list_vs_minimal_x1", samples["list"], samples["minimal"], ALPHA),
            two_sample_ks("total_vs_minimal_x1", samples["total"], samples["minimal"], ALPHA),
        ]

    def thinning_check(self, base: BpsSpec, init: PhaseState) -> KsCheck:
        n, cfg = self.experiment.n_runs, self.engine_config()
        plain = build_bps(BpsSpec(**{**dict(base), "lambda_star": None}))
        thinned = build_bps(BpsSpec(**{**dict(base), "lambda_star": self.experiment.lambda_star}))
        a = sample_paths(plain, init, cfg, n, 5, self.threads).x1
        b = sample_paths(thinned, init, cfg, n, 6, self.threads).x1
        return two_sample_ks(f"thinned_{self.experiment.lambda_star:g}_x1", a, b, ALPHA)

    def first_type_check(self, ch: Characteristics, init: PhaseState) -> Optional[KsCheck]:
        if ch.n_mechanisms < 2:
            return None
        n, cfg = self.experiment.n_runs, self.engine_config()
        split = ch.n_mechanisms - 1
        direct = first_type_jump_time(ch, split, init, cfg, n, self.threads)
        represented = first_type_jump_representation(ch, split, init, cfg, n, self.threads)
        at = 2.0 * cfg.t_end
        return two_sample_ks(
            "first_type_jump", censor(direct.samples, at), censor(represented.samples, at), ALPHA
        )

    def execute(self) -> ExperimentResult:
        ch = self.characteristics(MechanismForm.LIST)
        init = self.fixed_initial_state(ch.n_mechanisms)

        checks = self.construction_checks(ch, init)
        checks += self.superposition_checks(init)
        if self.sampler.kind == SamplerKind.BPS:
            checks.append(self.thinning_check(self.bps_spec(), init))
        first = self.first_type_check(ch, init)
        if first is not None:
            checks.append(first)

        report = EquivalenceReport(checks=checks, alpha=ALPHA)
        self.write_report("equivalence.csv", report.CSV_HEADER, report.csv_rows())
        logger.info(f"[{self.name}] {report.to_summary()}")
        return self.verdict(report.passed, report.to_summary())
