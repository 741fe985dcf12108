"""bench: events per second of the compiled Gaussian BPS loop."""

from __future__ import annotations

import logging

from pdmpkit.errors import ConfigError
from pdmpkit.experiments.base import BaseExperiment, ExitCode
from pdmpkit.models.reports import ExperimentResult
from pdmpkit.state_space import VelocityKind
from pdmpkit.utils import fastpath

logger = logging.getLogger(__name__)

BENCH_HEADER = ["repeat", "events", "bounces", "wall_time", "events_per_sec", "compiled"]


class BenchExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "Bench"

    def execute(self) -> ExperimentResult:
        spec = self.bps_spec()
        matrix = spec.potential.quadratic_matrix
        if matrix is None:
            raise ConfigError("bench runs the Gaussian BPS only")
        if spec.velocity_space.kind not in (VelocityKind.STD_GAUSSIAN, VelocityKind.UNIT_SPHERE):
            raise ConfigError("bench supports std_gaussian and unit_sphere velocities")
        sphere = spec.velocity_space.kind == VelocityKind.UNIT_SPHERE
        engine = self.run_config.engine

        fastpath.warm_up()
        rows = []
        for r in range(self.experiment.repeats):
            run = fastpath.gaussian_bps_run(
                matrix, spec.lambda_c, engine.t_end, seed=self.seed + r, max_events=engine.max_events, sphere=sphere
            )
            rate = run["events"] / run["wall_time"] if run["wall_time"] > 0 else float("inf")
            rows.append([r, run["events"], run["bounces"], run["wall_time"], rate, run["compiled"]])
            logger.info(f"[{self.name}] repeat {r}: {run['events']} events, {rate:.3g} events/sec")

        self.write_report("bench.csv", BENCH_HEADER, rows)
        best = max(row[4] for row in rows)
        compiled = "compiled" if fastpath.NUMBA_AVAILABLE else "uncompiled"
        return self.result(ExitCode.OK, f"Gaussian BPS d={spec.d}: best {best:.3g} events/sec ({compiled})")
