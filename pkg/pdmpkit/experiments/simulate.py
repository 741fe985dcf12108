"""simulate: one trajectory of the configured sampler, written as CSV."""

from __future__ import annotations

import logging
import time

from pdmpkit.engine import simulate
from pdmpkit.experiments.base import STATUS_EXIT, BaseExperiment
from pdmpkit.models.reports import ExperimentResult, SimulationSummary
from pdmpkit.models.specs import RecordMode
from pdmpkit.utils.rng import auxiliary_stream

logger = logging.getLogger(__name__)


class SimulateExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "Simulate"

    def execute(self) -> ExperimentResult:
        ch = self.characteristics()
        cfg = self.run_config.engine.engine_config()
        init = self.initial_state(auxiliary_stream(cfg.seed, (), ch.n_mechanisms))

        start = time.perf_counter()
        traj = simulate(ch, init, cfg)
        wall = time.perf_counter() - start

        self.outputs.append(traj.to_csv(self.path("trajectory.csv")))
        if cfg.record == RecordMode.GRID:
            self.outputs.append(traj.grid_to_csv(self.path("grid.csv")))

        true_jumps, phantom_jumps = traj.jump_counts()
        summary = SimulationSummary(
            events=traj.n_events,
            true_jumps=true_jumps,
            phantom_jumps=phantom_jumps,
            wall_time=wall,
            status=traj.status.value,
        )
        logger.info(f"[{self.name}] {summary.to_summary()}")
        return self.result(STATUS_EXIT[traj.status], summary.to_summary())
