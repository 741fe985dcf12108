"""bias-sweep: rate-capped BPS estimates against the exact sampler."""

from __future__ import annotations

import logging

from pdmpkit.analysis import bias_sweep, make_test_function
from pdmpkit.errors import ConfigError
from pdmpkit.experiments.base import BaseExperiment
from pdmpkit.models.reports import ExperimentResult

logger = logging.getLogger(__name__)


class BiasSweepExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "BiasSweep"

    def execute(self) -> ExperimentResult:
        exp = self.experiment
        if not exp.caps:
            raise ConfigError("[experiment] caps must list at least one rate cap")
        base = self.bps_spec()
        if base.d > 2:
            raise ConfigError("bias-sweep evaluates its bound proxy for d = 1 or 2 only")
        fs = [make_test_function(key, base.potential) for key in exp.functions]
        engine = self.run_config.engine

        report = bias_sweep(
            base,
            exp.caps,
            fs,
            t_end=engine.t_end,
            n_replicas=exp.n_replicas,
            seed=self.seed,
            burn_in_fraction=exp.burn_in,
            max_events=engine.max_events,
            half_width=exp.half_width,
            threads=self.threads,
        )
        self.write_report("bias_sweep.csv", report.CSV_HEADER, report.csv_rows())
        logger.info(f"[{self.name}] {report.to_summary()}")
        return self.verdict(report.passed, report.to_summary())
