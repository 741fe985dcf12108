"""check-invariance: E[Af] under a Gaussian product candidate."""

from __future__ import annotations

import logging

from pdmpkit.analysis import invariance_test, make_test_function
from pdmpkit.errors import ConfigError
from pdmpkit.experiments.base import BaseExperiment
from pdmpkit.models.reports import ExperimentResult
from pdmpkit.samplers import gaussian_product_candidate

logger = logging.getLogger(__name__)


class InvarianceExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "Invariance"

    def execute(self) -> ExperimentResult:
        exp = self.experiment
        potential = self.potential()
        if potential.quadratic_matrix is None:
            raise ConfigError("check-invariance needs a Gaussian potential for its candidate sampler")
        if not exp.functions:
            raise ConfigError("[experiment] functions must name at least one test function")

        ch = self.characteristics()
        candidate = gaussian_product_candidate(potential, self.velocity_space(), exp.candidate_variance)
        fs = [make_test_function(key, potential) for key in exp.functions]

        report = invariance_test(ch, candidate, fs, exp.n_samples, self.seed, exp.threshold, exp.n_nodes)
        self.write_report("invariance.csv", report.CSV_HEADER, report.csv_rows())
        logger.info(f"[{self.name}] {report.to_summary()}")
        return self.verdict(report.passed, report.to_summary())
