"""couple: synchronous coupling of the configured BPS with a perturbed partner."""

from __future__ import annotations

import logging
import math

import numpy as np

from pdmpkit.coupling import (
    Dominator,
    agreement_curve,
    constant_dominator,
    couple_characteristics,
    smoothed_pair_g,
    truncation_pair_g,
    verify_tv_bound,
)
from pdmpkit.errors import ConfigError
from pdmpkit.experiments.base import BaseExperiment
from pdmpkit.models.reports import ExperimentResult
from pdmpkit.models.specs import BpsSpec, BpsVariant
from pdmpkit.samplers import build_bps

logger = logging.getLogger(__name__)

AGREEMENT_HEADER = ["M", "p_coupled", "stderr"]


class CoupleExperiment(BaseExperiment):
    @property
    def name(self) -> str:
        return "Couple"

    def partner_spec(self, base: BpsSpec) -> BpsSpec:
        exp = self.experiment
        if exp.partner == BpsVariant.SMOOTHED and exp.partner_eps is None:
            raise ConfigError("[experiment] partner = smoothed requires partner_eps")
        if exp.partner == BpsVariant.TRUNCATED and exp.partner_cap is None:
            raise ConfigError("[experiment] partner = truncated requires partner_cap")
        return BpsSpec(**{**dict(base), "variant": exp.partner, "eps": exp.partner_eps, "cap": exp.partner_cap})

    def dominator(self, partner: BpsSpec, x0_norm: float) -> Dominator:
        exp = self.experiment
        if exp.g is not None:
            return constant_dominator(exp.g)
        if partner.variant == BpsVariant.SMOOTHED:
            return smoothed_pair_g(partner.eps)
        if partner.variant == BpsVariant.TRUNCATED:
            return truncation_pair_g(partner.potential, partner.velocity_space, partner.cap, x0_norm)
        return constant_dominator(0.0)

    def execute(self) -> ExperimentResult:
        exp = self.experiment
        if not exp.t_grid:
            raise ConfigError("[experiment] t_grid must list at least one time")
        base = self.bps_spec()
        partner = self.partner_spec(base)
        ch1, ch2 = build_bps(base), build_bps(partner)
        init = self.fixed_initial_state(3)
        g = self.dominator(partner, float(np.linalg.norm(init.x)))
        cc = couple_characteristics(ch1, ch2, g)

        report = verify_tv_bound(
            cc,
            init,
            exp.t_grid,
            exp.n_runs,
            seed=self.seed,
            max_events=self.run_config.engine.max_events,
            threads=self.threads,
        )
        self.write_report("coupling.csv", report.CSV_HEADER, report.csv_rows())

        if exp.agreement_caps:
            caps = [c for c in exp.agreement_caps if math.isfinite(c)]
            curve = agreement_curve(base, caps, max(exp.t_grid), exp.n_runs, init, self.seed, self.threads)
            self.write_report("agreement.csv", AGREEMENT_HEADER, curve)

        logger.info(f"[{self.name}] {report.to_summary()}")
        return self.verdict(report.passed, report.to_summary())
