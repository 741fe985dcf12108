"""Orchestrator: routes subcommands to the matching experiment."""

from __future__ import annotations

import logging
from typing import Optional

from pdmpkit.models.reports import ExperimentResult
from pdmpkit.models.run_config import RunConfig

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "couple", "check-invariance", "bias-sweep", "equivalence", "bench")


class Orchestrator:
    """Routes a subcommand to its experiment.

    Experiments are built on first use, so a run only imports the
    analysis machinery it needs.
    """

    def __init__(self, run_config: RunConfig, out_dir: Optional[str] = None, threads: Optional[int] = None):
        self.run_config = run_config
        self.out_dir = out_dir
        self.threads = threads

        self._simulate = None
        self._couple = None
        self._invariance = None
        self._bias_sweep = None
        self._equivalence = None
        self._bench = None

    # ── Lazy Experiment Properties ───────────────────────────────────

    @property
    def simulate(self):
        if self._simulate is None:
            from pdmpkit.experiments.simulate import SimulateExperiment
            self._simulate = SimulateExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Simulate experiment initialized")
        return self._simulate

    @property
    def couple(self):
        if self._couple is None:
            from pdmpkit.experiments.couple import CoupleExperiment
            self._couple = CoupleExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Couple experiment initialized")
        return self._couple

    @property
    def invariance(self):
        if self._invariance is None:
            from pdmpkit.experiments.invariance import InvarianceExperiment
            self._invariance = InvarianceExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Invariance experiment initialized")
        return self._invariance

    @property
    def bias_sweep(self):
        if self._bias_sweep is None:
            from pdmpkit.experiments.bias_sweep import BiasSweepExperiment
            self._bias_sweep = BiasSweepExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Bias sweep experiment initialized")
        return self._bias_sweep

    @property
    def equivalence(self):
        if self._equivalence is None:
            from pdmpkit.experiments.equivalence import EquivalenceExperiment
            self._equivalence = EquivalenceExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Equivalence experiment initialized")
        return self._equivalence

    @property
    def bench(self):
        if self._bench is None:
            from pdmpkit.experiments.bench import BenchExperiment
            self._bench = BenchExperiment(self.run_config, self.out_dir, self.threads)
            logger.debug("[Orchestrator] Bench experiment initialized")
        return self._bench

    # ── Experiment Map (resolves lazily) ─────────────────────────────

    def _get_experiment(self, subcommand: str):
        experiment_map = {
            "simulate": lambda: self.simulate,
            "couple": lambda: self.couple,
            "check-invariance": lambda: self.invariance,
            "bias-sweep": lambda: self.bias_sweep,
            "equivalence": lambda: self.equivalence,
            "bench": lambda: self.bench,
        }
        getter = experiment_map.get(subcommand)
        return getter() if getter else None

    # ── Routing ──────────────────────────────────────────────────────

    def route(self, subcommand: str) -> ExperimentResult:
        """Run the experiment behind `subcommand` and return its result."""
        experiment = self._get_experiment(subcommand)
        if experiment is None:
            raise ValueError(f"unknown subcommand '{subcommand}'; expected one of {SUBCOMMANDS}")
        logger.info(f"[Orchestrator] Routing to {experiment.name}")
        return experiment.run()
