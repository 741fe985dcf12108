"""Base experiment: shared setup, report writing and exit-code handling."""

from __future__ import annotations

import logging
import os
from abc import ABC, abstractmethod
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from pdmpkit.config import config
from pdmpkit.engine import Characteristics, TrajectoryStatus
from pdmpkit.errors import ConfigError, RateBoundViolated, TrajectoryTooShort
from pdmpkit.mechanisms import minimal_mechanism, total_mechanism
from pdmpkit.models.reports import ExperimentResult
from pdmpkit.models.run_config import MechanismForm, RunConfig, SamplerKind
from pdmpkit.samplers import build_bps, build_zigzag, default_initial_state
from pdmpkit.state_space import PhaseState, VelocitySpace
from pdmpkit.utils.csv_io import write_csv
from pdmpkit.utils.rng import auxiliary_stream

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    CONFIG = 1
    EXPLOSION = 2
    RATE_BOUND = 3
    STATISTICAL = 4


STATUS_EXIT = {
    TrajectoryStatus.COMPLETED: ExitCode.OK,
    TrajectoryStatus.EXPLOSION_SUSPECTED: ExitCode.EXPLOSION,
    TrajectoryStatus.RATE_BOUND_VIOLATED: ExitCode.RATE_BOUND,
}


class BaseExperiment(ABC):
    """Base class for all pdmp-kit subcommands.

    `run()` wraps `execute()`: configuration problems become exit code 1
    and an escaped rate-bound violation becomes exit code 3. Subclasses
    decide the remaining codes from their reports.
    """

    def __init__(self, run_config: RunConfig, out_dir: Optional[str] = None, threads: Optional[int] = None):
        self.run_config = run_config
        self.out_dir = out_dir or config.OUTPUT_DIR
        self.threads = max(1, threads or config.THREADS)
        self.outputs: list[str] = []

    @property
    @abstractmethod
    def name(self) -> str:
        """Subcommand name for logging and routing."""
        ...

    @abstractmethod
    def execute(self) -> ExperimentResult:
        ...

    def run(self) -> ExperimentResult:
        logger.info(f"[{self.name}] Starting (seed={self.seed}, threads={self.threads})")
        try:
            result = self.execute()
        except ConfigError as e:
            logger.error(f"[{self.name}] Config error: {e}")
            return self.result(ExitCode.CONFIG, f"config error: {e}")
        except TrajectoryTooShort as e:
            logger.error(f"[{self.name}] {e}; increase t_end")
            return self.result(ExitCode.CONFIG, f"config error: {e}")
        except RateBoundViolated as e:
            logger.error(f"[{self.name}] {e}")
            return self.result(ExitCode.RATE_BOUND, str(e))
        except ValueError as e:
            # Invalid parameter combinations surface while building samplers
            logger.error(f"[{self.name}] Invalid configuration: {e}")
            return self.result(ExitCode.CONFIG, f"config error: {e}")
        if result.exit_code == ExitCode.STATISTICAL:
            logger.warning(f"[{self.name}] Statistical check failed")
        logger.info(f"[{self.name}] Finished with exit code {result.exit_code}")
        return result

    # ── Shared setup ─────────────────────────────────────────────────

    @property
    def seed(self) -> int:
        return self.run_config.engine.seed

    @property
    def sampler(self):
        return self.run_config.sampler

    @property
    def experiment(self):
        return self.run_config.experiment

    def potential(self):
        return self.sampler.build_potential()

    def bps_spec(self):
        if self.sampler.kind != SamplerKind.BPS:
            raise ConfigError(f"{self.name} needs [sampler] kind = bps")
        return self.sampler.bps_spec()

    def velocity_space(self) -> VelocitySpace:
        if self.sampler.kind == SamplerKind.ZIGZAG:
            return self.sampler.zigzag_spec().velocity_space
        return self.sampler.bps_spec().velocity_space

    def characteristics(self, form: Optional[MechanismForm] = None) -> Characteristics:
        """The configured sampler, assembled in the requested mechanism form."""
        if self.sampler.kind == SamplerKind.ZIGZAG:
            ch = build_zigzag(self.sampler.zigzag_spec())
        else:
            ch = build_bps(self.sampler.bps_spec())
        form = form or self.sampler.form
        if form == MechanismForm.TOTAL:
            return Characteristics(ch.flow, (total_mechanism(list(ch.mechanisms)),))
        if form == MechanismForm.MINIMAL:
            return Characteristics(ch.flow, (minimal_mechanism(list(ch.mechanisms)),))
        return ch

    def initial_state(self, rng: np.random.Generator) -> PhaseState:
        x0 = None if self.sampler.x0 is None else np.array(self.sampler.x0)
        return default_initial_state(self.velocity_space(), rng, x0)

    def fixed_initial_state(self, n_mechanisms: int) -> PhaseState:
        """One initial state shared by every replica, drawn from the run's auxiliary stream."""
        return self.initial_state(auxiliary_stream(self.seed, (), n_mechanisms))

    # ── Output ───────────────────────────────────────────────────────

    def path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def write_report(self, filename: str, header: Sequence[str], rows) -> str:
        path = write_csv(self.path(filename), header, rows)
        self.outputs.append(path)
        logger.info(f"[{self.name}] Wrote {path}")
        return path

    def result(self, code: ExitCode, summary: str) -> ExperimentResult:
        return ExperimentResult(experiment=self.name, exit_code=int(code), summary=summary, outputs=list(self.outputs))

    def verdict(self, passed: bool, summary: str) -> ExperimentResult:
        return self.result(ExitCode.OK if passed else ExitCode.STATISTICAL, summary)
