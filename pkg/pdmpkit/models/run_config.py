"""Run configuration: INI sections [sampler], [engine] and [experiment].

Each section is validated by a pydantic model that forbids unknown keys,
so a typo in a config file is an error instead of a silently ignored
setting. Values are read only from the file; command-line flags may
override `seed`, the output directory and the thread count.
"""

from __future__ import annotations

import configparser
import logging
import math
import os
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from pdmpkit.errors import ConfigError
from pdmpkit.models.specs import (
    BounceStrategy,
    BpsSpec,
    BpsVariant,
    Construction,
    EngineConfig,
    RecordMode,
    ZigZagSpec,
)
from pdmpkit.state_space import POTENTIALS, VelocityKind, make_potential, make_velocity_space

logger = logging.getLogger(__name__)

SECTIONS = ("sampler", "engine", "experiment")


def _split(value) -> list[str]:
    if isinstance(value, str):
        return [part for part in value.replace(",", " ").split() if part]
    return list(value)


def _float_list(value) -> list[float]:
    if value is None:
        return []
    return [float(v) for v in _split(value)]


class SamplerKind(str, Enum):
    BPS = "bps"
    ZIGZAG = "zigzag"


class MechanismForm(str, Enum):
    """How the sampler's mechanisms are assembled."""

    LIST = "list"  # one mechanism per jump type
    TOTAL = "total"  # single merged mechanism
    MINIMAL = "minimal"  # merged, with the staying mass removed


class SamplerSection(BaseModel):
    """[sampler] keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: SamplerKind = Field(default=SamplerKind.BPS)
    potential: str = Field(default="gaussian_iso", description=f"One of {POTENTIALS}")
    d: int = Field(default=1, ge=1, description="Dimension of the position space")
    precision: Optional[list[list[float]]] = Field(
        default=None, description="Precision matrix rows separated by ';', e.g. '2 0.5; 0.5 1'"
    )
    velocity: VelocityKind = Field(default=VelocityKind.STD_GAUSSIAN)
    radius: float = Field(default=1.0, gt=0, description="Radius of the ball velocity space")
    lambda_c: float = Field(default=1.0, gt=0, description="BPS refreshment rate")
    variant: BpsVariant = Field(default=BpsVariant.EXACT)
    cap: Optional[float] = Field(default=None, ge=0)
    eps: Optional[float] = Field(default=None, gt=0)
    bounce_strategy: BounceStrategy = Field(default=BounceStrategy.AUTO)
    bounce_bound: Optional[float] = Field(default=None, gt=0)
    lambda_star: Optional[float] = Field(default=None, gt=0)
    refresh_rate: Optional[float] = Field(default=None, gt=0, description="Zig-Zag refreshment rate")
    full_reversal: bool = Field(default=False)
    form: MechanismForm = Field(default=MechanismForm.LIST)
    x0: Optional[list[float]] = Field(default=None, description="Initial position; zero when absent")

    @field_validator("precision", mode="before")
    @classmethod
    def _parse_matrix(cls, value):
        if isinstance(value, str):
            return [_float_list(row) for row in value.split(";") if row.strip()]
        return value

    @field_validator("x0", mode="before")
    @classmethod
    def _parse_x0(cls, value):
        return _float_list(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check_shapes(self) -> "SamplerSection":
        if self.x0 is not None and len(self.x0) != self.d:
            raise ValueError(f"x0 has {len(self.x0)} entries, expected d={self.d}")
        if self.kind == SamplerKind.ZIGZAG and self.velocity not in (
            VelocityKind.STD_GAUSSIAN,
            VelocityKind.SIGNED_HYPERCUBE,
        ):
            raise ValueError("zigzag velocities are always signed_hypercube")
        return self

    def build_potential(self):
        matrix = None if self.precision is None else np.array(self.precision, dtype=float)
        return make_potential(self.potential, self.d, matrix)

    def bps_spec(self) -> BpsSpec:
        return BpsSpec(
            potential=self.build_potential(),
            velocity_space=make_velocity_space(self.velocity.value, self.d, self.radius),
            lambda_c=self.lambda_c,
            variant=self.variant,
            cap=self.cap,
            eps=self.eps,
            bounce_strategy=self.bounce_strategy,
            bounce_bound=self.bounce_bound,
            lambda_star=self.lambda_star,
        )

    def zigzag_spec(self) -> ZigZagSpec:
        return ZigZagSpec(
            potential=self.build_potential(),
            refresh_rate=self.refresh_rate,
            full_reversal=self.full_reversal,
        )


class EngineSection(BaseModel):
    """[engine] keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    t_end: float = Field(default=10.0, gt=0)
    max_events: int = Field(default=1_000_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    construction: Construction = Field(default=Construction.C1)
    record: RecordMode = Field(default=RecordMode.SKELETON)
    dt: Optional[float] = Field(default=None, gt=0)

    def engine_config(self, **overrides) -> EngineConfig:
        return EngineConfig(**{**self.model_dump(), **overrides})


class ExperimentSection(BaseModel):
    """[experiment] keys; each subcommand reads the ones it needs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_runs: int = Field(default=10_000, ge=1, description="Replicas per distribution check")
    t_grid: Optional[list[float]] = Field(default=None, description="Coupling check times")
    partner: BpsVariant = Field(default=BpsVariant.SMOOTHED, description="Second sampler of a coupling")
    partner_eps: Optional[float] = Field(default=None, gt=0)
    partner_cap: Optional[float] = Field(default=None, ge=0)
    g: Optional[float] = Field(default=None, ge=0, description="Constant dominator; certified value when absent")
    agreement_caps: list[float] = Field(default_factory=list)
    n_samples: int = Field(default=100_000, ge=2, description="Candidate draws for the invariance test")
    functions: list[str] = Field(default_factory=lambda: ["x", "x2", "y", "xy", "bump"])
    candidate_variance: float = Field(default=1.0, gt=0, description="Variance scale of the candidate")
    threshold: float = Field(default=4.0, gt=0, description="|z| threshold of the invariance test")
    n_nodes: int = Field(default=64, ge=2, description="Inner quadrature nodes for refreshment expectations")
    caps: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    n_replicas: int = Field(default=20, ge=1)
    burn_in: float = Field(default=0.1, ge=0, lt=1)
    half_width: float = Field(default=12.0, gt=0, description="Half width of the bound-proxy quadrature box")
    t_check: float = Field(default=1.0, gt=0, description="Time of the marginal comparisons")
    lambda_star: float = Field(default=10.0, gt=0, description="Constant bound of the thinning check")
    repeats: int = Field(default=3, ge=1, description="Timed repetitions of the benchmark")

    @field_validator("t_grid", "agreement_caps", "caps", mode="before")
    @classmethod
    def _parse_floats(cls, value):
        if isinstance(value, str):
            return [math.inf if v.lower() in ("inf", "infinity") else float(v) for v in _split(value)]
        return value

    @field_validator("functions", mode="before")
    @classmethod
    def _parse_names(cls, value):
        return _split(value)

    @field_validator("caps")
    @classmethod
    def _caps_increasing(cls, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("caps must be strictly increasing")
        return value


class RunConfig(BaseModel):
    """A parsed configuration file."""

    sampler: SamplerSection = Field(default_factory=SamplerSection)
    engine: EngineSection = Field(default_factory=EngineSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    source: Optional[str] = Field(default=None, description="Path the config was read from")

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        return self.model_copy(update={"engine": self.engine.model_copy(update={"seed": seed})})

    def require(self, section: str, *keys: str) -> None:
        """Raise ConfigError unless every key was set in `section`."""
        model = getattr(self, section)
        missing = [k for k in keys if getattr(model, k) is None]
        if missing:
            raise ConfigError(f"[{section}] missing required key(s): {', '.join(missing)}")


def parse_run_config(text: str, source: Optional[str] = None) -> RunConfig:
    """Parse INI text into a validated RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from e

    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; expected {list(SECTIONS)}")

    raw = {name: dict(parser.items(name)) for name in parser.sections()}
    try:
        return RunConfig(**raw, source=source)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_run_config(path: str) -> RunConfig:
    """Read and validate the config file at `path`."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse_run_config(text, source=path)
    logger.info(f"[Config] Loaded {path}")
    return cfg
