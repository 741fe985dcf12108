"""Data models for engine settings and sampler specifications."""

from __future__ import annotations

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pdmpkit.state_space import Potential, VelocityKind, VelocitySpace


class Construction(str, Enum):
    """Which event-loop construction to run."""

    C1 = "C1"  # fresh clocks for every mechanism at every event
    C2 = "C2"  # residual hazards, only the winner redraws


class RecordMode(str, Enum):
    SKELETON = "skeleton"
    GRID = "grid"


class EngineConfig(BaseModel):
    """Settings of one engine run."""

    model_config = ConfigDict(frozen=True)

    t_end: float = Field(gt=0, description="Simulation horizon")
    max_events: int = Field(default=1_000_000, ge=1, description="Event cap; reaching it signals explosion")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed")
    construction: Construction = Field(default=Construction.C1)
    record: RecordMode = Field(default=RecordMode.SKELETON)
    dt: Optional[float] = Field(default=None, gt=0, description="Grid spacing when recording a grid")

    @model_validator(mode="after")
    def _grid_needs_dt(self) -> "EngineConfig":
        if self.record == RecordMode.GRID and self.dt is None:
            raise ValueError("record = grid requires dt > 0")
        return self


class BpsVariant(str, Enum):
    EXACT = "exact"
    TRUNCATED = "truncated"
    SMOOTHED = "smoothed"


class BounceStrategy(str, Enum):
    """How the bounce clock is inverted on non-Gaussian potentials."""

    AUTO = "auto"  # closed form on Gaussian targets, numeric otherwise
    BOUNDED = "bounded"  # thinning against `bounce_bound`
    NUMERIC = "numeric"


class BpsSpec(BaseModel):
    """Bouncy Particle Sampler: bounce on grad U plus refreshment at rate lambda_c."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    potential: Potential
    velocity_space: VelocitySpace
    lambda_c: float = Field(gt=0, description="Refreshment rate")
    variant: BpsVariant = Field(default=BpsVariant.EXACT)
    cap: Optional[float] = Field(default=None, ge=0, description="Rate cap M of the truncated variant")
    eps: Optional[float] = Field(default=None, gt=0, description="Smoothing level of the smoothed variant")
    bounce_strategy: BounceStrategy = Field(default=BounceStrategy.AUTO)
    bounce_bound: Optional[float] = Field(default=None, gt=0, description="Rate bound for bounded thinning")
    lambda_star: Optional[float] = Field(
        default=None, gt=0, description="Thin the bounce mechanism to this constant rate"
    )

    @model_validator(mode="after")
    def _variant_parameters(self) -> "BpsSpec":
        if self.velocity_space.d != self.potential.d:
            raise ValueError(
                f"velocity space dimension {self.velocity_space.d} != potential dimension {self.potential.d}"
            )
        if self.variant == BpsVariant.TRUNCATED and self.cap is None:
            raise ValueError("variant 'truncated' requires the cap M")
        if self.variant == BpsVariant.SMOOTHED and self.eps is None:
            raise ValueError("variant 'smoothed' requires eps")
        if self.bounce_strategy == BounceStrategy.BOUNDED and self.bounce_bound is None:
            raise ValueError("bounce_strategy 'bounded' requires bounce_bound")
        return self

    @property
    def d(self) -> int:
        return self.potential.d


class ZigZagSpec(BaseModel):
    """Zig-Zag process on velocities {-1, 1}^d."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    potential: Potential
    refresh_rate: Optional[float] = Field(default=None, gt=0, description="Optional refreshment rate")
    full_reversal: bool = Field(default=False, description="Flip every coordinate instead of one")

    @property
    def d(self) -> int:
        return self.potential.d

    @property
    def velocity_space(self) -> VelocitySpace:
        return VelocitySpace(kind=VelocityKind.SIGNED_HYPERCUBE, d=self.potential.d)
