"""Exception hierarchy for pdmp-kit."""


class PdmpError(Exception):
    """Base class for all pdmp-kit errors."""


class RateBoundViolated(PdmpError):
    """A rate exceeded the bound a thinning scheme was built on."""

    def __init__(self, rate: float, bound: float):
        super().__init__(f"rate {rate:.6g} exceeds declared bound {bound:.6g}")
        self.rate = rate
        self.bound = bound


class NumericInversionFailed(PdmpError):
    """No bracket for the integrated hazard was found below the horizon."""


class StayingMassUnavailable(PdmpError):
    """A kernel's mass on the current state cannot be computed."""


class UnalignedKernels(PdmpError):
    """Two mixture kernels cannot be matched component by component."""


class KernelExpectationUnavailable(PdmpError):
    """No inner rule is available for a kernel expectation."""


class TrajectoryTooShort(PdmpError):
    """Too few events after burn-in for a batch-means estimate."""


class ConfigError(PdmpError):
    """Invalid or incomplete run configuration."""
