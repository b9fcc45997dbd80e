"""
Exception hierarchy shared by every package.

Each error carries the process exit code the CLI reports for it:
0 success, 1 numerical/check failure, 2 configuration error.
"""

from typing import Optional


class GalerkinError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


# geometry
class InvalidResolution(GalerkinError):
    exit_code = 2


class UnderResolved(GalerkinError):
    exit_code = 2


class LengthMismatch(GalerkinError):
    pass


# fields
class MissingPartials(GalerkinError):
    pass


class QuadratureFailure(GalerkinError):
    pass


# galerkin
class ShapeMismatch(GalerkinError):
    pass


class NotCompatible(GalerkinError):
    pass


# integrate / stochastic
class Blowup(GalerkinError):
    def __init__(self, t: float, sample_index: Optional[int] = None):
        where = f" (sample {sample_index})" if sample_index is not None else ""
        super().__init__(f"non-finite coefficients at t={t:.6g}{where}")
        self.t = t
        self.sample_index = sample_index


class EnergyViolation(GalerkinError):
    def __init__(self, t: float, residual: float, tolerance: float):
        super().__init__(
            f"energy ledger residual {residual:.3e} exceeds {tolerance:.3e} at t={t:.6g}; dt is under-resolved"
        )
        self.t = t
        self.residual = residual


class NotLinearDiffusion(GalerkinError):
    pass


class SingularSystem(GalerkinError):
    pass


class MissingNoise(GalerkinError):
    pass


# cli
class ConfigError(GalerkinError):
    exit_code = 2


class CheckFailure(GalerkinError):
    exit_code = 1
