"""Spectra and dynamics of the PT-symmetric non-Hermitian spin-boson model.

Modules:

* :mod:`ptsb.model`: parameters and bath discretizations
* :mod:`ptsb.ed`: exact diagonalization in a truncated Fock basis
* :mod:`ptsb.projection`: displacement-projection eigen-solver, sweeps, EP detection
* :mod:`ptsb.tdvp`: variational real-time dynamics
* :mod:`ptsb.runner`, :mod:`ptsb.cli`: configuration, orchestration and output
"""

from .errors import (ConfigError, ConvergenceError, DimensionError, IntegrationError,
                     NumericalError, ParameterError, PtsbError, SingularModeError)
from .model import BathSpec, DiscreteBath, ModelParams

__all__ = [
    "BathSpec", "ConfigError", "ConvergenceError", "DimensionError", "DiscreteBath",
    "IntegrationError", "ModelParams", "NumericalError", "ParameterError", "PtsbError",
    "SingularModeError",
]
