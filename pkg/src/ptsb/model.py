"""Model parameters, the power-law spectral density and bath discretizations.

Three discretizations map the continuum onto a finite list of modes:

* ``wilson``: logarithmic intervals ``[w_c L^-(n+1), w_c L^-n]`` with one
  representative mode each (used for static spectra);
* ``uniform``: ``w_k = k dw`` with ``g_k^2 = J(w_k) dw`` and an exponential
  cutoff (used for real-time dynamics);
* ``linear_finite``: a handful of equally spaced modes with
  ``g_n = sqrt(lambda w_n / (M-1))``.

A single-mode (quantum Rabi) bath is built by :func:`single_mode`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ParameterError

BiasKind = Literal["imaginary", "real"]
Cutoff = Literal["hard", "exponential"]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the (non-)Hermitian spin-boson Hamiltonian.

    ``bias_kind="imaginary"`` gives the PT-symmetric bias ``i eps/2 sigma_z``;
    ``"real"`` gives the ordinary Hermitian bias ``eps/2 sigma_z``.
    """

    delta: float
    eps: float = 0.0
    lam: float = 0.0
    bias_kind: BiasKind = "imaginary"
    s: float = 1.0
    omega_c: float = 1.0

    def __post_init__(self):
        # delta = 0 is allowed: the projection solver handles it as the
        # decoupled limit.
        if not self.delta >= 0:
            raise ParameterError(f"delta must be non-negative, got {self.delta}")
        if not self.eps >= 0:
            raise ParameterError(f"eps must be non-negative, got {self.eps}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be non-negative, got {self.lam}")
        if not self.s > 0:
            raise ParameterError(f"s must be positive, got {self.s}")
        if not self.omega_c > 0:
            raise ParameterError(f"omega_c must be positive, got {self.omega_c}")
        if self.bias_kind not in ("imaginary", "real"):
            raise ParameterError(f"unknown bias_kind {self.bias_kind!r}")

    @property
    def bias(self) -> complex:
        """Diagonal matrix element of the spin-up block (``+b``; spin-down is ``-b``)."""
        if self.bias_kind == "imaginary":
            return 0.5j * self.eps
        return complex(0.5 * self.eps)

    @property
    def gain(self) -> float:
        """Imaginary part of :attr:`bias`; the norm obeys ``dN/dt = 2 gain (|l|^2 - |r|^2)``."""
        return self.bias.imag

    @property
    def hermitian(self) -> bool:
        return self.bias_kind == "real" or self.eps == 0.0

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DiscreteBath:
    """Finite set of bath modes sorted by increasing frequency."""

    omega: np.ndarray
    g: np.ndarray
    scheme: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if omega.ndim != 1 or omega.shape != g.shape:
            raise ParameterError("omega and g must be 1-D arrays of equal length")
        if omega.size and not np.all(omega > 0):
            raise ParameterError("bath frequencies must be strictly positive")
        if np.any(g < 0):
            raise ParameterError("bath couplings must be non-negative")
        order = np.argsort(omega, kind="stable")
        omega, g = omega[order], g[order]
        if omega.size > 1 and not np.all(np.diff(omega) > 0):
            raise ParameterError("bath frequencies must be distinct")
        omega.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "g", g)

    def __len__(self) -> int:
        return self.omega.size

    @property
    def modes(self) -> list[tuple[float, float]]:
        return list(zip(self.omega.tolist(), self.g.tolist()))

    @property
    def reorganization(self) -> float:
        """Polaron shift ``sum g_k^2 / w_k``."""
        return float(np.sum(self.g**2 / self.omega))

    @property
    def recurrence_time(self) -> float:
        """Poincare recurrence time ``2 pi / dw`` (infinite unless uniform)."""
        d_omega = self.meta.get("d_omega")
        if d_omega is None:
            return math.inf
        return 2 * math.pi / d_omega


def spectral_density(omega, p: ModelParams, cutoff: Cutoff = "hard"):
    """Ohmic-family spectral density ``J(w) = lam/2 w_c^(1-s) w^s``.

    With ``cutoff="hard"`` the density vanishes for ``w >= w_c``; with
    ``cutoff="exponential"`` it is multiplied by ``exp(-w/w_c)`` on the whole
    positive axis. Accepts scalars or arrays.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ParameterError("spectral density is defined for omega > 0 only")
    base = 0.5 * p.lam * p.omega_c ** (1 - p.s) * w**p.s
    if cutoff == "hard":
        out = np.where(w < p.omega_c, base, 0.0)
    elif cutoff == "exponential":
        out = base * np.exp(-w / p.omega_c)
    else:
        raise ParameterError(f"unknown cutoff {cutoff!r}")
    return out if out.ndim else float(out)


def discretize_wilson(p: ModelParams, Lambda: float = 1.2, M: int = 80) -> DiscreteBath:
    """Logarithmic (Wilson) discretization of the hard-cutoff density.

    Mode ``n = 1..M`` represents the interval ``[w_c L^-(n+1), w_c L^-n]``;
    its frequency is the J-weighted mean over the interval and ``g_n^2`` the
    integrated weight.
    """
    if not Lambda > 1:
        raise ParameterError(f"Wilson parameter Lambda must exceed 1, got {Lambda}")
    if int(M) != M or M < 1:
        raise ParameterError(f"M must be a positive integer, got {M}")
    s = p.s
    n = np.arange(1, int(M) + 1, dtype=float)
    g2 = (
        0.5 * p.lam * p.omega_c**2
        * (1 - Lambda ** (-(s + 1))) / (s + 1)
        * Lambda ** (-n * (s + 1))
    )
    omega = (
        (s + 1) / (s + 2)
        * (1 - Lambda ** (-(s + 2))) / (1 - Lambda ** (-(s + 1)))
        * p.omega_c * Lambda ** (-n)
    )
    return DiscreteBath(
        omega, np.sqrt(g2), "wilson",
        {"Lambda": float(Lambda), "M": int(M), "cutoff": "hard"},
    )


def wilson_coupling_sum(p: ModelParams, Lambda: float, M: int) -> float:
    """Closed form of ``sum_{n=1}^M g_n^2`` for the Wilson bath."""
    q = Lambda ** (-(p.s + 1))
    return 0.5 * p.lam * p.omega_c**2 * (1 - q) / (p.s + 1) * q * (1 - q**M) / (1 - q)


def discretize_uniform(p: ModelParams, M: int = 2000, omega_max: float = 4.0) -> DiscreteBath:
    """Uniform grid ``w_k = k dw``, ``dw = omega_max / M``, exponential cutoff."""
    if int(M) != M or M < 1:
        raise ParameterError(f"M must be a positive integer, got {M}")
    if not omega_max > 0:
        raise ParameterError(f"omega_max must be positive, got {omega_max}")
    M = int(M)
    d_omega = omega_max / M
    omega = np.arange(1, M + 1, dtype=float) * d_omega
    g2 = spectral_density(omega, p, cutoff="exponential") * d_omega
    return DiscreteBath(
        omega, np.sqrt(g2), "uniform",
        {"M": M, "omega_max": float(omega_max), "d_omega": d_omega, "cutoff": "exponential"},
    )


def discretize_linear_finite(
    p: ModelParams, M: int, omega_1: float = 1.0, omega_M: float = 1.4
) -> DiscreteBath:
    """Equally spaced finite bath with ``g_n = sqrt(lam w_n / (M-1))``."""
    if int(M) != M or M < 2:
        raise ParameterError("linear_finite needs M > 1; use single_mode() for M = 1")
    if not omega_M > omega_1 > 0:
        raise ParameterError("need omega_M > omega_1 > 0")
    M = int(M)
    spacing = (omega_M - omega_1) / (M - 1)
    omega = omega_1 + spacing * np.arange(M)
    g = np.sqrt(p.lam * omega / (M - 1))
    return DiscreteBath(
        omega, g, "linear_finite",
        {"M": M, "omega_1": float(omega_1), "omega_M": float(omega_M), "spacing": spacing},
    )


def single_mode(omega_0: float, coupling: float) -> DiscreteBath:
    """One bosonic mode; for the Rabi model the coupling is ``lambda`` itself."""
    if not omega_0 > 0:
        raise ParameterError("omega_0 must be positive")
    return DiscreteBath(
        np.array([float(omega_0)]), np.array([float(coupling)]), "single",
        {"M": 1, "omega_0": float(omega_0)},
    )


@dataclass(frozen=True)
class BathSpec:
    """Recipe for rebuilding a bath when the coupling changes.

    ``scheme`` is one of ``wilson``, ``uniform``, ``linear_finite`` or
    ``single``; ``options`` are forwarded to the matching constructor.
    """

    scheme: str
    options: tuple = ()

    @classmethod
    def of(cls, scheme: str, **options) -> "BathSpec":
        if scheme not in _BUILDERS:
            raise ParameterError(f"unknown bath scheme {scheme!r}")
        return cls(scheme, tuple(sorted(options.items())))

    def build(self, p: ModelParams) -> DiscreteBath:
        return _BUILDERS[self.scheme](p, **dict(self.options))

    def as_dict(self) -> dict:
        return {"scheme": self.scheme, **dict(self.options)}


def _single(p, omega_0=1.0):
    return single_mode(omega_0, p.lam)


_BUILDERS = {
    "wilson": discretize_wilson,
    "uniform": discretize_uniform,
    "linear_finite": discretize_linear_finite,
    "single": _single,
}
