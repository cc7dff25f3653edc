"""Variational real-time dynamics with the asymmetric coherent-state ansatz.

The trial state is ``(l D(alpha)|0>, r D(beta)|0>)`` with all parameters
time dependent. The equations of motion follow from the Euler-Lagrange
equations of the symmetrized Lagrangian ``<psi|(i/2) d/dt<-> - H|psi>``::

    i l a_k'  = l (w a_k + g_k) + (D/2) r eta (a_k - b_k) - i G l a_k
    i r b_k'  = r (w b_k - g_k) + (D/2) l eta* (b_k - a_k) + i G r b_k
    i l'      = -(D/2) eta r + l [ b - (i/2) S_a + sum w|a|^2 + g (a + a*) ]
    i r'      = -(D/2) eta* l + r [ -b - (i/2) S_b + sum w|b|^2 - g (b + b*) ]

with ``b`` the spin-up bias element, ``G = Im b`` and
``S_a = sum (a* a' - a'* a)``. The ``G`` terms vanish for a Hermitian bias.
The norm ``N = |l|^2 + |r|^2`` then obeys ``dN/dt = 2 G (|l|^2 - |r|^2)``.

``l`` and ``r`` grow exponentially in the PT-broken phase. They are stored
divided by a common factor ``exp(log_scale / 2)``; every reported
observable except the log-norm is invariant under that rescaling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dopri import DormandPrince
from .errors import IntegrationError, ParameterError
from .model import DiscreteBath, ModelParams

log = logging.getLogger(__name__)

R_FLOOR = 1e-8
UNDERFLOW_EXPONENT = -700.0
RESCALE_THRESHOLD = 20.0


@dataclass
class DynState:
    l: complex
    r: complex
    alpha: np.ndarray
    beta: np.ndarray
    t: float = 0.0
    log_scale: float = 0.0

    @classmethod
    def spin_up(cls, modes: int, r_floor: float = R_FLOOR) -> "DynState":
        """Bath vacuum with the spin up; ``r`` is lifted to ``r_floor``.

        The spin-down displacement equation divides by ``r``, so ``r = 0``
        cannot be integrated directly.
        """
        zeros = np.zeros(modes, dtype=complex)
        return cls(1 + 0j, complex(r_floor), zeros, zeros.copy())

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.l, self.r], self.alpha, self.beta]).astype(complex)

    @classmethod
    def unpack(cls, y, t=0.0, log_scale=0.0) -> "DynState":
        M = (y.size - 2) // 2
        return cls(complex(y[0]), complex(y[1]), y[2:2 + M].copy(), y[2 + M:].copy(), t, log_scale)

    @property
    def log_norm(self) -> float:
        return self.log_scale + math.log(abs(self.l) ** 2 + abs(self.r) ** 2)


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    s_z: np.ndarray
    n_b: np.ndarray
    log_norm: np.ndarray
    re_H: np.ndarray
    im_H: np.ndarray
    dnorm_residual: np.ndarray
    stride: float
    stats: dict = field(default_factory=dict)
    final_state: DynState | None = None

    COLUMNS = ("t", "s_z", "n_b", "log_norm", "re_H_over_N", "im_H_over_N", "dnorm_residual")

    @property
    def ok(self) -> bool:
        return self.stats.get("status") == "ok"

    def rows(self):
        return zip(self.t, self.s_z, self.n_b, self.log_norm, self.re_H, self.im_H,
                   self.dnorm_residual)

    def __len__(self):
        return self.t.size


def _log_overlap(alpha, beta):
    return (-0.5 * np.sum(alpha.real**2 + alpha.imag**2 + beta.real**2 + beta.imag**2)
            + np.sum(np.conj(alpha) * beta))


def _eta(alpha, beta):
    expo = _log_overlap(alpha, beta)
    if expo.real < UNDERFLOW_EXPONENT:
        return 0j, True
    return np.exp(expo), False


class _Rhs:
    """Right-hand side on the packed vector ``[l, r, alpha..., beta...]``."""

    def __init__(self, p: ModelParams, bath: DiscreteBath):
        self.half_delta = 0.5 * p.delta
        self.bias = p.bias
        self.gain = p.gain
        self.w = bath.omega
        self.g = bath.g
        self.M = len(bath)
        self.underflows = 0

    def __call__(self, t, y):
        M = self.M
        l, r = y[0], y[1]
        alpha, beta = y[2:2 + M], y[2 + M:]
        w, g = self.w, self.g
        eta, under = _eta(alpha, beta)
        self.underflows += under
        diff = alpha - beta
        dalpha = -1j * (w * alpha + g + (self.half_delta * eta * r / l) * diff) - self.gain * alpha
        dbeta = -1j * (w * beta - g - (self.half_delta * np.conj(eta) * l / r) * diff) + self.gain * beta
        s_a = 2j * np.sum(np.conj(alpha) * dalpha).imag
        s_b = 2j * np.sum(np.conj(beta) * dbeta).imag
        e_a = np.sum(w * (alpha.real**2 + alpha.imag**2) + 2 * g * alpha.real)
        e_b = np.sum(w * (beta.real**2 + beta.imag**2) - 2 * g * beta.real)
        dl = -1j * (-self.half_delta * eta * r + l * (self.bias - 0.5j * s_a + e_a))
        dr = -1j * (-self.half_delta * np.conj(eta) * l + r * (-self.bias - 0.5j * s_b + e_b))
        out = np.empty_like(y)
        out[0], out[1] = dl, dr
        out[2:2 + M] = dalpha
        out[2 + M:] = dbeta
        return out


def eom_rhs(p: ModelParams, bath: DiscreteBath, st: DynState):
    """Time derivatives ``(l', r', alpha', beta')`` at ``st``."""
    if st.l == 0 or st.r == 0:
        raise ParameterError("l and r must be non-zero (the equations divide by them)")
    d = _Rhs(p, bath)(st.t, st.pack())
    M = len(bath)
    return complex(d[0]), complex(d[1]), d[2:2 + M], d[2 + M:]


def energy_expectation(p: ModelParams, bath: DiscreteBath, st: DynState) -> complex:
    """``<psi|H|psi>`` for the stored (possibly rescaled) amplitudes.

    Divide by ``|l|^2 + |r|^2`` of the same state for the normalized value.
    """
    w, g = bath.omega, bath.g
    a, b_ = st.alpha, st.beta
    nl, nr = abs(st.l) ** 2, abs(st.r) ** 2
    eta, _ = _eta(a, b_)
    hop = st.l.conjugate() * st.r * eta
    return complex(
        nl * np.sum(w * np.abs(a) ** 2 + 2 * g * a.real)
        + nr * np.sum(w * np.abs(b_) ** 2 - 2 * g * b_.real)
        - 0.5 * p.delta * (hop + hop.conjugate())
        + p.bias * (nl - nr)
    )


def observables(st: DynState) -> tuple[float, float, float]:
    """``(s_z, n_b, log_norm)``; the first two are independent of the scale."""
    nl, nr = abs(st.l) ** 2, abs(st.r) ** 2
    norm = nl + nr
    if not norm > 0:
        raise ParameterError("state has zero norm")
    s_z = (nl - nr) / norm
    n_b = (nl * np.sum(np.abs(st.alpha) ** 2) + nr * np.sum(np.abs(st.beta) ** 2)) / norm
    return float(s_z), float(n_b), st.log_scale + math.log(norm)


def _norm_derivative_residual(t, log_norm, s_z, gain):
    """``|dN/dt - 2 G s_z N| / max N`` with ``N`` scaled to its maximum."""
    if t.size < 3:
        return np.full(t.size, np.nan)
    n = np.exp(log_norm - np.max(log_norm))
    dn = np.gradient(n, t, edge_order=2)
    return np.abs(dn - 2 * gain * s_z * n)


def integrate(p: ModelParams, bath: DiscreteBath, init: DynState | None = None,
              t_end: float = 200.0, *, rtol: float = 1e-8, atol: float = 1e-10,
              stride: float = 0.05, r_floor: float = R_FLOOR, first_step=None,
              max_steps: int = 10_000_000) -> TrajectoryRecord:
    """Integrate the equations of motion and sample observables every ``stride``.

    On step-size underflow or a non-finite state the trajectory recorded so
    far is returned with ``stats["status"] == "aborted"``.
    """
    if not t_end > 0:
        raise ParameterError("t_end must be positive")
    if not stride > 0:
        raise ParameterError("stride must be positive")
    if init is None:
        init = DynState.spin_up(len(bath), r_floor)
    stats = {
        "status": "ok", "steps": 0, "rejected": 0, "nfev": 0,
        "recurrence_time": bath.recurrence_time, "r_floor": r_floor,
        "rtol": rtol, "atol": atol, "warnings": [],
    }
    if t_end >= bath.recurrence_time:
        msg = f"t_end={t_end} exceeds the recurrence time {bath.recurrence_time:.6g}"
        log.warning(msg)
        stats["warnings"].append(msg)

    n_samples = int(math.floor(t_end / stride + 1e-9)) + 1
    times = init.t + stride * np.arange(n_samples)
    if times[-1] < init.t + t_end - 1e-12:
        times = np.append(times, init.t + t_end)
    rows = np.full((times.size, 5), np.nan)

    rhs = _Rhs(p, bath)
    log_scale = init.log_scale
    lr = slice(0, 2)

    def record(i, y):
        st = DynState.unpack(y, times[i], log_scale)
        s_z, n_b, log_norm = observables(st)
        h = energy_expectation(p, bath, st) / (abs(st.l) ** 2 + abs(st.r) ** 2)
        rows[i] = (s_z, n_b, log_norm, h.real, h.imag)

    solver = None
    i = 0
    try:
        record(0, init.pack())
        i = 1
        solver = DormandPrince(rhs, init.t, init.pack(), times[-1], rtol, atol, first_step)
        while i < times.size:
            if solver.n_steps >= max_steps:
                raise IntegrationError(f"max_steps={max_steps} reached at t={solver.t:.6g}")
            solver.step()
            while i < times.size and times[i] <= solver.t:
                y = solver.y if times[i] == solver.t else solver.interpolate(times[i])
                record(i, y)
                i += 1
            norm = abs(solver.y[0]) ** 2 + abs(solver.y[1]) ** 2
            if abs(math.log(norm)) > RESCALE_THRESHOLD:
                solver.rescale(lr, 1 / math.sqrt(norm))
                log_scale += math.log(norm)
    except (IntegrationError, FloatingPointError, ZeroDivisionError) as exc:
        stats["status"] = "aborted"
        stats["message"] = str(exc)
        log.error("integration aborted: %s", exc)

    if solver is not None:
        stats.update(steps=solver.n_steps, rejected=solver.n_rejected, nfev=solver.nfev)
    stats["overlap_underflows"] = rhs.underflows
    rows, times = rows[:i], times[:i]
    resid = _norm_derivative_residual(times, rows[:, 2], rows[:, 0], p.gain)
    final = None
    if solver is not None and stats["status"] == "ok":
        final = DynState.unpack(solver.y, solver.t, log_scale)
    return TrajectoryRecord(times, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4],
                            resid, stride, stats, final)


def norm_flow_check(traj: TrajectoryRecord, p: ModelParams) -> float:
    """Max deviation from ``dN/dt = 2 Im(b) (|l|^2 - |r|^2)`` over interior samples.

    Central differences of ``N`` relative to ``max N``.
    """
    if len(traj) < 3:
        raise ParameterError("norm_flow_check needs at least 3 samples")
    resid = _norm_derivative_residual(traj.t, traj.log_norm, traj.s_z, p.gain)
    return float(np.max(resid[1:-1]))
