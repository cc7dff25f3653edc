"""Dormand-Prince 5(4) stepper with dense output for complex ODE systems.

A small explicit integrator rather than ``scipy.integrate.solve_ivp`` because
the caller needs to rescale part of the state between steps (amplitude
bookkeeping in the gain/loss regime) and wants rejected-step statistics.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import IntegrationError

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth- minus fourth-order weights, including the FSAL stage
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (Shampine 1986), columns multiply theta, theta^2, ...
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1 / 5


def _rms(x):
    return math.sqrt(float(np.mean(np.abs(x) ** 2)))


class DormandPrince:
    """Adaptive stepper; call :meth:`step` until ``t`` reaches ``t_bound``.

    After each accepted step :meth:`interpolate` evaluates the dense output
    anywhere in ``[t_old, t]``.
    """

    def __init__(self, fun, t0, y0, t_bound, rtol=1e-8, atol=1e-10,
                 first_step=None, max_step=math.inf, min_step=1e-12):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=complex)
        self.t_bound = float(t_bound)
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self.min_step = min_step
        self.f = self._eval(self.t, self.y)
        self.h = first_step if first_step else self._initial_step()
        self.t_old = self.t
        self.y_old = self.y
        self.K = np.empty((7, self.y.size), dtype=complex)
        self.n_steps = 0
        self.n_rejected = 0
        self.nfev = 1

    def _eval(self, t, y):
        out = self.fun(t, y)
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"non-finite derivative at t={t:.6g}")
        return out

    def _initial_step(self):
        # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
        scale = self.atol + self.rtol * np.abs(self.y)
        d0 = _rms(self.y / scale)
        d1 = _rms(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, abs(self.t_bound - self.t))
        y1 = self.y + h0 * self.f
        f1 = self.fun(self.t + h0, y1)
        d2 = _rms((f1 - self.f) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1, self.max_step)

    def step(self):
        """Advance by one accepted step."""
        t, y, f = self.t, self.y, self.f
        h = min(self.h, self.max_step, self.t_bound - t)
        K = self.K
        while True:
            if h < self.min_step:
                raise IntegrationError(f"step size underflow (h={h:.3e}) at t={t:.6g}")
            K[0] = f
            for s in range(1, 6):
                dy = np.dot(A[s], K[:s]) * h
                K[s] = self._eval(t + C[s] * h, y + dy)
            y_new = y + h * np.dot(B, K[:6])
            f_new = self._eval(t + h, y_new)
            K[6] = f_new
            self.nfev += 6
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h * np.dot(E, K) / scale)
            if err <= 1:
                factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err**ERROR_EXPONENT)
                break
            self.n_rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err**ERROR_EXPONENT)

        self.t_old, self.y_old, self.h_used = t, y, h
        self.t = t + h if t + h < self.t_bound else self.t_bound
        self.y, self.f = y_new, f_new
        self.h = h * factor
        self.n_steps += 1

    def interpolate(self, t):
        """Dense output of the last step at time ``t``."""
        theta = (t - self.t_old) / self.h_used
        powers = np.cumprod(np.full(4, theta))
        return self.y_old + self.h_used * (self.K.T @ (P @ powers))

    def rescale(self, index, factor):
        """Multiply components ``index`` of the current state by ``factor``.

        Only valid for a linear-homogeneous subsystem: the stored derivative
        is scaled the same way so the FSAL stage stays consistent.
        """
        self.y = self.y.copy()
        self.f = self.f.copy()
        self.y[index] *= factor
        self.f[index] *= factor
