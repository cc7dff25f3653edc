import math

import numpy as np
import pytest
from scipy.integrate import RK45

from ptsb import dopri
from ptsb.dopri import DormandPrince
from ptsb.errors import IntegrationError


def test_tableau_matches_scipy():
    np.testing.assert_allclose(dopri.C, RK45.C, rtol=0, atol=1e-16)
    np.testing.assert_allclose(dopri.B, RK45.B, rtol=0, atol=1e-16)
    np.testing.assert_allclose(dopri.E, RK45.E, rtol=0, atol=1e-16)
    np.testing.assert_allclose(dopri.P, RK45.P, rtol=0, atol=1e-15)
    for s, row in enumerate(dopri.A):
        np.testing.assert_allclose(row, RK45.A[s, :s], rtol=0, atol=1e-15)


def test_tableau_order_conditions():
    A = np.zeros((6, 6))
    for s, row in enumerate(dopri.A):
        A[s, :s] = row
    np.testing.assert_allclose(A.sum(axis=1), dopri.C, atol=1e-15)
    assert dopri.B.sum() == pytest.approx(1.0, abs=1e-15)
    assert dopri.B @ dopri.C**4 == pytest.approx(1 / 5, abs=1e-15)
    assert dopri.E.sum() == pytest.approx(0.0, abs=1e-15)


def run_to(solver, t_end):
    while solver.t < t_end:
        solver.step()
    return solver


def test_complex_oscillator_accuracy():
    w = 1.3
    s = run_to(DormandPrince(lambda t, y: 1j * w * y, 0.0, [1.0 + 0j], 50.0, 1e-10, 1e-12), 50.0)
    assert abs(s.y[0] - np.exp(1j * w * 50.0)) < 1e-8
    assert s.n_steps > 0 and s.nfev >= 6 * s.n_steps


def test_dense_output_accuracy():
    w = 0.7
    s = DormandPrince(lambda t, y: -1j * w * y, 0.0, [1.0 + 0j], 10.0, 1e-10, 1e-12)
    worst = 0.0
    while s.t < 10.0:
        s.step()
        for theta in (0.25, 0.5, 0.75):
            t = s.t_old + theta * (s.t - s.t_old)
            worst = max(worst, abs(s.interpolate(t)[0] - np.exp(-1j * w * t)))
    assert worst < 1e-8


def test_exact_end_time():
    s = run_to(DormandPrince(lambda t, y: -y, 0.0, [1.0], 3.3), 3.3)
    assert s.t == 3.3
    assert abs(s.y[0] - math.exp(-3.3)) < 1e-7


def test_rescale_keeps_linear_system_consistent():
    # y' = y grows; rescaling mid-way and undoing it at the end gives e^T
    s = DormandPrince(lambda t, y: y, 0.0, [1.0 + 0j], 30.0, 1e-10, 1e-12)
    log_scale = 0.0
    while s.t < 30.0:
        s.step()
        if abs(s.y[0]) > 1e3:
            log_scale += math.log(abs(s.y[0]))
            s.rescale(slice(0, 1), 1 / abs(s.y[0]))
    assert math.log(abs(s.y[0])) + log_scale == pytest.approx(30.0, abs=1e-7)


def test_non_finite_derivative_raises():
    def f(t, y):
        return np.array([np.nan + 0j]) if t > 0.5 else -y

    s = DormandPrince(f, 0.0, [1.0], 2.0)
    with pytest.raises(IntegrationError, match="non-finite"):
        run_to(s, 2.0)


def test_step_underflow_raises():
    # finite-time blow-up at t = 1 forces ever smaller steps
    s = DormandPrince(lambda t, y: y**2, 0.0, [1.0 + 0j], 2.0, min_step=1e-6)
    with pytest.raises(IntegrationError):
        run_to(s, 2.0)
