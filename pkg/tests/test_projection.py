import math
from dataclasses import replace

import numpy as np
import pytest

from ptsb import ed
from ptsb.errors import ConvergenceError, ParameterError, SingularModeError
from ptsb.model import (BathSpec, DiscreteBath, ModelParams, discretize_linear_finite,
                        discretize_wilson, single_mode)
from ptsb.projection import (ProjectionState, SpectrumProblem, decoupled_solutions, detect_ep,
                             evaluate_residuals, initial_guess, main_branch, mode_displacements,
                             overlap, qubit_eigen, solve_selfconsistent, spectrum_sweep, sweep)

TOL = 1e-10
WILSON = BathSpec.of("wilson", Lambda=1.2, M=80)


def one_mode(w=1.0, g=0.3):
    return DiscreteBath(np.array([w]), np.array([g]), "single")


# -- displacements and residuals --------------------------------------------------------------

def test_displacements_symmetric_limit():
    bath = discretize_wilson(ModelParams(0.3, lam=0.2), 1.2, 20)
    A = 0.07
    alpha, beta = mode_displacements(A, A, bath)
    np.testing.assert_allclose(alpha, -bath.g / (2 * A + bath.omega), rtol=1e-14)
    np.testing.assert_allclose(beta, -alpha, rtol=1e-14)


def test_displacements_polaron_limit():
    bath = discretize_wilson(ModelParams(0.3, lam=0.2), 1.2, 20)
    alpha, beta = mode_displacements(0, 0, bath)
    np.testing.assert_allclose(alpha, -bath.g / bath.omega, rtol=1e-14)
    np.testing.assert_allclose(beta, bath.g / bath.omega, rtol=1e-14)


def test_displacements_single_mode_substitution():
    A, B = 0.2j, 0.1j
    alpha, beta = mode_displacements(A, B, one_mode(1.0, 0.3))
    assert alpha[0] == pytest.approx(0.3 * (0.1j - 1) / (1 + 0.3j), abs=1e-15)
    # back-substitution into the two linear mode equations
    assert abs(A * (alpha[0] - beta[0]) + alpha[0] + 0.3) <= 1e-14 * 0.3
    assert abs(B * (beta[0] - alpha[0]) + beta[0] - 0.3) <= 1e-14 * 0.3


def test_displacements_singular_mode_named():
    bath = DiscreteBath(np.array([0.5, 1.0]), np.array([0.1, 0.1]), "x")
    with pytest.raises(SingularModeError) as info:
        mode_displacements(-0.5, 0.0, bath)
    assert info.value.mode == 0


def test_overlap_log_space_clamp():
    big = np.full(10, 40.0 + 0j)
    assert overlap(big, -big) == 0
    a, b = np.array([0.3 + 0.1j]), np.array([-0.2j])
    direct = np.exp(-0.5 * (abs(a[0]) ** 2 + abs(b[0]) ** 2) + np.conj(a[0]) * b[0])
    assert overlap(a, b) == pytest.approx(direct, rel=1e-14)


def test_residuals_hermitian_guess_off_line():
    p = ModelParams(0.3, 0.1)
    bath = one_mode(1.0, 0.0)
    zeros = np.zeros(1, dtype=complex)
    st = ProjectionState(1 + 0j, zeros, zeros, 1 + 0j, -0.15 + 0.05j)
    res = evaluate_residuals(p, bath, st)
    assert abs(res.up_energy) <= 1e-15
    assert res.down_energy == pytest.approx(0.1j, abs=1e-15)


def test_residuals_reject_r_zero():
    zeros = np.zeros(1, dtype=complex)
    with pytest.raises(ParameterError):
        evaluate_residuals(ModelParams(0.3), one_mode(), ProjectionState(0j, zeros, zeros, 1, 0))


def test_residuals_see_inconsistent_eta():
    p = ModelParams(0.3, 0.1, lam=0.3)
    bath = one_mode(1.0, 0.3)
    sol = solve_selfconsistent(p, bath, initial_guess(p, bath))
    bad = replace(sol.state, alpha=sol.state.alpha * 1.01)
    assert evaluate_residuals(p, bath, bad).max > 1e-4


# -- bare qubit ----------------------------------------------------------------------------

@pytest.mark.parametrize("eps,expected", [(0.1, -0.1414213562373095), (0.4, -0.1322875655532295j)])
def test_bare_qubit(eps, expected):
    p = ModelParams(0.3, eps, lam=0.0)
    bath = discretize_wilson(p, 1.2, 10)
    sol = solve_selfconsistent(p, bath, initial_guess(p, bath), tol=TOL)
    assert sol.E == pytest.approx(expected, abs=1e-10)
    assert evaluate_residuals(p, bath, sol.state).max <= 1e-12
    # second branch from the conjugate-partner seed
    other = solve_selfconsistent(p, bath, initial_guess(p, bath, 1), tol=TOL)
    assert other.E == pytest.approx(-expected, abs=1e-10)


def test_qubit_eigen_branches():
    E0, r0 = qubit_eigen(ModelParams(0.3, 0.1), 0)
    E1, r1 = qubit_eigen(ModelParams(0.3, 0.1), 1)
    assert E0 == pytest.approx(-E1)
    # unbroken phase: |r| = 1 (PT-symmetric eigenvector)
    assert abs(r0) == pytest.approx(1.0, abs=1e-14)


def test_decoupled_delta_zero():
    p = ModelParams(0.0, 0.2, lam=0.3)
    bath = discretize_linear_finite(p, 3)
    up, down = decoupled_solutions(p, bath)
    shift = np.sum(bath.g**2 / bath.omega)
    assert up.E == pytest.approx(0.1j - shift, abs=1e-15)
    assert down.E == pytest.approx(-0.1j - shift, abs=1e-15)
    np.testing.assert_allclose(up.state.alpha, -bath.g / bath.omega)
    # the spin-up block equations hold exactly
    w, g, a = bath.omega, bath.g, up.state.alpha
    e_up = p.bias + np.sum(w * abs(a) ** 2 + 2 * g * a.real)
    assert up.E == pytest.approx(e_up, abs=1e-15)


# -- solver properties -----------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.05, 0.2, 0.4])
def test_pt_partner_is_solution(lam):
    p = ModelParams(0.3, 0.1, lam=lam)
    bath = discretize_linear_finite(p, 3)
    problem = SpectrumProblem(p, BathSpec.of("linear_finite", M=3), "lambda", TOL)
    grid = np.linspace(0, lam, 21)
    points = sweep(p, problem.bath_spec, "lambda", grid, tol=TOL)
    last = [q for q in points if q.x == grid[-1] and q.converged and not q.partner][0]
    partner = last.state.pt_partner()
    assert evaluate_residuals(p, bath, partner).max <= TOL
    assert partner.E == pytest.approx(np.conj(last.E))


def test_hermitian_consistency():
    p = ModelParams(0.3, 0.1, lam=0.3, bias_kind="real")
    bath = discretize_wilson(p, 1.2, 80)
    sol = solve_selfconsistent(p, bath, initial_guess(p, bath), tol=TOL)
    assert abs(sol.E.imag) <= TOL

    p0 = p.replace(eps=0.0)
    sol0 = solve_selfconsistent(p0, bath, initial_guess(p0, bath), tol=TOL)
    np.testing.assert_allclose(sol0.state.beta, -sol0.state.alpha, atol=1e-8)
    assert np.max(np.abs(sol0.state.alpha.imag)) <= 1e-8


def test_nonconvergence_raises():
    p = ModelParams(0.3, 0.1, lam=0.3)
    bath = discretize_wilson(p, 1.2, 40)
    with pytest.raises(ConvergenceError) as info:
        solve_selfconsistent(p, bath, initial_guess(p, bath), tol=TOL, max_iter=1)
    assert info.value.residual is None or info.value.residual > TOL


def test_rabi_agrees_with_ed_at_weak_coupling():
    p = ModelParams(0.5, 0.1, lam=0.1)
    bath = single_mode(1.0, 0.1)
    ref = ed.lowest_eigenvalues(p, bath, 2).eigenvalues
    for b in (0, 1):
        sol = solve_selfconsistent(p, bath, initial_guess(p, bath, b), tol=TOL)
        assert sol.E == pytest.approx(ref[b], abs=1e-3)


# -- sweeps and EP detection -----------------------------------------------------------------

def test_sweep_single_point_is_analytic():
    for delta, eps in [(0.3, 0.1), (0.2, 0.05), (0.1, 0.3)]:
        pts = sweep(ModelParams(delta, eps), WILSON, "lambda", [0.0])
        E = -np.sqrt(complex((0.5j * eps) ** 2 + 0.25 * delta**2))
        assert min(q.E for q in pts if q.converged and not q.partner) == pytest.approx(E, abs=1e-10)


def test_sweep_rejects_bad_grid():
    with pytest.raises(ParameterError):
        sweep(ModelParams(0.3, 0.1), WILSON, "lambda", [0.2, 0.1])
    with pytest.raises(ParameterError):
        sweep(ModelParams(0.3, 0.1), WILSON, "mass", [0.1])


def test_converged_points_close_residuals():
    p = ModelParams(0.3, 0.1)
    spec = BathSpec.of("wilson", Lambda=1.2, M=40)
    grid = np.linspace(0, 1.0, 21)
    problem = SpectrumProblem(p, spec, "lambda", TOL)
    for q in sweep(p, spec, "lambda", grid, tol=TOL):
        if q.converged:
            p_x, bath = problem.at(q.x)
            assert evaluate_residuals(p_x, bath, q.state).max <= TOL


def test_reverse_sweep_reproduces_pre_ep_branch():
    p = ModelParams(0.3, 0.1)
    spec = BathSpec.of("wilson", Lambda=1.2, M=40)
    grid = np.linspace(0, 0.4, 17)
    fwd = {q.x: q for q in main_branch(sweep(p, spec, "lambda", grid, tol=TOL))}
    assert all(abs(q.E.imag) < 1e-6 for q in fwd.values())
    seed = fwd[grid[-1]].state
    problem = SpectrumProblem(p, spec, "lambda", TOL)
    prev = seed
    for x in grid[::-1]:
        sol = problem.solve(x, prev)
        assert sol.E == pytest.approx(fwd[x].E, abs=10 * TOL)
        prev = sol.state


def test_bare_qubit_ep_in_eps():
    problem = SpectrumProblem(ModelParams(0.3, 0.0, lam=0.0), WILSON, "eps", TOL)
    _, ep = spectrum_sweep(problem, np.linspace(0, 0.6, 31))
    assert ep.found
    assert ep.x_lo <= 0.3 <= ep.x_hi
    assert ep.x_star == pytest.approx(0.3, abs=1e-6)
    assert ep.bracket_hi - ep.bracket_lo <= 1e-4 * 0.6


def test_no_ep_in_unbroken_sweep():
    problem = SpectrumProblem(ModelParams(0.3, 0.0, lam=0.0), WILSON, "eps", TOL)
    _, ep = spectrum_sweep(problem, np.linspace(0, 0.2, 11))
    assert not ep.found and ep.x_star is None


def test_broken_phase_pair_reported():
    p = ModelParams(0.3, 0.4, lam=0.0)
    pts = sweep(p, WILSON, "lambda", [0.0])
    Es = sorted((q.E for q in pts if q.converged), key=lambda e: e.imag)
    assert len(Es) == 2
    assert Es[0] == pytest.approx(np.conj(Es[1]), abs=1e-12)
    assert Es[0] == pytest.approx(-0.5j * math.sqrt(0.07), abs=1e-10)


def test_ep_estimate_invariant_on_coupling_sweep():
    problem = SpectrumProblem(ModelParams(0.3, 0.1), BathSpec.of("wilson", Lambda=1.2, M=40),
                              "lambda", TOL)
    _, ep = spectrum_sweep(problem, np.linspace(0, 1.0, 26))
    assert ep.found
    lo = problem.try_solve(ep.bracket_lo, problem.guess(ep.bracket_lo))
    assert lo is not None and abs(lo.E.imag) < 1e-6
    assert ep.x_lo <= ep.x_star <= ep.x_hi
    d = ep.as_dict()
    assert d["mode"] == "imaginary-onset" and d["parameter"] == "lambda"


def test_detect_ep_grid_only():
    pts = sweep(ModelParams(0.3, 0.0), WILSON, "eps", np.linspace(0, 0.6, 13))
    ep = detect_ep(pts)
    # at eps = delta exactly the bare-qubit eigenvalue is 0, still below delta_ep
    assert ep.found and ep.x_lo == pytest.approx(0.3) and ep.x_hi == pytest.approx(0.35)
    assert ep.refinements == 0
