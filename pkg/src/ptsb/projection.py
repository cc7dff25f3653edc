"""Eigenvalues from the displaced-oscillator projection equations.

The trial eigenstate is ``(D(alpha)|0>, r D(beta)|0>)`` in the sigma_z basis.
Projecting ``H|psi> = E|psi>`` onto the displaced vacua and their
one-phonon companions gives, with ``A = D eta r / 2``, ``B = D eta* / (2 r)``
and ``b`` the spin-up bias element::

    E = -A + b + sum w|a|^2 + sum g (a + a*)            (spin-up energy)
    A (a_k - b_k) + w_k a_k + g_k = 0
    E = -B - b + sum w|b|^2 - sum g (b + b*)            (spin-down energy)
    B (b_k - a_k) + w_k b_k - g_k = 0

For given ``(eta, r)`` the per-mode pairs are a 2x2 linear solve, so the
search space is just the two complex numbers ``eta`` and ``r``; the solver
runs a damped Newton iteration on them in real coordinates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, ParameterError, SingularModeError
from .model import BathSpec, DiscreteBath, ModelParams

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_DELTA_EP = 1e-6
FD_STEP = 1e-7
UNDERFLOW_EXPONENT = -700.0


@dataclass(frozen=True, eq=False)
class ProjectionState:
    r: complex
    alpha: np.ndarray
    beta: np.ndarray
    eta: complex
    E: complex

    def pt_partner(self) -> "ProjectionState":
        """Image under PT, normalized back to unit spin-up amplitude.

        ``PT (D(a)|0>, r D(b)|0>) = r* (D(-b*)|0>, D(-a*)|0> / r*)`` so the
        partner has ``r' = 1/r*``, ``alpha' = -beta*``, ``beta' = -alpha*``
        and eigenvalue ``E*``.
        """
        alpha = -np.conj(self.beta)
        beta = -np.conj(self.alpha)
        return ProjectionState(1 / np.conj(self.r), alpha, beta, overlap(alpha, beta), np.conj(self.E))


@dataclass(frozen=True)
class Residuals:
    up_energy: complex
    up_modes: float
    down_energy: complex
    down_modes: float

    @property
    def max(self) -> float:
        return max(abs(self.up_energy), self.up_modes, abs(self.down_energy), self.down_modes)


@dataclass
class EigenSolution:
    E: complex
    state: ProjectionState
    residuals: Residuals
    iterations: int
    converged: bool = True

    @property
    def residual(self) -> float:
        return self.residuals.max


def overlap_exponent(alpha, beta) -> complex:
    return complex(-0.5 * np.sum(np.abs(alpha) ** 2 + np.abs(beta) ** 2) + np.sum(np.conj(alpha) * beta))


def overlap(alpha, beta) -> complex:
    """``<0|D(alpha)^dag D(beta)|0>``, evaluated in log space."""
    expo = overlap_exponent(alpha, beta)
    if expo.real < UNDERFLOW_EXPONENT:
        return 0j
    return complex(np.exp(expo))


def mode_displacements(A: complex, B: complex, bath: DiscreteBath):
    """Exact per-mode solution of the two linear displacement equations."""
    w, g = bath.omega, bath.g
    denom = w * (A + B + w)
    small = np.abs(denom) < 1e-14
    if np.any(small):
        k = int(np.flatnonzero(small)[0])
        raise SingularModeError(k, abs(denom[k]))
    alpha = g * (A - B - w) / denom
    beta = g * (A - B + w) / denom
    return alpha, beta


def _energies(p, bath, r, alpha, beta, eta):
    w, g = bath.omega, bath.g
    b = p.bias
    e_up = (-0.5 * p.delta * eta * r + b
            + np.sum(w * np.abs(alpha) ** 2) + np.sum(g * 2 * alpha.real))
    e_down = (-0.5 * p.delta * np.conj(eta) / r - b
              + np.sum(w * np.abs(beta) ** 2) - np.sum(g * 2 * beta.real))
    return complex(e_up), complex(e_down)


def evaluate_residuals(p: ModelParams, bath: DiscreteBath, st: ProjectionState) -> Residuals:
    """Residuals of the four projection equations at ``st``.

    The overlap is recomputed from ``st.alpha`` and ``st.beta`` rather than
    taken from ``st.eta``, so an inconsistent overlap shows up here.
    """
    if st.r == 0:
        raise ParameterError("r = 0 lies outside the ansatz (spin-down equation divides by r)")
    eta = overlap(st.alpha, st.beta)
    w, g = bath.omega, bath.g
    A = 0.5 * p.delta * eta * st.r
    B = 0.5 * p.delta * np.conj(eta) / st.r
    e_up, e_down = _energies(p, bath, st.r, st.alpha, st.beta, eta)
    res_b = A * (st.alpha - st.beta) + w * st.alpha + g
    res_d = B * (st.beta - st.alpha) + w * st.beta - g
    return Residuals(
        up_energy=st.E - e_up,
        up_modes=float(np.max(np.abs(res_b), initial=0.0)),
        down_energy=st.E - e_down,
        down_modes=float(np.max(np.abs(res_d), initial=0.0)),
    )


def qubit_eigen(p: ModelParams, branch: int = 0) -> tuple[complex, complex]:
    """Bare-qubit eigenvalue and amplitude ratio ``r`` for ``branch`` 0 or 1.

    Branch 0 is ``-sqrt(b^2 + D^2/4)`` (principal root): the lower real
    level in the unbroken phase and the ``-i`` level beyond the EP.
    """
    root = np.sqrt(complex(p.bias**2 + 0.25 * p.delta**2))
    E = -root if branch == 0 else root
    if p.delta == 0:
        return E, 0j
    return E, 2 * (p.bias - E) / p.delta


def initial_guess(p: ModelParams, bath: DiscreteBath, branch: int = 0) -> ProjectionState:
    """Bare-qubit ``r`` dressed by one displacement pass at ``eta = 1``."""
    E, r = qubit_eigen(p, branch)
    if len(bath) == 0 or p.lam == 0 or not np.any(bath.g):
        zeros = np.zeros(len(bath), dtype=complex)
        return ProjectionState(r, zeros, zeros.copy(), 1 + 0j, E)
    A = 0.5 * p.delta * r
    B = 0.5 * p.delta / r
    try:
        alpha, beta = mode_displacements(A, B, bath)
    except SingularModeError:
        alpha = -bath.g / bath.omega + 0j
        beta = -alpha
    eta = overlap(alpha, beta)
    st = ProjectionState(r, alpha, beta, eta, E)
    e_up, _ = _energies(p, bath, r, alpha, beta, eta)
    return replace(st, E=e_up)


def decoupled_solutions(p: ModelParams, bath: DiscreteBath) -> list[EigenSolution]:
    """Exact ``D = 0`` eigenpairs: each spin projection with its polaron shift.

    The spin-up branch has ``r = 0`` and the spin-down branch ``r = inf``;
    both have ``E = +-b - sum g^2/w``.
    """
    shift = bath.reorganization
    up = -bath.g / bath.omega + 0j
    down = bath.g / bath.omega + 0j
    eta = overlap(up, down)
    zero = Residuals(0j, 0.0, 0j, 0.0)
    return [
        EigenSolution(p.bias - shift, ProjectionState(0j, up, down, eta, p.bias - shift), zero, 0),
        EigenSolution(-p.bias - shift,
                      ProjectionState(complex(math.inf), up, down, eta, -p.bias - shift), zero, 0),
    ]


class _System:
    """Reduced equations in the four real unknowns ``(Re eta, Im eta, Re r, Im r)``."""

    def __init__(self, p, bath):
        self.p = p
        self.bath = bath

    def state(self, x):
        eta = complex(x[0], x[1])
        r = complex(x[2], x[3])
        if r == 0:
            raise ZeroDivisionError("r = 0")
        A = 0.5 * self.p.delta * eta * r
        B = 0.5 * self.p.delta * np.conj(eta) / r
        alpha, beta = mode_displacements(A, B, self.bath)
        return r, alpha, beta

    def __call__(self, x):
        r, alpha, beta = self.state(x)
        eta = complex(x[0], x[1])
        eta_new = overlap(alpha, beta)
        e_up, e_down = _energies(self.p, self.bath, r, alpha, beta, eta)
        f1 = eta_new - eta
        f2 = e_up - e_down
        return np.array([f1.real, f1.imag, f2.real, f2.imag])


def _jacobian(fun, x, f0):
    J = np.empty((4, 4))
    for j in range(4):
        h = FD_STEP * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        J[:, j] = (fun(xp) - f0) / h
    return J


def solve_selfconsistent(p: ModelParams, bath: DiscreteBath, guess: ProjectionState,
                         tol: float = DEFAULT_TOL, max_iter: int = 2000) -> EigenSolution:
    """Converge the projection equations from ``guess``.

    Raises :class:`ConvergenceError` if the max residual does not drop below
    ``tol`` within ``max_iter`` Newton steps.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if p.delta == 0:
        options = decoupled_solutions(p, bath)
        return min(options, key=lambda s: abs(s.E - guess.E))
    if guess.r == 0 or not np.isfinite(guess.r):
        raise ParameterError("guess must have finite non-zero r")

    fun = _System(p, bath)
    x = np.array([guess.eta.real, guess.eta.imag, guess.r.real, guess.r.imag])
    f = fun(x)
    norm = np.max(np.abs(f))
    # Newton converges the reduced system; the residual check below runs on
    # the reconstructed state.
    inner_tol = 0.05 * tol
    it = 0
    while it < max_iter:
        if norm <= inner_tol:
            break
        it += 1
        J = _jacobian(fun, x, f)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -f, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("non-finite Newton step", iterations=it, residual=norm)
        t = 1.0
        while True:
            trial = x + t * step
            try:
                f_trial = fun(trial)
                n_trial = np.max(np.abs(f_trial))
            except (SingularModeError, ZeroDivisionError, FloatingPointError):
                n_trial = math.inf
            if n_trial < (1 - 1e-4 * t) * norm or t < 1e-3:
                break
            t *= 0.5
        if not np.isfinite(n_trial):
            raise ConvergenceError("Newton step left the domain", iterations=it, residual=norm)
        x, f, norm = trial, f_trial, n_trial

    r, alpha, beta = fun.state(x)
    eta = overlap(alpha, beta)
    e_up, _ = _energies(p, bath, r, alpha, beta, eta)
    st = ProjectionState(r, alpha, beta, eta, e_up)
    res = evaluate_residuals(p, bath, st)
    if res.max > tol:
        raise ConvergenceError(
            f"projection equations not converged: residual {res.max:.3e} after {it} iterations",
            iterations=it, residual=res.max,
        )
    return EigenSolution(e_up, st, res, it)


# ----------------------------------------------------------------------------
# sweeps and exceptional points


@dataclass
class BranchPoint:
    x: float
    E: complex
    residual: float
    converged: bool
    iterations: int
    branch: int = 0
    state: ProjectionState | None = field(default=None, repr=False)
    partner: bool = False


@dataclass
class EpEstimate:
    parameter: str
    found: bool
    x_lo: float | None = None
    x_hi: float | None = None
    x_star: float | None = None
    mode: str = "imaginary-onset"
    bracket_lo: float | None = None
    bracket_hi: float | None = None
    slope_left: float | None = None
    slope_right: float | None = None
    slope_gap: float | None = None
    pre_ep_variation: float | None = None
    refinements: int = 0

    def as_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass(frozen=True)
class SpectrumProblem:
    """Parameter template plus sweep axis; builds the point-``x`` problem."""

    params: ModelParams
    bath_spec: BathSpec
    axis: str = "lambda"
    tol: float = DEFAULT_TOL
    max_iter: int = 2000

    def __post_init__(self):
        if self.axis not in ("lambda", "eps"):
            raise ParameterError(f"axis must be 'lambda' or 'eps', got {self.axis!r}")

    def at(self, x: float) -> tuple[ModelParams, DiscreteBath]:
        p = self.params.replace(lam=x) if self.axis == "lambda" else self.params.replace(eps=x)
        return p, self._bath(p)

    def _bath(self, p):
        # The bath depends on lambda only, so eps sweeps reuse one instance.
        if self.axis == "eps":
            cached = getattr(self, "_cached_bath", None)
            if cached is None:
                cached = self.bath_spec.build(p)
                object.__setattr__(self, "_cached_bath", cached)
            return cached
        return self.bath_spec.build(p)

    def solve(self, x: float, guess: ProjectionState) -> EigenSolution:
        p, bath = self.at(x)
        return solve_selfconsistent(p, bath, guess, self.tol, self.max_iter)

    def try_solve(self, x, guess):
        try:
            return self.solve(x, guess)
        except (ConvergenceError, SingularModeError, ZeroDivisionError, FloatingPointError) as exc:
            log.debug("x=%g: %s", x, exc)
            return None

    def guess(self, x: float, branch: int = 0) -> ProjectionState:
        p, bath = self.at(x)
        return initial_guess(p, bath, branch)


def _perturbed(st: ProjectionState, rel: float) -> list[ProjectionState]:
    return [replace(st, r=st.r * f) for f in (1 + rel, 1 - rel, 1 + 1j * rel, 1 - 1j * rel)]


def _continue(problem, x, prev, predicted, jump_limit):
    """One continuation step; returns the accepted solution or ``None``."""
    first = problem.try_solve(x, prev)
    if first is not None and abs(first.E - predicted) <= jump_limit:
        return first
    candidates = [first] if first is not None else []
    for rel in (1e-3, 1e-2, 5e-2, 0.2):
        for seed in _perturbed(prev, rel):
            sol = problem.try_solve(x, seed)
            if sol is not None:
                candidates.append(sol)
        near = [c for c in candidates if abs(c.E - predicted) <= jump_limit]
        if near:
            return min(near, key=lambda c: abs(c.E - predicted))
    if candidates:
        return min(candidates, key=lambda c: abs(c.E - predicted))
    return None


def sweep(params: ModelParams, bath_spec: BathSpec, axis: str, grid: Sequence[float],
          seed: ProjectionState | Sequence[ProjectionState] | None = None, *,
          branches: int = 1, tol: float = DEFAULT_TOL,
          delta_ep: float = DEFAULT_DELTA_EP) -> list[BranchPoint]:
    """Continuation of ``branches`` solution branches along ``grid``.

    Each converged point seeds the next. Once a tracked branch is complex
    (``|Im E| >= delta_ep``) its PT partner is added as the conjugate member
    of the pair. Points are returned ordered by ``x`` and, within one ``x``,
    by ``(Re E, Im E)``; ``branch`` is the index in that order.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("grid must be strictly ascending")
    problem = SpectrumProblem(params, bath_spec, axis, tol)
    return _sweep(problem, grid, seed, branches, delta_ep)


def _sweep(problem, grid, seed, branches, delta_ep):
    if seed is None:
        seeds = [problem.guess(grid[0], b) for b in range(branches)]
    elif isinstance(seed, ProjectionState):
        seeds = [seed]
    else:
        seeds = list(seed)
    branches = len(seeds)
    history: list[list[EigenSolution]] = [[] for _ in range(branches)]
    out: list[BranchPoint] = []
    span = float(grid[-1] - grid[0]) or 1.0

    for x in grid:
        found: list[EigenSolution | None] = []
        for b in range(branches):
            hist = history[b]
            if hist:
                prev = hist[-1].state
                if len(hist) >= 2:
                    predicted = 2 * hist[-1].E - hist[-2].E
                    step = abs(hist[-1].E - hist[-2].E)
                else:
                    predicted, step = hist[-1].E, 0.0
                limit = max(10 * step, 0.05 * span * max(1.0, abs(hist[-1].E)))
                sol = _continue(problem, x, prev, predicted, limit)
                if sol is None:
                    # restart from the bare-qubit guess at this point
                    sol = problem.try_solve(x, problem.guess(x, b))
            else:
                sol = problem.try_solve(x, seeds[b])
            found.append(sol)
            if sol is not None:
                hist.append(sol)

        # merge coalesced branches: beyond a pair's EP keep one member and
        # its PT partner
        points = []
        seen: list[complex] = []
        for b, sol in enumerate(found):
            if sol is None:
                points.append(BranchPoint(float(x), complex(np.nan, np.nan), math.inf, False, 0))
                continue
            members = [(sol, False)]
            if abs(sol.E.imag) >= delta_ep:
                partner_state = sol.state.pt_partner()
                p, bath = problem.at(x)
                res = evaluate_residuals(p, bath, partner_state)
                members.append((EigenSolution(partner_state.E, partner_state, res, 0), True))
            for m, is_partner in members:
                if any(abs(m.E - e) <= 1e3 * problem.tol for e in seen):
                    continue
                seen.append(m.E)
                points.append(BranchPoint(float(x), m.E, m.residual,
                                          m.residual <= problem.tol, m.iterations,
                                          state=m.state, partner=is_partner))
        good = sorted([q for q in points if q.converged], key=lambda q: (q.E.real, q.E.imag))
        bad = [q for q in points if not q.converged]
        for i, q in enumerate(good + bad):
            q.branch = i
            out.append(q)
    return out


def main_branch(points: Sequence[BranchPoint]) -> list[BranchPoint]:
    """Lowest converged point at each ``x`` (branch 0)."""
    return [q for q in points if q.branch == 0 and q.converged]


def detect_ep(points: Sequence[BranchPoint], delta_ep: float = DEFAULT_DELTA_EP,
              problem: SpectrumProblem | None = None, rel_width: float = 1e-4,
              max_bisections: int = 60) -> EpEstimate:
    """Locate the first onset of ``|Im E| >= delta_ep`` along a sweep.

    Without ``problem`` only the grid bracket is returned. With it, the
    bracket is bisected by re-solving at midpoints until its width is below
    ``rel_width`` times the grid span, and ``x_star`` is refined with the
    square-root law ``(Im E)^2 ~ (x - x_ep)`` from the two nearest
    broken-phase points.
    """
    # Only x values where every reported point converged are usable.
    by_x: dict[float, list[BranchPoint]] = {}
    for q in points:
        by_x.setdefault(q.x, []).append(q)
    xs = sorted(by_x)
    usable = [x for x in xs if all(q.converged for q in by_x[x])]
    axis = problem.axis if problem is not None else "x"
    if len(usable) < 2:
        return EpEstimate(axis, False)
    lowest = {x: min(by_x[x], key=lambda q: (q.E.real, q.E.imag)) for x in usable}
    broken = {x: any(abs(q.E.imag) >= delta_ep for q in by_x[x]) for x in usable}

    idx = next((i for i, x in enumerate(usable) if broken[x]), None)
    if idx is None or idx == 0:
        return EpEstimate(axis, False)
    x_lo, x_hi = usable[idx - 1], usable[idx]
    est = EpEstimate(axis, True, x_lo=x_lo, x_hi=x_hi, bracket_lo=x_lo, bracket_hi=x_hi,
                     x_star=0.5 * (x_lo + x_hi))

    lo_pt, hi_pt = lowest[x_lo], lowest[x_hi]
    broken_samples = [(x_hi, hi_pt.E.imag**2)]
    if problem is not None and lo_pt.state is not None and hi_pt.state is not None:
        target = rel_width * (usable[-1] - usable[0])
        lo_state, hi_state = lo_pt.state, hi_pt.state
        n = 0
        while est.bracket_hi - est.bracket_lo > target and n < max_bisections:
            n += 1
            mid = 0.5 * (est.bracket_lo + est.bracket_hi)
            sol = problem.try_solve(mid, hi_state)
            if sol is not None and abs(sol.E.imag) >= delta_ep:
                est.bracket_hi, hi_state = mid, sol.state
                hi_pt = BranchPoint(mid, sol.E, sol.residual, True, sol.iterations, state=sol.state)
                broken_samples.append((mid, sol.E.imag**2))
                continue
            sol = problem.try_solve(mid, lo_state)
            if sol is not None and abs(sol.E.imag) < delta_ep:
                est.bracket_lo, lo_state = mid, sol.state
                lo_pt = BranchPoint(mid, sol.E, sol.residual, True, sol.iterations, state=sol.state)
                continue
            log.info("EP bisection stalled at x=%g (neither phase converged)", mid)
            break
        est.refinements = n
        est.x_star = 0.5 * (est.bracket_lo + est.bracket_hi)
        if len(broken_samples) < 2:
            # second broken-phase sample for the square-root fit
            x2 = est.bracket_hi + (est.bracket_hi - est.bracket_lo)
            sol = problem.try_solve(x2, hi_state)
            if sol is not None and abs(sol.E.imag) >= delta_ep:
                broken_samples.append((x2, sol.E.imag**2))
        broken_samples.sort()
        if len(broken_samples) >= 2:
            (x1, y1), (x2, y2) = broken_samples[0], broken_samples[1]
            if y2 != y1:
                x_sq = x1 - y1 * (x2 - x1) / (y2 - y1)
                if est.bracket_lo <= x_sq <= est.bracket_hi:
                    est.x_star = float(x_sq)

    _cusp_diagnostic(est, usable, lowest, broken, lo_pt, hi_pt)
    return est


def _cusp_diagnostic(est, usable, lowest, broken, lo_pt, hi_pt):
    pre = [(x, lowest[x].E.real) for x in usable if not broken[x] and x < est.bracket_lo]
    pre.append((lo_pt.x, lo_pt.E.real))
    post = [(hi_pt.x, hi_pt.E.real)]
    post += [(x, lowest[x].E.real) for x in usable if broken[x] and x > est.bracket_hi]
    if len(pre) < 2 or len(post) < 2:
        return
    pre_slopes = np.diff([e for _, e in pre]) / np.diff([x for x, _ in pre])
    est.slope_left = float(pre_slopes[-1])
    est.slope_right = float((post[1][1] - post[0][1]) / (post[1][0] - post[0][0]))
    est.slope_gap = abs(est.slope_left - est.slope_right)
    # variation among pre-EP slopes, excluding the one ending at the bracket
    inner = pre_slopes[:-1]
    est.pre_ep_variation = float(np.max(np.abs(np.diff(inner)))) if inner.size >= 2 else 0.0


def spectrum_sweep(problem: SpectrumProblem, grid, *, branches: int = 1,
                   delta_ep: float = DEFAULT_DELTA_EP, seed=None,
                   rel_width: float = 1e-4) -> tuple[list[BranchPoint], EpEstimate]:
    """Sweep plus EP detection sharing one :class:`SpectrumProblem`."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("grid must be strictly ascending")
    points = _sweep(problem, grid, seed, branches, delta_ep)
    return points, detect_ep(points, delta_ep, problem, rel_width)


