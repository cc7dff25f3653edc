"""Side-by-side projection and exact-diagonalization spectra for finite baths."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ed
from .model import BathSpec, ModelParams
from .projection import DEFAULT_DELTA_EP, DEFAULT_TOL, SpectrumProblem, _sweep

log = logging.getLogger(__name__)


@dataclass
class ValidationResult:
    grid: np.ndarray
    ed: np.ndarray            # (n, k) complex, lowest-first
    projection: np.ndarray    # (n, k) complex, NaN where unconverged
    ed_ep: tuple[int, int] | None
    projection_ep: tuple[int, int] | None
    pt_defect: float
    ed_pairing: float
    projection_pairing: float
    max_deviation: float
    truncation: list[int]
    convergence: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def same_ep_interval(self) -> bool:
        return self.ed_ep is not None and self.ed_ep == self.projection_ep

    def summary(self) -> dict:
        def bracket(b):
            return None if b is None else [float(self.grid[b[0]]), float(self.grid[b[1]])]

        return {
            "ed_ep_bracket": bracket(self.ed_ep),
            "projection_ep_bracket": bracket(self.projection_ep),
            "same_ep_interval": self.same_ep_interval,
            "max_abs_deviation_pre_ep": self.max_deviation,
            "pt_defect_max": self.pt_defect,
            "ed_conjugate_pairing": self.ed_pairing,
            "projection_conjugate_pairing": self.projection_pairing,
            "truncation": self.truncation,
            "convergence_checks": self.convergence,
            **self.meta,
        }


def _ep_interval(values, delta_ep):
    broken = np.abs(values[:, 0].imag) >= delta_ep
    idx = np.flatnonzero(broken)
    if idx.size == 0 or idx[0] == 0:
        return None
    return int(idx[0] - 1), int(idx[0])


def _ed_point(args):
    p, bath_spec, k, trunc, check_step, tol = args
    bath = bath_spec.build(p)
    H = ed.build_hamiltonian(p, bath, trunc)
    defect = ed.pt_symmetry_check(H, bath, trunc) if p.bias_kind == "imaginary" else 0.0
    scale = float(abs(H).max())
    res = ed.diagonalize(H, k)
    conv = None
    if check_step:
        ref = ed.diagonalize(ed.build_hamiltonian(p, bath, trunc.enlarged(check_step)), k)
        delta = float(np.max(np.abs(ref.eigenvalues - res.eigenvalues)))
        conv = {"lambda": p.lam, "delta": delta, "converged": delta < tol,
                "check_truncation": list(trunc.enlarged(check_step).n_max)}
    return res.eigenvalues, defect / scale, float(np.max(res.residuals)), conv


def compare_with_ed(params: ModelParams, bath_spec: BathSpec, grid, *, k: int = 2,
                    n_max: int | None = None, check_step: int | None = None,
                    check_every: int = 10, conv_tol: float = 1e-8,
                    tol: float = DEFAULT_TOL, delta_ep: float = DEFAULT_DELTA_EP,
                    workers: int = 1) -> ValidationResult:
    """Lowest ``k`` eigenvalues along a coupling grid from both methods.

    Truncation convergence is checked at every ``check_every``-th point and
    at the last (largest-coupling) point.
    """
    grid = np.asarray(grid, dtype=float)
    problem = SpectrumProblem(params, bath_spec, "lambda", tol)
    modes = len(bath_spec.build(params.replace(lam=float(grid[-1]))))
    trunc, default_step = ed.default_truncation(modes)
    if n_max is not None:
        trunc = ed.FockTruncation.uniform(n_max, modes)
    step = default_step if check_step is None else check_step

    jobs = []
    for i, lam in enumerate(grid):
        check = step if (i % check_every == 0 or i == grid.size - 1) else 0
        jobs.append((params.replace(lam=float(lam)), bath_spec, k, trunc, check, conv_tol))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_ed_point, jobs))
    else:
        results = [_ed_point(j) for j in jobs]

    ed_vals = np.array([r[0] for r in results])
    pt_defect = max(r[1] for r in results)
    convergence = [r[3] for r in results if r[3] is not None]

    points = _sweep(problem, grid, None, k, delta_ep)
    proj = np.full((grid.size, k), complex(np.nan, np.nan))
    for i, x in enumerate(grid):
        vals = sorted((q.E for q in points if q.x == x and q.converged),
                      key=lambda e: (round(e.real, 10), e.imag))
        proj[i, :len(vals[:k])] = vals[:k]

    ed_ep = _ep_interval(ed_vals, delta_ep)
    pr_ep = _ep_interval(proj, delta_ep)
    limits = [b[0] for b in (ed_ep, pr_ep) if b is not None]
    pre = slice(0, (min(limits) + 1) if limits else grid.size)
    diff = np.abs(proj[pre] - ed_vals[pre])
    max_dev = float(np.nanmax(diff)) if diff.size else 0.0
    if np.isnan(diff).any():
        max_dev = float("inf")

    def pairing(vals, start):
        if start is None:
            return 0.0
        post = vals[start[1]:]
        return float(np.max(np.abs(post[:, 0] - np.conj(post[:, 1]))))

    return ValidationResult(
        grid=grid, ed=ed_vals, projection=proj, ed_ep=ed_ep, projection_ep=pr_ep,
        pt_defect=float(pt_defect), ed_pairing=pairing(ed_vals, ed_ep),
        projection_pairing=pairing(proj, pr_ep), max_deviation=max_dev,
        truncation=list(trunc.n_max), convergence=convergence,
        meta={"max_eig_residual": max(r[2] for r in results),
              "check_step": step, "check_every": check_every},
    )
