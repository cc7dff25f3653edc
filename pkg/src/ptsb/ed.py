"""Exact diagonalization in a truncated Fock basis.

Basis ordering is ``qubit (x) mode_1 (x) ... (x) mode_M`` with the qubit in
the sigma_z eigenbasis ``(up, down)`` and each mode in ``|0>, ..., |n_max>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DimensionError, ParameterError
from .model import DiscreteBath, ModelParams

log = logging.getLogger(__name__)

DEFAULT_DIMENSION_CAP = 2_000_000
# dense LAPACK eig is ~100x slower than ARPACK already at dimension ~1500
DENSE_THRESHOLD = 500

SIGMA_X = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
SIGMA_Z = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))


@dataclass(frozen=True)
class FockTruncation:
    n_max: tuple[int, ...]
    cap: int = DEFAULT_DIMENSION_CAP

    @classmethod
    def uniform(cls, n_max: int, modes: int, cap: int = DEFAULT_DIMENSION_CAP):
        return cls(tuple([int(n_max)] * modes), cap)

    @property
    def dimension(self) -> int:
        return 2 * int(np.prod([n + 1 for n in self.n_max]))

    def enlarged(self, step: int) -> "FockTruncation":
        return FockTruncation(tuple(n + step for n in self.n_max), self.cap)


def default_truncation(modes: int) -> tuple[FockTruncation, int]:
    """Per-mode cutoff and convergence-check increment for ``modes`` modes."""
    if modes == 1:
        return FockTruncation.uniform(40, 1), 10
    if modes <= 3:
        return FockTruncation.uniform(8, modes), 2
    return FockTruncation.uniform(6, modes), 2


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    truncation: FockTruncation
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None
    convergence_delta: float | None = None
    converged: bool | None = None
    meta: dict = field(default_factory=dict)


def _mode_ops(n_max: int):
    n = np.arange(n_max + 1, dtype=float)
    number = sp.diags(n)
    lower = sp.diags(np.sqrt(n[1:]), 1)
    return number, lower + lower.T


def build_hamiltonian(p: ModelParams, bath: DiscreteBath, trunc: FockTruncation) -> sp.csr_matrix:
    """Sparse matrix of the qubit + M-mode Hamiltonian.

    ``H = -D/2 sx + b sz + sum w_n a+a + sz sum g_n (a + a+)`` with
    ``b = i eps/2`` (imaginary bias) or ``eps/2`` (real bias).
    """
    if len(trunc.n_max) != len(bath):
        raise ParameterError(
            f"truncation has {len(trunc.n_max)} modes but bath has {len(bath)}"
        )
    dim = trunc.dimension
    if dim > trunc.cap:
        raise DimensionError(dim, trunc.cap)

    dims = [n + 1 for n in trunc.n_max]
    boson_dim = int(np.prod(dims))
    eye_b = sp.identity(boson_dim, format="csr")

    free = sp.csr_matrix((boson_dim, boson_dim))
    coupling = sp.csr_matrix((boson_dim, boson_dim))
    for k, (w, g) in enumerate(zip(bath.omega, bath.g)):
        number, quad = _mode_ops(trunc.n_max[k])
        left = sp.identity(int(np.prod(dims[:k])), format="csr")
        right = sp.identity(int(np.prod(dims[k + 1:])), format="csr")
        free = free + w * sp.kron(sp.kron(left, number), right)
        coupling = coupling + g * sp.kron(sp.kron(left, quad), right)

    H = (
        -0.5 * p.delta * sp.kron(SIGMA_X, eye_b)
        + p.bias * sp.kron(SIGMA_Z, eye_b)
        + sp.kron(sp.identity(2), free)
        + sp.kron(SIGMA_Z, coupling)
    )
    return sp.csr_matrix(H, dtype=complex)


def parity_operator(trunc: FockTruncation) -> sp.csr_matrix:
    """``sigma_x (x) prod_k exp(i pi n_k)`` in the truncated basis."""
    par = np.ones(1)
    for n_max in trunc.n_max:
        par = np.kron(par, (-1.0) ** np.arange(n_max + 1))
    return sp.csr_matrix(sp.kron(SIGMA_X, sp.diags(par)))


def pt_symmetry_check(H, bath: DiscreteBath, trunc: FockTruncation | None = None) -> float:
    """Max-norm defect ``|P conj(H) P - H|`` of the PT commutation relation."""
    if trunc is None:
        # Uniform cutoff inferred from the matrix size.
        per_mode = round((H.shape[0] / 2) ** (1 / len(bath))) - 1 if len(bath) else 0
        trunc = FockTruncation.uniform(per_mode, len(bath))
        if trunc.dimension != H.shape[0]:
            raise ParameterError("cannot infer a uniform truncation; pass trunc explicitly")
    P = parity_operator(trunc)
    H = sp.csr_matrix(H)
    diff = P @ H.conj() @ P - H
    return float(abs(diff).max()) if diff.nnz else 0.0


def _sort_key(values):
    # members of a conjugate pair share Re E up to rounding
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    return np.lexsort((values.imag, np.round(values.real / scale, 10)))


def diagonalize(H, k: int = 2, *, return_vectors: bool = False, dense_threshold=DENSE_THRESHOLD,
                extra: int = 8, maxiter: int | None = None) -> SpectrumResult:
    """The ``k`` eigenvalues of smallest real part, sorted by ``(Re E, Im E)``."""
    n = H.shape[0]
    if k > n:
        raise ParameterError(f"requested {k} eigenvalues of a {n}x{n} matrix")
    if n < dense_threshold or k >= n - 2:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        if not np.all(np.isfinite(dense)):
            raise ParameterError("matrix has non-finite entries")
        vals, vecs = scipy.linalg.eig(dense)
        order = _sort_key(vals)[:k]
        vals, vecs = vals[order], vecs[:, order]
        iterations = None
    else:
        vals, vecs, iterations = _sparse_lowest(sp.csr_matrix(H), k, extra, maxiter)

    vecs = vecs / np.linalg.norm(vecs, axis=0)
    scale = spla.norm(H, np.inf) if sp.issparse(H) else np.linalg.norm(H, np.inf)
    residuals = np.linalg.norm(H @ vecs - vecs * vals, axis=0) / max(scale, 1e-300)
    return SpectrumResult(
        eigenvalues=vals,
        truncation=None,
        residuals=residuals,
        eigenvectors=vecs if return_vectors else None,
        meta={"solver": "dense" if iterations is None else "arpack"},
    )


def _sparse_lowest(H, k, extra, maxiter):
    nev = min(k + extra, H.shape[0] - 2)
    ncv = min(max(2 * nev + 1, 40), H.shape[0])
    try:
        vals, vecs = spla.eigs(H, k=nev, which="SR", ncv=ncv, tol=1e-13,
                               maxiter=maxiter or 50 * H.shape[0])
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"ARPACK did not converge ({len(exc.eigenvalues)} of {nev} eigenvalues)",
            iterations=maxiter,
        ) from exc
    order = _sort_key(vals)[:k]
    return vals[order], vecs[:, order], ncv


def lowest_eigenvalues(p: ModelParams, bath: DiscreteBath, k: int = 2,
                       trunc: FockTruncation | None = None, check_step: int | None = None,
                       tol: float = 1e-8) -> SpectrumResult:
    """Build, diagonalize and (optionally) convergence-check in one call.

    When ``check_step`` is given, the calculation is repeated with every
    cutoff raised by ``check_step`` and the largest eigenvalue shift is
    reported as ``convergence_delta``.
    """
    if trunc is None:
        trunc, default_step = default_truncation(len(bath))
        check_step = default_step if check_step is None else check_step
    res = diagonalize(build_hamiltonian(p, bath, trunc), k)
    res.truncation = trunc
    res.meta["dimension"] = trunc.dimension
    if check_step:
        bigger = trunc.enlarged(check_step)
        ref = diagonalize(build_hamiltonian(p, bath, bigger), k)
        res.convergence_delta = float(np.max(np.abs(ref.eigenvalues - res.eigenvalues)))
        res.converged = res.convergence_delta < tol
        res.meta["check_truncation"] = list(bigger.n_max)
        if not res.converged:
            log.info("ED truncation %s unconverged: delta=%.2e", trunc.n_max, res.convergence_delta)
    return res


def conjugate_pairing_defect(values, span: float | None = None, im_floor: float = 1e-10) -> float:
    """Largest distance from a complex eigenvalue's conjugate to the set.

    Only eigenvalues with ``|Im E| > im_floor`` are tested; returns 0 when
    there are none.
    """
    values = np.asarray(values)
    worst = 0.0
    for e in values[np.abs(values.imag) > im_floor]:
        worst = max(worst, float(np.min(np.abs(values - np.conj(e)))))
    if span:
        worst /= span
    return worst
