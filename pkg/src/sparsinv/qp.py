"""Equality-constrained linear least squares.

Programs have the form ``minimize ||M x - d||^2 subject to E x = f`` with
sparse ``M`` and ``E``.  Feasibility is decided first from a minimum-norm
solve of ``E x = f``; the optimum then comes from a regularized KKT system
refined by proximal multiplier iterations, which tolerates redundant
(rank-deficient) equality rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

__all__ = [
    'EqualityLS',
    'FeasibilityResult',
    'QPResult',
    'KKTBreakdown',
    'check_feasible',
    'solve_eq_ls',
    'solve_nullspace_dense',
]


class KKTBreakdown(np.linalg.LinAlgError):
    """Factorization or iteration failure in the KKT solve."""


@dataclass
class EqualityLS:
    """``minimize ||M x - d||^2`` subject to ``E x = f``."""

    M: sparse.csr_matrix
    d: np.ndarray
    E: sparse.csr_matrix
    f: np.ndarray

    def __post_init__(self):
        self.M = sparse.csr_matrix(self.M, dtype=float)
        self.E = sparse.csr_matrix(self.E, dtype=float)
        self.d = np.asarray(self.d, dtype=float).ravel()
        self.f = np.asarray(self.f, dtype=float).ravel()
        n = self.M.shape[1]
        if self.E.shape[1] != n:
            raise ValueError(f'M has {n} columns but E has {self.E.shape[1]}')
        if self.d.shape[0] != self.M.shape[0] or self.f.shape[0] != self.E.shape[0]:
            raise ValueError('right-hand sides do not match the matrix row counts')

    @property
    def n_vars(self) -> int:
        return self.M.shape[1]

    @property
    def n_eqs(self) -> int:
        return self.E.shape[0]

    def objective(self, x: np.ndarray) -> float:
        r = self.M @ x - self.d
        return float(r @ r)

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.E @ x - self.f))


@dataclass
class FeasibilityResult:
    feasible: bool
    residual: float
    threshold: float
    x: np.ndarray


@dataclass
class QPResult:
    feasible: bool
    x: Optional[np.ndarray]
    objective: float
    residual: float
    iterations: int
    feasibility: FeasibilityResult


def _factor(K: sparse.spmatrix):
    try:
        return splinalg.splu(sparse.csc_matrix(K))
    except RuntimeError as exc:
        raise KKTBreakdown(f'sparse LU failed: {exc}') from exc


def check_feasible(E, f, tol: float = 1e-7, mu: float = 1e-10,
                   max_refine: int = 30) -> FeasibilityResult:
    """Minimum-norm solve of ``E x = f`` and the threshold verdict.

    Uses the augmented system ``[[I, E'], [E, -mu I]]`` with iterative
    refinement, which converges to the minimum-norm least-squares solution
    even when ``E`` has dependent rows.  The system is declared infeasible
    iff the final residual exceeds ``tol * (1 + ||f||)``.
    """
    E = sparse.csr_matrix(E, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    q, n = E.shape
    threshold = tol * (1.0 + np.linalg.norm(f))
    x = np.zeros(n)
    if q == 0:
        return FeasibilityResult(True, 0.0, threshold, x)
    scale = max(1.0, splinalg.norm(E, np.inf))
    K = sparse.bmat([[sparse.identity(n), E.T], [E, -mu * scale**2 * sparse.identity(q)]])
    lu = _factor(K)
    r = f.copy()
    best = np.linalg.norm(r)
    for _ in range(max_refine):
        sol = lu.solve(np.concatenate([np.zeros(n), r]))
        if not np.all(np.isfinite(sol)):
            raise KKTBreakdown('non-finite values in feasibility solve')
        x_new = x + sol[:n]
        r_new = f - E @ x_new
        norm_new = np.linalg.norm(r_new)
        if norm_new >= best * (1 - 1e-3):
            if norm_new < best:
                x, r, best = x_new, r_new, norm_new
            break
        x, r, best = x_new, r_new, norm_new
    return FeasibilityResult(bool(best <= threshold), float(best), float(threshold), x)


def solve_eq_ls(qp: EqualityLS, tol_feas: float = 1e-7, rho: float = 1e-8,
                delta: float = 1e-8, max_iter: int = 200,
                tol_kkt: float = 1e-13) -> QPResult:
    """Solve an :class:`EqualityLS`, deciding feasibility first.

    Infeasible programs are reported with ``feasible=False`` and no
    solution, rather than raised.
    """
    feas = check_feasible(qp.E, qp.f, tol=tol_feas)
    if not feas.feasible:
        return QPResult(False, None, float('nan'), feas.residual, 0, feas)
    n, q = qp.n_vars, qp.n_eqs
    H = 2.0 * (qp.M.T @ qp.M)
    g = 2.0 * (qp.M.T @ qp.d)
    E, f = qp.E, qp.f
    e_norm = splinalg.norm(E, np.inf) if q else 0.0
    scale = max(1.0, splinalg.norm(H, np.inf), e_norm ** 2)
    rho_s, delta_s = rho * scale, delta
    K = sparse.bmat([
        [H + rho_s * sparse.identity(n), E.T],
        [E, -delta_s * sparse.identity(q)],
    ])
    lu = _factor(K)
    x = feas.x.copy()
    y = np.zeros(q)
    g_norm = 1.0 + np.linalg.norm(g)
    f_norm = 1.0 + np.linalg.norm(f)
    it = 0
    for it in range(1, max_iter + 1):
        sol = lu.solve(np.concatenate([g + rho_s * x, f - delta_s * y]))
        if not np.all(np.isfinite(sol)):
            raise KKTBreakdown('non-finite values in KKT solve')
        step = np.linalg.norm(sol[:n] - x) / (1.0 + np.linalg.norm(x))
        x, y = sol[:n], sol[n:]
        primal = np.linalg.norm(E @ x - f) / f_norm
        dual = np.linalg.norm(H @ x + E.T @ y - g) / g_norm
        if max(primal, dual) < tol_kkt or step < tol_kkt:
            break
    return QPResult(True, x, qp.objective(x), qp.residual(x), it, feas)


def solve_nullspace_dense(qp: EqualityLS, rcond: float = 1e-12) -> Optional[np.ndarray]:
    """Dense reference solver: particular solution plus null-space search.

    Returns ``None`` when ``E x = f`` is inconsistent.  Meant for small
    programs only (it forms a dense SVD of ``E``).
    """
    E = qp.E.toarray()
    M = qp.M.toarray()
    x0 = np.linalg.lstsq(E, qp.f, rcond=None)[0] if E.shape[0] else np.zeros(qp.n_vars)
    if E.shape[0] and np.linalg.norm(E @ x0 - qp.f) > 1e-9 * (1 + np.linalg.norm(qp.f)):
        return None
    basis = linalg.null_space(E, rcond=rcond) if E.shape[0] else np.eye(qp.n_vars)
    if basis.shape[1] == 0:
        return x0
    z = np.linalg.lstsq(M @ basis, qp.d - M @ x0, rcond=None)[0]
    return x0 + basis @ z
