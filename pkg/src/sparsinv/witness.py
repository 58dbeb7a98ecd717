"""Numeric witnesses for the structural results behind sparsity invariance.

All constructions work on constant real matrices, which are a special case
of causal transfer matrices; every structural statement involved is generic,
so a random instance realizes it with probability one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .invariance import si_holds
from .patterns import (
    DEFAULT_STRUCT_TOL,
    Pattern,
    bool_power,
    bool_product,
    format_pattern,
    identity,
    leq,
    struct_of,
)

__all__ = [
    'WitnessPair',
    'WitnessError',
    'construct_full_inverse',
    'construct_product_witness',
    'si_counterexample',
    'random_sparse',
    'random_invertible',
    'format_matrix',
    'format_witness',
    'ALPHA_MARGIN',
    'COND_BOUND',
    'MAX_RETRIES',
]

ALPHA_MARGIN = 1e-6
COND_BOUND = 1e8
MAX_RETRIES = 100
# Keeps each Sherman-Morrison step well conditioned: |1 + alpha Xinv[j, i]|
# below this would inflate the inverse by the reciprocal.
DENOM_FLOOR = 0.1


class WitnessError(RuntimeError):
    """A witness construction could not be completed."""


@dataclass(frozen=True, eq=False)
class WitnessPair:
    """``Y`` in ``Sparse(T)``, invertible ``X`` in ``Sparse(R)`` and the
    pattern of ``Y X^-1``."""

    Y: np.ndarray
    X: np.ndarray
    achieved_structure: Pattern


def _draw_alpha(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.5, 1.5) * rng.choice((-1.0, 1.0)))


def _nonzero(M: np.ndarray, tol: float) -> np.ndarray:
    return struct_of(M, tol).array


def _rank_one_ok(Xinv: np.ndarray, i: int, j: int, alpha: float,
                 tol: float, margin: float) -> bool:
    # Sherman-Morrison for X + alpha e_i e_j': row l of the new inverse is
    # Xinv[l] - alpha Xinv[l, i] Xinv[j] / (1 + alpha Xinv[j, i]).  Every
    # row with Xinv[l, i] != 0 changes; each must keep its old support and
    # gain the support of row j.
    denom = 1.0 + alpha * Xinv[j, i]
    if abs(denom) < DENOM_FLOOR:
        return False
    support = _nonzero(Xinv, tol)
    scale = 1.0 + np.abs(Xinv).max()
    for l in np.flatnonzero(support[:, i]):
        new_row = Xinv[l] - alpha * Xinv[l, i] * Xinv[j] / denom
        expected = support[l] | support[j]
        if np.any(np.abs(new_row[expected]) <= margin * scale):
            return False
    return True


def _build_inverse_once(R: Pattern, target: Pattern, rng: np.random.Generator,
                        tol: float, margin: float, max_retries: int) -> np.ndarray:
    p = R.rows
    X = np.eye(p)
    updates = [(i, j) for i in range(p) for j in range(p) if i != j and R.array[i, j]]
    # Each sweep over R grows Struct(X^-1) to at least the next power of R.
    for _ in range(p + 1):
        if struct_of(np.linalg.inv(X), tol) == target:
            return X
        for i, j in updates:
            Xinv = np.linalg.inv(X)
            if struct_of(Xinv, tol) == target:
                return X
            for _attempt in range(max_retries):
                alpha = _draw_alpha(rng)
                if _rank_one_ok(Xinv, i, j, alpha, tol, margin):
                    break
            else:
                raise WitnessError(f'no admissible alpha for update ({i}, {j}) '
                                   f'after {max_retries} draws')
            X[i, j] += alpha
    if struct_of(np.linalg.inv(X), tol) == target:
        return X
    raise WitnessError('inverse structure did not reach R^(p-1)')


def construct_full_inverse(R: Pattern, seed=None, tol: float = DEFAULT_STRUCT_TOL,
                           margin: float = ALPHA_MARGIN, max_retries: int = MAX_RETRIES,
                           cond_bound: float = COND_BOUND) -> np.ndarray:
    """Invertible ``X`` in ``Sparse(R)`` whose inverse has pattern ``R^(p-1)``.

    Starts from ``X = I`` and sweeps rank-one updates ``X += alpha e_i e_j'``
    over the off-diagonal support of ``R`` until the pattern of ``X^-1``
    stops growing.  Each ``alpha`` is redrawn until no entry of the updated
    inverse cancels.  An ill-conditioned result is discarded and rebuilt.

    Parameters
    ----------
    R : Pattern
        Square pattern with ``R >= I``.
    seed : int or numpy Generator, optional
    tol : float
        Relative tolerance used to read off structures.
    margin : float
        Minimum relative magnitude an entry must keep to count as nonzero
        when screening ``alpha``.

    Raises
    ------
    WitnessError
        When ``alpha`` screening or conditioning fails ``max_retries`` times.
    """
    if R.rows != R.cols or not leq(identity(R.rows), R):
        raise ValueError('construct_full_inverse needs a square R >= I')
    rng = np.random.default_rng(seed)
    target = bool_power(R, R.rows - 1)
    for _ in range(max_retries):
        X = _build_inverse_once(R, target, rng, tol, margin, max_retries)
        if np.linalg.cond(X) <= cond_bound:
            return X
    raise WitnessError(f'could not build X with condition number below {cond_bound:g}')


def construct_product_witness(T: Pattern, W: np.ndarray, seed=None,
                              tol: float = DEFAULT_STRUCT_TOL, margin: float = ALPHA_MARGIN,
                              max_retries: int = MAX_RETRIES) -> np.ndarray:
    """``Z`` in ``Sparse(T)`` with ``Struct(Z W) = T Struct(W)``.

    Fills ``Z`` one entry at a time: for each missing ``(i, j)`` some ``k``
    has ``T[i, k] = 1`` and ``W[k, j] != 0``, and ``Z[i, k] += alpha`` with
    ``alpha`` chosen so no existing nonzero of row ``i`` of ``Z W`` cancels.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != T.cols:
        raise ValueError(f'W must have {T.cols} rows, got shape {W.shape}')
    rng = np.random.default_rng(seed)
    w_support = struct_of(W, tol).array
    target = bool_product(T, Pattern._wrap(w_support.copy())).array
    Z = np.zeros(T.shape)
    cap = target.size + 1
    for _ in range(cap):
        ZW = Z @ W
        have = _nonzero(ZW, tol) if ZW.size else np.zeros_like(target)
        missing = np.argwhere(target & ~have)
        if missing.size == 0:
            return Z
        i, j = (int(v) for v in missing[0])
        k = int(np.flatnonzero(T.array[i] & w_support[:, j])[0])
        scale = 1.0 + max(np.abs(ZW).max(), np.abs(W).max())
        for _attempt in range(max_retries):
            alpha = _draw_alpha(rng)
            row = ZW[i] + alpha * W[k]
            keep = have[i] | (np.arange(W.shape[1]) == j)
            if np.all(np.abs(row[keep]) > margin * scale):
                break
        else:
            raise WitnessError(f'no admissible alpha for entry ({i}, {k})')
        Z[i, k] += alpha
    raise WitnessError('product structure did not converge')


def si_counterexample(T: Pattern, R: Pattern, S: Pattern, seed=None,
                      tol: float = DEFAULT_STRUCT_TOL) -> WitnessPair:
    """Explicit ``Y``, ``X`` showing that ``Y X^-1`` can leave ``Sparse(S)``.

    ``X`` is built so that ``X^-1`` has the full pattern ``R^(p-1)`` and
    ``Y`` so that ``Y X^-1`` has the full pattern ``T R^(p-1)``, which is
    not below ``S`` exactly when the invariance test fails.

    Raises
    ------
    ValueError
        If sparsity invariance holds for ``(T, R, S)``; then no
        counterexample exists.
    """
    verdict = si_holds(T, R, S)
    if verdict.holds:
        raise ValueError('SI holds for (T, R, S): no counterexample exists')
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        X = construct_full_inverse(R, rng, tol)
        Xinv = np.linalg.inv(X)
        cleaned = np.where(struct_of(Xinv, tol).array, Xinv, 0.0)
        Y = construct_product_witness(T, cleaned, rng, tol)
        achieved = struct_of(Y @ Xinv, tol)
        if not leq(achieved, S):
            return WitnessPair(Y, X, achieved)
    raise WitnessError('counterexample verification failed repeatedly')


# --- sampling for forward-direction checks --------------------------------

def random_sparse(pattern: Pattern, rng: np.random.Generator) -> np.ndarray:
    """Gaussian entries on the support of ``pattern``, zeros elsewhere."""
    return np.where(pattern.array, rng.standard_normal(pattern.shape), 0.0)


def random_invertible(R: Pattern, rng: np.random.Generator,
                      cond_bound: float = COND_BOUND) -> np.ndarray:
    """Random well-conditioned matrix in ``Sparse(R)`` (``R >= I``)."""
    for _ in range(MAX_RETRIES):
        X = random_sparse(R, rng)
        if np.linalg.cond(X) <= cond_bound:
            return X
    raise WitnessError('could not sample a well-conditioned matrix')


# --- text dumps ----------------------------------------------------------

def format_matrix(M: np.ndarray, decimals: int = 10) -> str:
    """Row-major dump, one row per line, fixed-point entries."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    M = np.round(M, decimals) + 0.0
    return ''.join(' '.join(f'{v:.{decimals}f}' for v in row) + '\n' for row in M)


def format_witness(pair: WitnessPair, decimals: int = 10) -> str:
    return (f'# Y\n{format_matrix(pair.Y, decimals)}'
            f'# X\n{format_matrix(pair.X, decimals)}'
            f'# Struct(Y X^-1)\n{format_pattern(pair.achieved_structure)}')
