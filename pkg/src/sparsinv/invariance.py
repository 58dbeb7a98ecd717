"""Sparsity-invariance and quadratic-invariance tests on patterns."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .patterns import (
    Pattern,
    bool_power,
    bool_product,
    bool_sum,
    cardinality,
    identity,
    leq,
)

__all__ = [
    'SiVerdict',
    'SearchBudgetExceeded',
    'algorithm1',
    'si_holds',
    'qi_holds',
    'theorem3_check',
    'qi_superset',
    'qi_subsets',
    'enumerate_feasible_R',
    'DEFAULT_SUBSET_CAP',
]

DEFAULT_SUBSET_CAP = 10**6
MAX_ENUMERATION_P = 4


class SearchBudgetExceeded(RuntimeError):
    """The requested exhaustive search would enumerate too many candidates."""


@dataclass(frozen=True)
class SiVerdict:
    """Outcome of the sparsity-invariance test.

    ``violating_triple`` is ``None`` when the test passes.  Otherwise it is
    ``(i, j, k)`` with ``T[i, k] = 1``, ``R^(p-1)[k, j] = 1`` and ``S[i, j] = 0``;
    when ``T`` itself is not below ``S`` the triple has ``k = j``.
    """

    holds: bool
    violating_triple: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        if self.holds != (self.violating_triple is None):
            raise ValueError('violating_triple must be given exactly when the test fails')

    def __bool__(self):
        return self.holds


def algorithm1(T: Pattern) -> Pattern:
    """Least sparse ``R >= I`` with ``T R <= T``.

    Starting from the all-ones ``p x p`` pattern, entry ``(j, k)`` is cleared
    whenever some row ``i`` of ``T`` has ``T[i, j] = 1`` and ``T[i, k] = 0``.
    """
    t = T.array
    p = T.cols
    r = np.ones((p, p), dtype=bool)
    for i in range(T.rows):
        zero_cols = np.flatnonzero(~t[i])
        if zero_cols.size == 0:
            continue
        one_cols = np.flatnonzero(t[i])
        r[np.ix_(one_cols, zero_cols)] = False
    return Pattern._wrap(r)


def _require_r_geq_identity(R: Pattern) -> None:
    if R.rows != R.cols:
        raise ValueError(f'R must be square, got {R.shape}')
    if not leq(identity(R.rows), R):
        raise ValueError('R must contain the identity pattern (R >= I)')


def si_holds(T: Pattern, R: Pattern, S: Pattern) -> SiVerdict:
    """Test ``T <= S`` and ``T R^(p-1) <= S``."""
    if T.shape != S.shape:
        raise ValueError(f'T and S must share a shape, got {T.shape} and {S.shape}')
    if R.shape != (T.cols, T.cols):
        raise ValueError(f'R must be {T.cols}x{T.cols}, got {R.shape}')
    _require_r_geq_identity(R)
    t, s = T.array, S.array
    bad = t & ~s
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        return SiVerdict(False, (i, j, j))
    closure = bool_power(R, R.rows - 1).array
    reach = bool_product(T, Pattern._wrap(closure)).array
    bad = reach & ~s
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        k = int(np.flatnonzero(t[i] & closure[:, j])[0])
        return SiVerdict(False, (i, j, k))
    return SiVerdict(True)


def _check_qi_dims(S: Pattern, delta: Pattern) -> None:
    if delta.shape != (S.cols, S.rows):
        raise ValueError(f'Delta must be {S.cols}x{S.rows} for S of shape {S.shape}, got {delta.shape}')


def qi_holds(S: Pattern, delta: Pattern) -> bool:
    """Quadratic invariance of ``Sparse(S)`` for plant structure ``delta``:
    ``S delta S <= S``."""
    _check_qi_dims(S, delta)
    return leq(bool_product(bool_product(S, delta), S), S)


def theorem3_check(S: Pattern, delta: Pattern) -> bool:
    """Test ``algorithm1(S) >= I + delta S`` (equivalent to QI)."""
    _check_qi_dims(S, delta)
    lower = bool_sum(identity(S.cols), bool_product(delta, S))
    return leq(lower, algorithm1(S))


def qi_superset(S: Pattern, delta: Pattern) -> Pattern:
    """Smallest QI pattern containing ``S``.

    Iterates ``S <- S + S delta S`` to its fixed point; the iteration is
    monotone on a finite lattice so it stops after at most ``m p`` rounds.
    """
    _check_qi_dims(S, delta)
    current = S
    while True:
        grown = bool_sum(current, bool_product(bool_product(current, delta), current))
        if grown == current:
            return current
        current = grown


def qi_subsets(
    S: Pattern,
    delta: Pattern,
    max_dist: int,
    max_candidates: int = DEFAULT_SUBSET_CAP,
    nearest_only: bool = False,
) -> List[Pattern]:
    """QI patterns ``T <= S`` obtained by removing at most ``max_dist`` ones.

    Candidates are enumerated exhaustively by distance ``||S||_0 - ||T||_0``.
    The result is sorted by distance, ties broken lexicographically on the
    flattened entries.  With ``nearest_only`` the search stops at the first
    distance that yields any QI pattern.

    Raises
    ------
    SearchBudgetExceeded
        If more than ``max_candidates`` subsets would be examined.
    """
    _check_qi_dims(S, delta)
    n_ones = cardinality(S)
    if max_dist < 0 or max_dist > n_ones:
        raise ValueError(f'max_dist must lie in [0, {n_ones}], got {max_dist}')
    budget = sum(math.comb(n_ones, d) for d in range(max_dist + 1))
    if budget > max_candidates:
        raise SearchBudgetExceeded(
            f'{budget} candidate subsets exceed the cap of {max_candidates}')
    support = [tuple(int(v) for v in ij) for ij in np.argwhere(S.array)]
    found: List[Pattern] = []
    for dist in range(max_dist + 1):
        layer = []
        for removed in itertools.combinations(support, dist):
            data = S.array.copy()
            for i, j in removed:
                data[i, j] = False
            cand = Pattern._wrap(data)
            if qi_holds(cand, delta):
                layer.append(cand)
        layer.sort(key=Pattern.flat_key)
        found.extend(layer)
        if nearest_only and found:
            break
    return found


@lru_cache(maxsize=1 << 16)
def _power_cached(R: Pattern, k: int) -> Pattern:
    return bool_power(R, k)


def enumerate_feasible_R(T: Pattern, p: Optional[int] = None) -> Iterator[Pattern]:
    """Yield every ``R >= I`` with ``T R^(p-1) <= T``.

    Brute force over the ``2^(p^2 - p)`` off-diagonal choices, so only
    ``p <= 4`` is accepted.
    """
    if p is None:
        p = T.cols
    if p != T.cols:
        raise ValueError(f'p={p} disagrees with T having {T.cols} columns')
    if p > MAX_ENUMERATION_P:
        raise ValueError(f'enumeration limited to p <= {MAX_ENUMERATION_P}, got {p}')
    off = [(i, j) for i in range(p) for j in range(p) if i != j]
    for bits in itertools.product((False, True), repeat=len(off)):
        data = np.eye(p, dtype=bool)
        for (i, j), b in zip(off, bits):
            data[i, j] = b
        R = Pattern._wrap(data)
        if leq(bool_product(T, _power_cached(R, p - 1)), T):
            yield R
