"""Discrete-time LTI plumbing: plants, FIR series, H2 norms and controllers."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .patterns import Pattern, bool_sum, struct_of, zeros

__all__ = [
    'StateSpace',
    'Realization',
    'FirSeries',
    'ClosedLoop',
    'UnstableSystemError',
    'markov',
    'fir_convolve',
    'fir_add',
    'h2_sq_fir',
    'h2_sq_lyap',
    'spectral_radius',
    'shift_register',
    'fir_long_division',
    'realize_controller',
    'modal_split',
    'hidden_unstable_ok',
    'internally_stable',
    'closed_loop',
    'interconnection',
    'plant_structure',
    'check_unstable_modes',
    'example1_plant',
    'lqr_plant',
    'system_from_dict',
    'load_system',
]

PBH_TOL = 1e-8


class UnstableSystemError(ValueError):
    """An operation requiring a Schur-stable system received an unstable one."""


def _as_matrix(value, name: str) -> np.ndarray:
    mat = np.array(value, dtype=float)
    if mat.ndim != 2:
        raise ValueError(f'{name} must be a 2-D matrix, got shape {mat.shape}')
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Strictly proper plant ``x+ = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, 'A')
        B = _as_matrix(self.B, 'B')
        C = _as_matrix(self.C, 'C')
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f'A must be square, got {A.shape}')
        if B.shape[0] != n:
            raise ValueError(f'B must have {n} rows, got {B.shape}')
        if C.shape[1] != n:
            raise ValueError(f'C must have {n} columns, got {C.shape}')
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'C', C)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def D(self) -> np.ndarray:
        return np.zeros((self.n_outputs, self.n_inputs))

    def to_dict(self) -> dict:
        return {'A': self.A.tolist(), 'B': self.B.tolist(), 'C': self.C.tolist()}


@dataclass(frozen=True, eq=False)
class Realization:
    """State-space system with feedthrough, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(np.shape(self.A) if np.size(self.A) else (0, 0))
        D = _as_matrix(self.D, 'D')
        n = A.shape[0]
        B = np.array(self.B, dtype=float).reshape(n, D.shape[1])
        C = np.array(self.C, dtype=float).reshape(D.shape[0], n)
        if A.shape != (n, n):
            raise ValueError(f'A must be square, got {A.shape}')
        for name, mat in (('A', A), ('B', B), ('C', C)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        object.__setattr__(self, 'D', D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @classmethod
    def from_plant(cls, sys: StateSpace) -> 'Realization':
        return cls(sys.A, sys.B, sys.C, sys.D)

    def evaluate(self, z: complex) -> np.ndarray:
        """Transfer matrix ``C (zI - A)^-1 B + D`` at the point ``z``."""
        n = self.n_states
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(z * np.eye(n) - self.A, self.B) + self.D


class FirSeries:
    """Causal FIR transfer matrix ``sum_t coeffs[t] z^-t``.

    Coefficients are stored as one array of shape ``(N + 1, rows, cols)``.
    """

    __slots__ = ('coeffs',)

    def __init__(self, coeffs):
        arr = np.array(coeffs, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(f'coefficients must have shape (N+1, r, c), got {arr.shape}')
        arr.setflags(write=False)
        self.coeffs = arr

    @classmethod
    def zeros(cls, horizon: int, rows: int, cols: int) -> 'FirSeries':
        return cls(np.zeros((horizon + 1, rows, cols)))

    @classmethod
    def identity(cls, n: int, delay: int = 0) -> 'FirSeries':
        c = np.zeros((delay + 1, n, n))
        c[delay] = np.eye(n)
        return cls(c)

    @property
    def horizon(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.coeffs[t]

    def padded(self, horizon: int) -> 'FirSeries':
        if horizon < self.horizon:
            raise ValueError('cannot pad to a shorter horizon')
        out = np.zeros((horizon + 1,) + self.shape)
        out[:len(self)] = self.coeffs
        return FirSeries(out)

    def evaluate(self, z: complex) -> np.ndarray:
        powers = np.asarray(z, dtype=complex) ** -np.arange(len(self))
        return np.tensordot(powers, self.coeffs, axes=1)

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max())

    def __add__(self, other: 'FirSeries') -> 'FirSeries':
        return fir_add(self, other)

    def __matmul__(self, other: 'FirSeries') -> 'FirSeries':
        return fir_convolve(self, other)

    def __repr__(self):
        return f'FirSeries(horizon={self.horizon}, shape={self.shape})'


@dataclass(frozen=True)
class ClosedLoop:
    """Interconnection state matrix together with its stability verdict."""

    matrix: np.ndarray
    radius: float
    stable: bool


# --- plant response ------------------------------------------------------

def markov(sys: StateSpace, t: int) -> np.ndarray:
    """Impulse-response coefficient: 0 at ``t = 0``, ``C A^(t-1) B`` after."""
    if t < 0:
        raise ValueError('t must be nonnegative')
    if t == 0:
        return np.zeros((sys.n_outputs, sys.n_inputs))
    return sys.C @ np.linalg.matrix_power(sys.A, t - 1) @ sys.B


def plant_structure(sys: StateSpace, tol: float = 1e-9) -> Pattern:
    """Structural pattern of ``C (zI - A)^-1 B``.

    By Cayley-Hamilton an entry vanishing in the first ``n`` Markov
    parameters vanishes identically, so ``n`` terms decide the pattern.
    """
    pattern = zeros(sys.n_outputs, sys.n_inputs)
    power = np.eye(sys.n_states)
    for _ in range(max(sys.n_states, 1)):
        pattern = bool_sum(pattern, struct_of(sys.C @ power @ sys.B, tol))
        power = power @ sys.A
    return pattern


# --- FIR algebra ---------------------------------------------------------

def fir_convolve(F: FirSeries, G: FirSeries) -> FirSeries:
    """Product of two FIR transfer matrices, horizon ``N_F + N_G``."""
    if F.shape[1] != G.shape[0]:
        raise ValueError(f'fir_convolve: inner dimensions disagree {F.shape} x {G.shape}')
    out = np.zeros((len(F) + len(G) - 1, F.shape[0], G.shape[1]))
    for k in range(len(F)):
        out[k:k + len(G)] += np.einsum('ij,tjk->tik', F.coeffs[k], G.coeffs)
    return FirSeries(out)


def fir_add(F: FirSeries, G: FirSeries) -> FirSeries:
    if F.shape != G.shape:
        raise ValueError(f'fir_add: shape mismatch {F.shape} vs {G.shape}')
    h = max(F.horizon, G.horizon)
    return FirSeries(F.padded(h).coeffs + G.padded(h).coeffs)


def h2_sq_fir(F: FirSeries) -> float:
    """Squared H2 norm: sum of squared Frobenius norms of the coefficients."""
    return float(np.sum(F.coeffs ** 2))


def spectral_radius(M) -> float:
    mat = np.atleast_2d(np.asarray(M))
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def h2_sq_lyap(sys: Union[StateSpace, Realization]) -> float:
    """Squared H2 norm from the observability Gramian.

    Solves ``P = A' P A + C' C`` and returns ``trace(B' P B) + ||D||_F^2``.
    Complex realizations are accepted.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    if A.shape[0] == 0:
        return float(np.sum(np.abs(D) ** 2))
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableSystemError(f'spectral radius {rho:.6g} >= 1')
    P = linalg.solve_discrete_lyapunov(A.conj().T, C.conj().T @ C)
    return float(np.real(np.trace(B.conj().T @ P @ B)) + np.sum(np.abs(D) ** 2))


def shift_register(F: FirSeries) -> Realization:
    """Tapped-delay-line realization of an FIR series (state = past inputs)."""
    N = F.horizon
    r, c = F.shape
    n = N * c
    A = np.zeros((n, n))
    if N > 1:
        A[c:, :-c] = np.eye(n - c)
    B = np.zeros((n, c))
    if N:
        B[:c] = np.eye(c)
    C = np.hstack(list(F.coeffs[1:])) if N else np.zeros((r, 0))
    return Realization(A, B, C, F.coeffs[0])


# --- controller recovery -------------------------------------------------

def fir_long_division(U: FirSeries, Y: FirSeries, M: int) -> FirSeries:
    """First ``M`` coefficients of the power series ``U Y^-1``.

    Back-substitution ``K[t] = (U[t] - sum_{k<t} K[k] Y[t-k]) Y[0]^-1``.
    Structural zeros propagate exactly, but roundoff in the nonzero entries
    grows like the largest root of ``det Y``.
    """
    if U.shape[1] != Y.shape[0] or Y.shape[0] != Y.shape[1]:
        raise ValueError(f'fir_long_division: incompatible shapes {U.shape}, {Y.shape}')
    if M < 1:
        raise ValueError('M must be positive')
    y0 = Y.coeffs[0]
    if np.linalg.cond(y0) > 1e12:
        raise np.linalg.LinAlgError('leading coefficient of Y is singular')
    y0_inv = np.linalg.inv(y0)
    if np.array_equal(y0, np.eye(y0.shape[0])):
        y0_inv = np.eye(y0.shape[0])
    K = np.zeros((M,) + (U.shape[0], Y.shape[1]))
    for t in range(M):
        acc = U.coeffs[t].copy() if t < len(U) else np.zeros(K.shape[1:])
        for k in range(max(0, t - Y.horizon), t):
            acc -= K[k] @ Y.coeffs[t - k]
        K[t] = acc @ y0_inv
    return FirSeries(K)


def realize_controller(U: FirSeries, Y: FirSeries) -> Realization:
    """State-space form of ``K = U Y^-1`` with ``Y[0] = I``.

    The state holds the last ``N`` samples of ``eta = Y^-1 y``; the tail of
    ``Y`` is fed back to produce ``eta``.  The realization is generally not
    minimal: it keeps modes at the zeros of ``det Y``, which cancel in
    the closed loop (see :func:`internally_stable`).
    """
    p = Y.shape[0]
    if not np.allclose(Y.coeffs[0], np.eye(p), atol=1e-12):
        raise np.linalg.LinAlgError('realize_controller needs Y[0] = I')
    N = max(U.horizon, Y.horizon)
    U, Y = U.padded(N), Y.padded(N)
    m = U.shape[0]
    n = N * p
    y_tail = np.hstack(list(Y.coeffs[1:])) if N else np.zeros((p, 0))
    u_tail = np.hstack(list(U.coeffs[1:])) if N else np.zeros((m, 0))
    A = np.zeros((n, n))
    if N > 1:
        A[p:, :-p] = np.eye(n - p)
    B = np.zeros((n, p))
    if N:
        A[:p] -= y_tail
        B[:p] = np.eye(p)
    C = u_tail - U.coeffs[0] @ y_tail
    return Realization(A, B, C, U.coeffs[0])


def modal_split(sys: Realization, margin: float = 1e-6):
    """Separate the modes with ``|lambda| >= 1 - margin`` from the rest.

    An ordered Schur form followed by a Sylvester solve block-diagonalizes
    the state matrix.  Returns ``(unstable, stable)`` as complex
    :class:`Realization` pairs; the transfer matrix is their sum, with the
    feedthrough carried by ``stable``.
    """
    n = sys.n_states
    D = sys.D.astype(complex)
    if n == 0:
        empty = Realization(np.zeros((0, 0)), np.zeros((0, sys.n_inputs)),
                            np.zeros((sys.n_outputs, 0)), np.zeros_like(sys.D))
        return empty, sys
    limit = 1.0 - margin
    Tm, Q, k = linalg.schur(sys.A.astype(complex), output='complex',
                            sort=lambda lam: abs(lam) >= limit)
    A11, A12, A22 = Tm[:k, :k], Tm[:k, k:], Tm[k:, k:]
    Bq = Q.conj().T @ sys.B
    Cq = sys.C @ Q
    X = linalg.solve_sylvester(A11, -A22, -A12) if 0 < k < n else np.zeros((k, n - k))
    unstable = _ComplexRealization(A11, Bq[:k] - X @ Bq[k:], Cq[:, :k], np.zeros_like(D))
    stable = _ComplexRealization(A22, Bq[k:], Cq[:, :k] @ X + Cq[:, k:], D)
    return unstable, stable


class _ComplexRealization(Realization):
    # Same container, complex entries allowed.
    def __post_init__(self):
        for name in ('A', 'B', 'C', 'D'):
            val = np.array(getattr(self, name), dtype=complex)
            val.setflags(write=False)
            object.__setattr__(self, name, val)


def hidden_unstable_ok(sys: Realization, margin: float = 1e-6, tol: float = 1e-6) -> bool:
    """True when no mode outside the ``1 - margin`` disk reaches the transfer
    matrix.

    The unstable modal part must have vanishing Markov parameters
    ``C1 A11^j B1`` for ``j`` below its dimension, measured relative to
    ``||B|| ||C|| ||A11||^j``.
    """
    unstable, _ = modal_split(sys, margin)
    k = unstable.n_states
    if k == 0:
        return True
    scale = max(np.linalg.norm(sys.B, 2) * np.linalg.norm(sys.C, 2), 1e-300)
    a_norm = max(np.linalg.norm(unstable.A, 2), 1.0)
    term = unstable.B
    for j in range(k):
        if np.linalg.norm(unstable.C @ term, 2) > tol * scale * a_norm ** j:
            return False
        term = unstable.A @ term
    return True


def interconnection(plant: StateSpace, K: Realization) -> Realization:
    """Closed loop of ``y = C x + dy``, ``x+ = A x + B (u + du)``, ``u = K y``.

    Inputs are ``(du, dy)``; outputs are ``(y - dy, u)``.  The four blocks of
    the transfer matrix are therefore ``[[W, Y - I], [Z - I, U]]``.
    """
    A, B, C = plant.A, plant.B, plant.C
    Ak, Bk, Ck, Dk = K.A, K.B, K.C, K.D
    n, nk = plant.n_states, K.n_states
    m, p = plant.n_inputs, plant.n_outputs
    if K.n_inputs != p or K.n_outputs != m:
        raise ValueError(f'controller is {K.n_outputs}x{K.n_inputs}, plant needs {m}x{p}')
    Acl = np.block([[A + B @ Dk @ C, B @ Ck], [Bk @ C, Ak]])
    Bcl = np.block([[B, B @ Dk], [np.zeros((nk, m)), Bk]])
    Ccl = np.block([[C, np.zeros((p, nk))], [Dk @ C, Ck]])
    Dcl = np.block([[np.zeros((p, m)), np.zeros((p, p))], [np.zeros((m, m)), Dk]])
    return Realization(Acl, Bcl, Ccl, Dcl)


def closed_loop(plant: StateSpace, K: Realization, margin: float = 1e-6) -> ClosedLoop:
    """Interconnection state matrix and the verdict ``radius < 1 - margin``.

    ``G`` is strictly proper, so the loop never has an algebraic cycle.
    """
    Acl = interconnection(plant, K).A
    rho = spectral_radius(Acl)
    return ClosedLoop(Acl, rho, rho < 1.0 - margin)


def internally_stable(plant: StateSpace, K: Realization, margin: float = 1e-6,
                      tol: float = 1e-6) -> bool:
    """Stability of every map from ``(du, dy)`` to ``(y, u)``.

    Unlike :func:`closed_loop`, modes of a non-minimal controller
    realization that cancel out of the closed-loop maps are not held
    against it.  The plant itself must have no hidden unstable modes.
    """
    loop = interconnection(plant, K)
    if spectral_radius(loop.A) < 1.0 - margin:
        return True
    return hidden_unstable_ok(loop, margin, tol)


# --- plant builders ------------------------------------------------------

def check_unstable_modes(sys: StateSpace, tol: float = PBH_TOL) -> None:
    """PBH test at every eigenvalue with ``|lambda| >= 1``.

    Raises ``ValueError`` if an unstable mode is uncontrollable or
    unobservable, since such a mode would be invisible to the closed-loop
    transfer matrices.
    """
    n = sys.n_states
    for lam in np.linalg.eigvals(sys.A):
        if abs(lam) < 1.0:
            continue
        M = lam * np.eye(n) - sys.A
        ctrb = np.linalg.svd(np.hstack([M, sys.B]), compute_uv=False)
        obsv = np.linalg.svd(np.vstack([M, sys.C]), compute_uv=False)
        scale = max(1.0, abs(lam), np.linalg.norm(sys.A, 2))
        if np.sum(ctrb > tol * scale) < n:
            raise ValueError(f'unstable mode {lam:.6g} is not controllable')
        if np.sum(obsv > tol * scale) < n:
            raise ValueError(f'unstable mode {lam:.6g} is not observable')


def example1_plant() -> StateSpace:
    """Five-channel lower-triangular plant with ``u(z) = 0.1/(z - 0.5)`` and
    ``v(z) = 1/(z - 2)`` entries, one state per input column."""
    kinds = ['u', 'v', 'u', 'u', 'v']
    a = {'u': 0.5, 'v': 2.0}
    b = {'u': 0.1, 'v': 1.0}
    A = np.diag([a[k] for k in kinds])
    B = np.diag([b[k] for k in kinds])
    C = np.tril(np.ones((5, 5)))
    sys = StateSpace(A, B, C)
    check_unstable_modes(sys)
    return sys


def lqr_plant(A) -> StateSpace:
    """State-feedback plant ``x+ = A x + u``, ``y = x``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    sys = StateSpace(A, np.eye(n), np.eye(n))
    check_unstable_modes(sys)
    return sys


def system_from_dict(data: dict) -> StateSpace:
    missing = [k for k in ('A', 'B', 'C') if k not in data]
    if missing:
        raise ValueError(f'system is missing fields {missing}')
    sys = StateSpace(data['A'], data['B'], data['C'])
    check_unstable_modes(sys)
    return sys


def load_system(path: Union[str, Path]) -> StateSpace:
    return system_from_dict(json.loads(Path(path).read_text()))
