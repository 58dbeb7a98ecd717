"""Sparse H2 controller synthesis over FIR closed-loop maps.

The controller ``K`` is parameterized by the four closed-loop maps of
``y = G u + dy``, ``u = K y + du``::

    [y]   [Y  W] [dy]
    [u] = [U  Z] [du]

which satisfy the affine relations ``Y - G U = I``, ``W - G Z = 0``,
``W - Y G = 0`` and ``Z - U G = I``, and give back ``K = U Y^-1``.  Each map
is a finite impulse response of horizon ``N``.  Products with the plant are
written through auxiliary state trajectories whose terminal value is forced
to zero, so an unstable plant is handled without any approximation of its
dynamics.

Sparsity enters through a pair of patterns ``(T, R)``.  With the identity
multiplier ``U`` lives in ``Sparse(T)`` and ``Y`` in ``Sparse(R)``; with the
plant as multiplier the same patterns constrain ``Z - I = U G`` and
``W = Y G``.  Whenever ``T <= S`` and ``T R^(p-1) <= S`` the recovered
controller lies in ``Sparse(S)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import sparse

from .invariance import algorithm1, qi_holds, si_holds
from .lti import (
    FirSeries,
    Realization,
    StateSpace,
    UnstableSystemError,
    closed_loop,
    fir_long_division,
    h2_sq_lyap,
    interconnection,
    internally_stable,
    modal_split,
    plant_structure,
    realize_controller,
)
from .patterns import Pattern, bool_power, ones, struct_of
from .qp import EqualityLS, QPResult, solve_eq_ls

__all__ = [
    'GenericFirCost',
    'SynthesisSpec',
    'SynthesisReport',
    'SpecError',
    'Assembled',
    'assemble',
    'synthesize',
    'sweep_horizon',
    'controller_in_pattern',
    'COST_CHOICES',
    'GAMMA_CHOICES',
]

GAMMA_CHOICES = ('identity', 'plant')
COST_CHOICES = ('example1_blocks', 'state_feedback_w')
RESTRICTION_CHOICES = ('si', 'qi')
CONVERGENCE_TOL = 1e-3


class SpecError(ValueError):
    """Invalid synthesis specification.

    ``triple`` carries the violating index triple when the sparsity
    invariance precondition fails.
    """

    def __init__(self, message: str, triple=None):
        super().__init__(message)
        self.triple = triple


@dataclass
class GenericFirCost:
    """Cost ``||P11 + P12 U P21||_2^2`` with stable FIR weights."""

    P11: FirSeries
    P12: FirSeries
    P21: FirSeries

    def __post_init__(self):
        for name in ('P11', 'P12', 'P21'):
            val = getattr(self, name)
            if not isinstance(val, FirSeries):
                setattr(self, name, FirSeries(val))


CostSpec = Union[str, GenericFirCost]


@dataclass
class SynthesisSpec:
    """One convex restriction of the sparse H2 problem.

    Parameters
    ----------
    plant : StateSpace
    S : Pattern
        Required controller sparsity, ``m x p``.
    T, R : Pattern, optional
        Structure imposed on the parameters.  ``T`` defaults to ``S`` and
        ``R`` to ``algorithm1(T)``; ``R`` is always replaced by its boolean
        ``(p - 1)``-th power.
    N : int
        FIR horizon.
    gamma : {'identity', 'plant'}
    cost : {'example1_blocks', 'state_feedback_w'} or GenericFirCost
    restriction : {'si', 'qi'}
        ``'qi'`` drops the constraint on ``Y`` entirely and imposes only
        ``U`` in ``Sparse(T)``.  It is exact only when ``T`` is quadratically
        invariant, which is checked.
    """

    plant: StateSpace
    S: Pattern
    T: Optional[Pattern] = None
    R: Optional[Pattern] = None
    N: int = 20
    gamma: str = 'identity'
    cost: CostSpec = 'example1_blocks'
    tol_feas: float = 1e-7
    tol_struct: float = 1e-7
    restriction: str = 'si'

    def __post_init__(self):
        m, p = self.plant.n_inputs, self.plant.n_outputs
        if self.S.shape != (m, p):
            raise SpecError(f'S must be {m}x{p} for this plant, got {self.S.shape}')
        if self.T is None:
            self.T = self.S
        if self.T.shape != (m, p):
            raise SpecError(f'T must be {m}x{p}, got {self.T.shape}')
        if not isinstance(self.N, (int, np.integer)) or self.N < 0:
            raise SpecError(f'N must be a nonnegative integer, got {self.N!r}')
        self.N = int(self.N)
        if self.gamma not in GAMMA_CHOICES:
            raise SpecError(f'gamma must be one of {GAMMA_CHOICES}, got {self.gamma!r}')
        if self.gamma == 'plant' and m != p:
            raise SpecError('gamma = plant needs a square plant')
        if isinstance(self.cost, str) and self.cost not in COST_CHOICES:
            raise SpecError(f'cost must be one of {COST_CHOICES} or generic, got {self.cost!r}')
        if self.restriction not in RESTRICTION_CHOICES:
            raise SpecError(f'restriction must be one of {RESTRICTION_CHOICES}')
        if self.restriction == 'qi':
            self._validate_qi()
        else:
            self._validate_si()

    def _validate_si(self):
        if self.R is None:
            self.R = algorithm1(self.T)
        p = self.plant.n_outputs
        if self.R.shape != (p, p):
            raise SpecError(f'R must be {p}x{p}, got {self.R.shape}')
        try:
            verdict = si_holds(self.T, self.R, self.S)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        if not verdict.holds:
            i, j, k = verdict.violating_triple
            raise SpecError(
                f'sparsity invariance fails: T[{i},{k}] = 1 and R^(p-1)[{k},{j}] = 1 '
                f'but S[{i},{j}] = 0', verdict.violating_triple)
        self.R = bool_power(self.R, p - 1)

    def _validate_qi(self):
        if self.gamma != 'identity':
            raise SpecError("restriction 'qi' is only defined for gamma = identity")
        if not self.T <= self.S:
            raise SpecError('restriction qi needs T <= S')
        if not qi_holds(self.T, plant_structure(self.plant)):
            raise SpecError('restriction qi needs T to be quadratically invariant')
        p = self.plant.n_outputs
        self.R = ones(p, p)

    def with_horizon(self, N: int) -> 'SynthesisSpec':
        return SynthesisSpec(self.plant, self.S, self.T, self.R, N, self.gamma,
                             self.cost, self.tol_feas, self.tol_struct, self.restriction)


@dataclass
class SynthesisReport:
    feasible: bool
    N: int
    cost_h2_sq: float = float('nan')
    iop: Optional[Dict[str, FirSeries]] = None
    K_fir: Optional[FirSeries] = None
    K_realized: Optional[Realization] = None
    checks: Dict[str, object] = field(default_factory=dict)
    feasibility_residual: float = float('nan')
    n_vars: int = 0
    n_eqs: int = 0

    @property
    def cost_h2(self) -> float:
        return math.sqrt(self.cost_h2_sq) if self.feasible else float('nan')

    @property
    def verified(self) -> bool:
        """Feasible and every verification flag passed."""
        if not self.feasible:
            return False
        return bool(self.checks.get('controller_sparsity_ok')) and bool(
            self.checks.get('closed_loop_stable')) and bool(self.checks.get('constraint_ok'))


# --- assembly ------------------------------------------------------------

class _Block:
    """Matrix unknown: entries are either variables or fixed constants."""

    __slots__ = ('shape', 'index', 'const')

    def __init__(self, shape, index: np.ndarray, const: np.ndarray):
        self.shape = shape
        self.index = index
        self.const = const

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy().ravel()
        free = self.index >= 0
        out[free] = x[self.index[free]]
        return out.reshape(self.shape)


class _Builder:
    def __init__(self):
        self.n_vars = 0
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._vals: List[np.ndarray] = []
        self._rhs: List[np.ndarray] = []
        self.n_rows = 0

    def variable(self, shape, mask: Optional[np.ndarray] = None) -> _Block:
        size = shape[0] * shape[1]
        free = np.ones(size, dtype=bool) if mask is None else np.asarray(mask, bool).ravel()
        index = -np.ones(size, dtype=np.int64)
        k = int(free.sum())
        index[free] = np.arange(self.n_vars, self.n_vars + k)
        self.n_vars += k
        return _Block(shape, index, np.zeros(size))

    @staticmethod
    def fixed(value: np.ndarray) -> _Block:
        value = np.asarray(value, dtype=float)
        return _Block(value.shape, -np.ones(value.size, dtype=np.int64), value.ravel().copy())

    def add(self, terms, rhs: np.ndarray) -> None:
        """Append rows for ``sum L X R = rhs`` (``None`` means identity)."""
        rhs = np.array(rhs, dtype=float)
        total = rhs.ravel().copy()
        n_out = total.size
        for L, block, R in terms:
            r, c = block.shape
            Lm = np.eye(r) if L is None else np.asarray(L, dtype=float)
            Rm = np.eye(c) if R is None else np.asarray(R, dtype=float)
            coeff = sparse.coo_matrix(sparse.kron(sparse.csr_matrix(Lm), sparse.csr_matrix(Rm.T)))
            const_part = (Lm @ block.const.reshape(r, c) @ Rm).ravel()
            total -= const_part
            var_col = block.index[coeff.col]
            keep = (var_col >= 0) & (coeff.data != 0)
            self._rows.append(coeff.row[keep] + self.n_rows)
            self._cols.append(var_col[keep])
            self._vals.append(coeff.data[keep])
        self._rhs.append(total)
        self.n_rows += n_out

    def matrices(self):
        rows = np.concatenate(self._rows) if self._rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(self._cols) if self._cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(self._vals) if self._vals else np.zeros(0)
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        return mat, rhs


@dataclass
class Assembled:
    """Assembled program plus the bookkeeping needed to decode a solution."""

    qp: EqualityLS
    blocks: Dict[str, List[_Block]]
    spec: SynthesisSpec

    def decode(self, x: np.ndarray) -> Dict[str, FirSeries]:
        return {name: FirSeries(np.stack([b.value(x) for b in self.blocks[name]]))
                for name in ('Y', 'U', 'W', 'Z')}


def assemble(spec: SynthesisSpec) -> Assembled:
    """Build the equality-constrained least-squares program for ``spec``.

    Structural zeros are eliminated from the variable vector.  Variables are
    the free entries of ``U[0..N]``, ``Y, W, Z[1..N]`` (``Y[0] = I``,
    ``W[0] = 0`` and ``Z[0] = I`` are forced) and the auxiliary trajectories
    at ``t = 1..N``.
    """
    sys, N = spec.plant, spec.N
    A, B, C = sys.A, sys.B, sys.C
    n, m, p = sys.n_states, sys.n_inputs, sys.n_outputs
    T, R = spec.T.array, spec.R.array
    if spec.restriction == 'qi':
        masks = {'U': T, 'Y': None, 'W': None, 'Z': None}
    elif spec.gamma == 'identity':
        masks = {'U': T, 'Y': R, 'W': None, 'Z': None}
    else:
        masks = {'U': None, 'Y': None, 'W': R, 'Z': T}

    bld = _Builder()
    shapes = {'Y': (p, p), 'U': (m, p), 'W': (p, m), 'Z': (m, m)}
    first = {'Y': np.eye(p), 'W': np.zeros((p, m)), 'Z': np.eye(m)}
    blocks: Dict[str, List[_Block]] = {k: [] for k in shapes}
    for t in range(N + 1):
        for name in ('U', 'Y', 'W', 'Z'):
            if t == 0 and name in first:
                blocks[name].append(bld.fixed(first[name]))
            else:
                blocks[name].append(bld.variable(shapes[name], masks[name]))
    aux_shapes = {'xi1': (n, p), 'xi2': (n, m), 'zeta3': (p, n), 'zeta4': (m, n)}
    aux = {}
    for name, shape in aux_shapes.items():
        zero = bld.fixed(np.zeros(shape))
        aux[name] = [zero] + [bld.variable(shape) for _ in range(N)] + [zero]

    Y, U, W, Z = blocks['Y'], blocks['U'], blocks['W'], blocks['Z']
    xi1, xi2, z3, z4 = aux['xi1'], aux['xi2'], aux['zeta3'], aux['zeta4']
    for t in range(N + 1):
        # Y - G U = I
        bld.add([(None, xi1[t + 1], None), (-A, xi1[t], None), (-B, U[t], None)], np.zeros((n, p)))
        # W - G Z = 0
        bld.add([(None, xi2[t + 1], None), (-A, xi2[t], None), (-B, Z[t], None)], np.zeros((n, m)))
        # W - Y G = 0
        bld.add([(None, z3[t + 1], None), (None, z3[t], -A), (None, Y[t], -C)], np.zeros((p, n)))
        # Z - U G = I
        bld.add([(None, z4[t + 1], None), (None, z4[t], -A), (None, U[t], -C)], np.zeros((m, n)))
        if t == 0:
            continue
        bld.add([(None, Y[t], None), (-C, xi1[t], None)], np.zeros((p, p)))
        bld.add([(None, W[t], None), (-C, xi2[t], None)], np.zeros((p, m)))
        bld.add([(None, W[t], None), (None, z3[t], -B)], np.zeros((p, m)))
        bld.add([(None, Z[t], None), (None, z4[t], -B)], np.zeros((m, m)))
    E, f = bld.matrices()

    cost = _Builder()
    cost.n_vars = bld.n_vars
    if isinstance(spec.cost, GenericFirCost):
        _generic_cost(cost, spec.cost, U, N)
    else:
        names = ('W',) if spec.cost == 'state_feedback_w' else ('W', 'Y', 'Z', 'U')
        for t in range(N + 1):
            for name in names:
                block = blocks[name][t]
                target = np.eye(block.shape[0]) if name in ('Y', 'Z') and t == 0 else np.zeros(block.shape)
                cost.add([(None, block, None)], target)
    M, d = cost.matrices()
    qp = EqualityLS(M, d, E, f)
    return Assembled(qp, blocks, spec)


def _generic_cost(cost: _Builder, gen: GenericFirCost, U: List[_Block], N: int) -> None:
    P11, P12, P21 = gen.P11, gen.P12, gen.P21
    m, p = U[0].shape
    if P12.shape[1] != m or P21.shape[0] != p or P11.shape != (P12.shape[0], P21.shape[1]):
        raise SpecError('generic cost weights have inconsistent dimensions')
    horizon = max(P11.horizon, P12.horizon + N + P21.horizon)
    P11 = P11.padded(horizon)
    for t in range(horizon + 1):
        terms = []
        for a in range(min(t, P12.horizon) + 1):
            for b in range(min(t - a, N) + 1):
                c = t - a - b
                if c <= P21.horizon:
                    terms.append((P12[a], U[b], P21[c]))
        if terms:
            cost.add(terms, -P11[t])
        else:
            cost.add([(None, cost.fixed(np.zeros(P11.shape)), None)], -P11[t])


# --- solve and verify ----------------------------------------------------

def controller_in_pattern(K: FirSeries, S: Pattern, tol: float) -> bool:
    """Every coefficient of ``K`` vanishes outside ``S`` at tolerance
    ``tol * (1 + max |K|)``."""
    threshold = tol * (1.0 + K.max_abs())
    outside = np.abs(K.coeffs[:, ~S.array])
    return bool(outside.size == 0 or outside.max() <= threshold)


def _cost_realization(spec: SynthesisSpec, loop: Realization) -> Optional[Realization]:
    # Interconnection outputs are (y - dy, u) and inputs (du, dy).
    if isinstance(spec.cost, GenericFirCost):
        return None
    if spec.cost == 'example1_blocks':
        return loop
    p, m = spec.plant.n_outputs, spec.plant.n_inputs
    return Realization(loop.A, loop.B[:, :m], loop.C[:p], loop.D[:p, :m])


def synthesize(spec: SynthesisSpec, qp_options: Optional[dict] = None) -> SynthesisReport:
    """Solve one restriction and verify the recovered controller."""
    asm = assemble(spec)
    qp = asm.qp
    result: QPResult = solve_eq_ls(qp, tol_feas=spec.tol_feas, **(qp_options or {}))
    report = SynthesisReport(feasible=result.feasible, N=spec.N,
                             feasibility_residual=result.feasibility.residual,
                             n_vars=qp.n_vars, n_eqs=qp.n_eqs)
    if not result.feasible:
        return report
    x = result.x
    iop = asm.decode(x)
    report.iop = iop
    report.cost_h2_sq = max(result.objective, 0.0)
    threshold = spec.tol_feas * (1.0 + np.linalg.norm(qp.f))
    checks: Dict[str, object] = {
        'constraint_residual': result.residual,
        'constraint_ok': bool(result.residual <= threshold),
    }
    K_fir = fir_long_division(iop['U'], iop['Y'], 2 * spec.N + 1)
    report.K_fir = K_fir
    checks['controller_sparsity_ok'] = controller_in_pattern(K_fir, spec.S, spec.tol_struct)
    K_real = realize_controller(iop['U'], iop['Y'])
    report.K_realized = K_real
    stable = internally_stable(spec.plant, K_real)
    checks['closed_loop_stable'] = bool(stable)
    checks['closed_loop_radius'] = closed_loop(spec.plant, K_real).radius
    gap = float('nan')
    target = _cost_realization(spec, interconnection(spec.plant, K_real))
    if stable and target is not None:
        try:
            lyap = h2_sq_lyap(modal_split(target)[1])
            gap = abs(lyap - report.cost_h2_sq) / max(1.0, report.cost_h2_sq)
        except UnstableSystemError:
            pass
    checks['lyap_vs_fir_cost_gap'] = gap
    report.checks = checks
    return report


def sweep_horizon(spec: SynthesisSpec, horizons: Sequence[int]) -> List[dict]:
    """Synthesize at each horizon; rows carry the change from the previous
    feasible horizon.

    A row is ``{'N', 'feasible', 'cost', 'delta', 'verified', 'report'}``.
    ``delta`` is ``nan`` until two feasible horizons have been seen.
    """
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError('horizons must be strictly ascending')
    rows, previous = [], None
    for N in horizons:
        rep = synthesize(spec.with_horizon(N))
        cost = rep.cost_h2 if rep.feasible else float('nan')
        delta = previous - cost if (rep.feasible and previous is not None) else float('nan')
        rows.append({'N': N, 'feasible': rep.feasible, 'cost': cost, 'delta': delta,
                     'verified': rep.verified, 'report': rep})
        if rep.feasible:
            previous = cost
    return rows


def converged(rows: Sequence[dict], tol: float = CONVERGENCE_TOL) -> bool:
    """True when the last consecutive delta of a sweep is below ``tol``."""
    return bool(rows) and rows[-1]['feasible'] and abs(rows[-1]['delta']) < tol
