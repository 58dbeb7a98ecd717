"""Binary sparsity patterns and their boolean-semiring algebra.

A :class:`Pattern` is an immutable ``m x n`` binary matrix.  Sums are
entrywise OR, products are boolean matrix products, and ``<=`` is the
entrywise partial order, so expressions such as ``T @ R <= S`` read the same
way the structural conditions are usually written.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

__all__ = [
    'Pattern',
    'PatternFormatError',
    'bool_product',
    'bool_sum',
    'leq',
    'lt',
    'incomparable',
    'cardinality',
    'bool_power',
    'struct_of',
    'identity',
    'ones',
    'zeros',
    'parse_pattern',
    'format_pattern',
    'parse_patterns',
    'format_patterns',
    'read_pattern',
    'write_pattern',
]

DEFAULT_STRUCT_TOL = 1e-9
PATTERN_SEPARATOR = '---'


class PatternFormatError(ValueError):
    """Raised when pattern text cannot be parsed."""


class Pattern:
    """Immutable binary matrix.

    Parameters
    ----------
    entries : array_like
        Two-dimensional array whose entries are all 0 or 1 (booleans are
        accepted too).
    """

    __slots__ = ('_data', '_hash')

    def __init__(self, entries):
        data = np.array(entries)
        if data.ndim != 2:
            raise ValueError(f'pattern must be two-dimensional, got ndim={data.ndim}')
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f'pattern must have at least one row and column, got {data.shape}')
        if data.dtype != np.bool_:
            if not np.all((data == 0) | (data == 1)):
                raise ValueError('pattern entries must be 0 or 1')
            data = data.astype(bool)
        data.setflags(write=False)
        self._data = data
        self._hash = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> 'Pattern':
        # Trusted constructor for freshly computed boolean arrays.
        obj = cls.__new__(cls)
        data.setflags(write=False)
        obj._data = data
        obj._hash = None
        return obj

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> 'Pattern':
        """Build a pattern from compact row strings such as ``'01100'``."""
        return cls([[int(ch) for ch in row.replace(' ', '')] for row in rows])

    @property
    def array(self) -> np.ndarray:
        """Read-only boolean view of the entries."""
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    def to_int(self) -> np.ndarray:
        return self._data.astype(np.int64)

    def to_rows(self) -> List[str]:
        return [''.join('1' if v else '0' for v in row) for row in self._data]

    def flat_key(self) -> tuple:
        """Flattened entries, used for deterministic ordering."""
        return tuple(int(v) for v in self._data.ravel())

    @property
    def T(self) -> 'Pattern':
        return Pattern._wrap(self._data.T.copy())

    def __getitem__(self, index):
        return int(self._data[index])

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.shape, self._data.tobytes()))
        return self._hash

    def __matmul__(self, other: 'Pattern') -> 'Pattern':
        return bool_product(self, other)

    def __add__(self, other: 'Pattern') -> 'Pattern':
        return bool_sum(self, other)

    def __le__(self, other: 'Pattern') -> bool:
        return leq(self, other)

    def __lt__(self, other: 'Pattern') -> bool:
        return lt(self, other)

    def __ge__(self, other: 'Pattern') -> bool:
        return leq(other, self)

    def __gt__(self, other: 'Pattern') -> bool:
        return lt(other, self)

    def __repr__(self):
        return f"Pattern.from_rows({self.to_rows()!r})"

    def __str__(self):
        return format_pattern(self)


def _check_same_shape(a: Pattern, b: Pattern, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f'{what}: shape mismatch {a.shape} vs {b.shape}')


def bool_product(a: Pattern, b: Pattern) -> Pattern:
    """Boolean matrix product: entry ``(i, j)`` is 1 iff some ``k`` has
    ``a[i, k] = b[k, j] = 1``."""
    if a.cols != b.rows:
        raise ValueError(f'bool_product: inner dimensions disagree {a.shape} @ {b.shape}')
    prod = a._data.astype(np.int32) @ b._data.astype(np.int32)
    return Pattern._wrap(prod > 0)


def bool_sum(a: Pattern, b: Pattern) -> Pattern:
    """Entrywise OR."""
    _check_same_shape(a, b, 'bool_sum')
    return Pattern._wrap(a._data | b._data)


def leq(a: Pattern, b: Pattern) -> bool:
    """True iff every entry of ``a`` is at most the matching entry of ``b``."""
    _check_same_shape(a, b, 'leq')
    return not bool(np.any(a._data & ~b._data))


def lt(a: Pattern, b: Pattern) -> bool:
    """Strict order: ``a <= b`` and the two differ somewhere."""
    return leq(a, b) and not bool(np.array_equal(a._data, b._data))


def incomparable(a: Pattern, b: Pattern) -> bool:
    """True iff ``a`` is not below ``b`` (some entry of ``a`` exceeds ``b``)."""
    return not leq(a, b)


def cardinality(a: Pattern) -> int:
    """Number of nonzero entries."""
    return int(np.count_nonzero(a._data))


def identity(p: int) -> Pattern:
    return Pattern._wrap(np.eye(p, dtype=bool))


def ones(m: int, n: int) -> Pattern:
    return Pattern._wrap(np.ones((m, n), dtype=bool))


def zeros(m: int, n: int) -> Pattern:
    return Pattern._wrap(np.zeros((m, n), dtype=bool))


def bool_power(a: Pattern, k: int) -> Pattern:
    """``k``-fold boolean product of a square pattern, by repeated squaring.

    ``k = 0`` gives the identity pattern.
    """
    if a.rows != a.cols:
        raise ValueError(f'bool_power needs a square pattern, got {a.shape}')
    if k < 0:
        raise ValueError('bool_power exponent must be nonnegative')
    result = identity(a.rows)
    base = a
    while k:
        if k & 1:
            result = bool_product(result, base)
        k >>= 1
        if k:
            base = bool_product(base, base)
    return result


def struct_of(matrix, tol: float = DEFAULT_STRUCT_TOL) -> Pattern:
    """Pattern of the entries of ``matrix`` that are numerically nonzero.

    An entry counts as nonzero when ``|M[i, j]| > tol * (1 + max|M|)``.
    """
    if tol < 0:
        raise ValueError('tol must be nonnegative')
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    mags = np.abs(mat)
    scale = 1.0 + (mags.max() if mags.size else 0.0)
    return Pattern._wrap(mags > tol * scale)


# --- text format ---------------------------------------------------------

def parse_pattern(text: str) -> Pattern:
    """Parse one pattern in ``.pat`` form.

    One row per line, entries ``0``/``1`` separated by spaces; lines starting
    with ``#`` and blank lines are skipped.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        tokens = line.split()
        if any(tok not in ('0', '1') for tok in tokens):
            raise PatternFormatError(f'line {lineno}: entries must be 0 or 1: {raw!r}')
        rows.append([int(tok) for tok in tokens])
    if not rows:
        raise PatternFormatError('no pattern rows found')
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise PatternFormatError(f'ragged rows: widths {sorted(widths)}')
    return Pattern(rows)


def format_pattern(pattern: Pattern) -> str:
    lines = [' '.join('1' if v else '0' for v in row) for row in pattern.array]
    return '\n'.join(lines) + '\n'


def parse_patterns(text: str) -> List[Pattern]:
    """Parse a multi-pattern document with ``---`` separator lines."""
    chunks, current = [], []
    for line in text.splitlines():
        if line.strip() == PATTERN_SEPARATOR:
            chunks.append('\n'.join(current))
            current = []
        else:
            current.append(line)
    chunks.append('\n'.join(current))
    out = []
    for chunk in chunks:
        body = [ln for ln in chunk.splitlines() if ln.strip() and not ln.strip().startswith('#')]
        if body:
            out.append(parse_pattern(chunk))
    return out


def format_patterns(patterns: Iterable[Pattern]) -> str:
    return (PATTERN_SEPARATOR + '\n').join(format_pattern(p) for p in patterns)


def read_pattern(path: Union[str, Path]) -> Pattern:
    return parse_pattern(Path(path).read_text())


def write_pattern(path: Union[str, Path], pattern: Pattern) -> None:
    Path(path).write_text(format_pattern(pattern), newline='\n')
