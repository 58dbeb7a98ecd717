"""Named patterns and plants used by the worked examples and reproductions."""

from __future__ import annotations

import numpy as np

from .lti import example1_plant, plant_structure
from .patterns import Pattern

__all__ = [
    'X1', 'X2', 'X3',
    'EXAMPLE1_S', 'EXAMPLE1_S2', 'EXAMPLE1_S3', 'EXAMPLE1_DELTA',
    'EXAMPLE1_R_STAR_S', 'EXAMPLE1_R_STAR_S2',
    'EXAMPLE1_SI_COST', 'EXAMPLE1_SUPERSET_COST',
    'example1_delta', 'ring_lqr_matrix',
]

# 2x3 patterns used to illustrate order and sums.
X1 = Pattern.from_rows(['010', '111'])
X2 = Pattern.from_rows(['010', '101'])
X3 = Pattern.from_rows(['110', '101'])

EXAMPLE1_S = Pattern.from_rows(['10000', '11000', '01100', '01110', '01111'])
# Nearest QI subset of EXAMPLE1_S (two ones removed) and least QI superset.
EXAMPLE1_S2 = Pattern.from_rows(['00000', '01000', '01100', '01110', '01111'])
EXAMPLE1_S3 = Pattern.from_rows(['10000', '11000', '11100', '11110', '11111'])
EXAMPLE1_DELTA = Pattern.from_rows(['10000', '11000', '11100', '11110', '11111'])
EXAMPLE1_R_STAR_S = Pattern.from_rows(['10000', '01000', '01100', '01110', '01111'])
EXAMPLE1_R_STAR_S2 = Pattern.from_rows(['11111', '01000', '01100', '01110', '01111'])

# Published optimal H2 costs for the SI restriction and the QI superset.
EXAMPLE1_SI_COST = 6.7278
EXAMPLE1_SUPERSET_COST = 6.7268


def example1_delta() -> Pattern:
    """Structure of the five-channel plant, computed from its realization."""
    return plant_structure(example1_plant())


def ring_lqr_matrix(n: int, seed=None, extra_edges: float = 0.3) -> np.ndarray:
    """Random strongly connected ``A``: a directed ring with self loops plus
    random extra edges, nonzero weights of magnitude in ``[0.5, 1.5]``."""
    if n < 1:
        raise ValueError('n must be positive')
    rng = np.random.default_rng(seed)
    support = np.eye(n, dtype=bool) | (rng.random((n, n)) < extra_edges)
    support[np.arange(n), (np.arange(n) + 1) % n] = True
    weights = rng.uniform(0.5, 1.5, (n, n)) * rng.choice((-1.0, 1.0), (n, n))
    return np.where(support, weights, 0.0)
