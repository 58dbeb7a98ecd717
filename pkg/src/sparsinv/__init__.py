"""Sparse controller design through sparsity invariance."""

from .patterns import Pattern, struct_of, bool_product, bool_sum, bool_power, leq
from .invariance import algorithm1, si_holds, qi_holds, theorem3_check, qi_superset, qi_subsets
from .lti import StateSpace, FirSeries, example1_plant, lqr_plant
from .synthesis import SynthesisSpec, SynthesisReport, synthesize, sweep_horizon

__version__ = '0.1.0'
