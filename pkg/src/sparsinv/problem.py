"""Problem files in, synthesis reports out."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .catalog import EXAMPLE1_S
from .lti import FirSeries, example1_plant, lqr_plant, system_from_dict
from .patterns import Pattern, PatternFormatError, read_pattern, struct_of
from .synthesis import GenericFirCost, SpecError, SynthesisReport, SynthesisSpec

__all__ = [
    'ProblemError',
    'parse_problem',
    'spec_from_dict',
    'report_to_dict',
    'emit_report',
    'canonical_json',
]

SIG_DIGITS = 12
_KNOWN_KEYS = {'plant', 'A', 'A_bin', 'S', 'T', 'R', 'N', 'gamma', 'cost',
               'restriction', 'tol_feas', 'tol_struct'}


class ProblemError(ValueError):
    """Schema violation in a problem file."""


def _pattern_field(value: Any, base: Path, name: str) -> Pattern:
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        try:
            return read_pattern(path)
        except OSError as exc:
            raise ProblemError(f'{name}: cannot read {path}: {exc}') from exc
    if isinstance(value, list) and value and all(isinstance(r, str) for r in value):
        try:
            return Pattern.from_rows(value)
        except ValueError as exc:
            raise ProblemError(f'{name}: {exc}') from exc
    if isinstance(value, list):
        try:
            return Pattern(value)
        except ValueError as exc:
            raise ProblemError(f'{name}: {exc}') from exc
    raise ProblemError(f'{name} must be a .pat path, a list of row strings or a 0/1 matrix')


def spec_from_dict(data: dict, base: Union[str, Path] = '.') -> SynthesisSpec:
    """Build a validated :class:`SynthesisSpec` from parsed problem JSON.

    Defaults: ``T = S``, ``R = algorithm1(T)``, ``gamma = 'identity'``.  For
    ``"plant": "example1"`` the five-channel ``S`` is the default pattern;
    for ``"lqr"`` it is ``A_bin`` if given, else ``Struct(A)``, and the cost
    defaults to ``state_feedback_w``.
    """
    if not isinstance(data, dict):
        raise ProblemError('problem must be a JSON object')
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ProblemError(f'unknown fields: {sorted(unknown)}')
    base = Path(base)
    kind = data.get('plant')
    default_cost = 'example1_blocks'
    default_S: Optional[Pattern] = None
    try:
        if kind == 'example1':
            plant = example1_plant()
            default_S = EXAMPLE1_S
        elif kind == 'lqr':
            if 'A' not in data:
                raise ProblemError('lqr plant needs an "A" matrix')
            plant = lqr_plant(data['A'])
            default_cost = 'state_feedback_w'
            if 'A_bin' in data:
                default_S = _pattern_field(data['A_bin'], base, 'A_bin')
            else:
                default_S = struct_of(plant.A)
        elif isinstance(kind, dict):
            plant = system_from_dict(kind)
        else:
            raise ProblemError('"plant" must be "example1", "lqr" or an {A, B, C} object')
    except ProblemError:
        raise
    except ValueError as exc:
        raise ProblemError(f'plant: {exc}') from exc

    if 'N' not in data:
        raise ProblemError('missing required field "N"')
    N = data['N']
    if isinstance(N, bool) or not isinstance(N, int) or N < 0:
        raise ProblemError('"N" must be a nonnegative integer')

    S = _pattern_field(data['S'], base, 'S') if 'S' in data else default_S
    if S is None:
        raise ProblemError('missing required field "S"')
    T = _pattern_field(data['T'], base, 'T') if data.get('T') is not None else None
    R_raw = data.get('R')
    if R_raw is None or R_raw == 'auto':
        R = None
    else:
        R = _pattern_field(R_raw, base, 'R')

    cost: Any = data.get('cost', default_cost)
    if isinstance(cost, dict):
        try:
            cost = GenericFirCost(*(FirSeries(cost[k]) for k in ('P11', 'P12', 'P21')))
        except (KeyError, ValueError) as exc:
            raise ProblemError(f'cost: needs P11, P12, P21 coefficient arrays ({exc})') from exc
    kwargs = {}
    for key in ('tol_feas', 'tol_struct'):
        if key in data:
            kwargs[key] = float(data[key])
    return SynthesisSpec(plant=plant, S=S, T=T, R=R, N=N,
                         gamma=data.get('gamma', 'identity'), cost=cost,
                         restriction=data.get('restriction', 'si'), **kwargs)


def parse_problem(path: Union[str, Path]) -> SynthesisSpec:
    """Read and validate a problem JSON file.

    Raises
    ------
    ProblemError
        For unreadable files and schema violations.
    SpecError
        When the structural precondition fails; ``exc.triple`` then holds
        the violating index triple.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ProblemError(f'cannot read {path}: {exc}') from exc
    except json.JSONDecodeError as exc:
        raise ProblemError(f'{path}: malformed JSON: {exc}') from exc
    try:
        return spec_from_dict(data, path.parent)
    except PatternFormatError as exc:
        raise ProblemError(str(exc)) from exc


# --- reports -------------------------------------------------------------

def _round(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return None
        v = float(f'{v:.{SIG_DIGITS}g}')
        return 0.0 if v == 0 else v
    if isinstance(value, np.ndarray):
        return _round(value.tolist())
    if isinstance(value, dict):
        return {str(k): _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    return value


def canonical_json(data: Any) -> str:
    """Sorted keys, floats rounded to 12 significant digits, NaN as null."""
    return json.dumps(_round(data), sort_keys=True, separators=(',', ': '), indent=None)


def report_to_dict(report: SynthesisReport) -> dict:
    out = {
        'feasible': report.feasible,
        'N': report.N,
        'cost_h2': report.cost_h2 if report.feasible else None,
        'cost_h2_sq': report.cost_h2_sq if report.feasible else None,
        'checks': dict(report.checks),
    }
    if report.feasible:
        out['verified'] = report.verified
        out['K_fir'] = report.K_fir.coeffs
    else:
        out['feasibility_residual'] = report.feasibility_residual
    return out


def emit_report(report: SynthesisReport, as_json: bool = False) -> str:
    """Render a report as canonical JSON or as a short table."""
    if as_json:
        return canonical_json(report_to_dict(report)) + '\n'
    lines = [f'N: {report.N}']
    if not report.feasible:
        lines.append('feasible: false')
        lines.append('infeasible')
        lines.append(f'feasibility_residual: {report.feasibility_residual:.3e}')
        return '\n'.join(lines) + '\n'
    lines.append('feasible: true')
    lines.append(f'cost_h2: {report.cost_h2:.6f}')
    lines.append(f'cost_h2_sq: {report.cost_h2_sq:.6f}')
    for key in sorted(report.checks):
        val = report.checks[key]
        if isinstance(val, (bool, np.bool_)):
            text = 'true' if val else 'false'
        else:
            text = f'{float(val):.3e}'
        lines.append(f'check {key}: {text}')
    lines.append(f'verified: {"true" if report.verified else "false"}')
    return '\n'.join(lines) + '\n'
