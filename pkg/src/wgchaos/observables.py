"""Observables diagonal in (or tridiagonal across) the integrable basis.

AXIAL_MOMENTUM      l (units of 2 pi hbar / L)
POSITIVE_MOMENTUM   theta(l), with theta(0) = 0
ODD_MODE            l mod 2
TRANSVERSE_FRACTION transverse potential energy over total energy. Its
                    matrix element couples n to n and n +- 1 at equal l and is
                    divided by the energy of the row state, which in the
                    dimensionless scheme is hbar w / (2 E_nl) = lam / (2 lam + 4 eps_nl).
"""
from __future__ import annotations

import enum
import math

import numpy as np

from .eigenstates import EigState
from .params import Boundary, WaveguideParams, level_table

MIN_BASELINE_LEVELS = 1000


class ObservableKind(str, enum.Enum):
    AXIAL_MOMENTUM = "axial_momentum"
    POSITIVE_MOMENTUM = "positive_momentum"
    ODD_MODE = "odd_mode"
    TRANSVERSE_FRACTION = "transverse_fraction"

    @classmethod
    def parse(cls, name) -> ObservableKind:
        if isinstance(name, ObservableKind):
            return name
        short = {"pax": "axial_momentum", "p_ax": "axial_momentum", "ppos": "positive_momentum",
                 "pos": "positive_momentum", "podd": "odd_mode", "odd": "odd_mode", "u": "transverse_fraction"}
        key = str(name).strip().lower()
        return cls(short.get(key, key))


ALL_OBSERVABLES = tuple(ObservableKind)

# microcanonical means over integrable levels (axial momentum: l0)
_MEAN = {ObservableKind.POSITIVE_MOMENTUM: 0.5, ObservableKind.ODD_MODE: 0.5,
         ObservableKind.TRANSVERSE_FRACTION: 1.0 / 3.0}


def supports(kind: ObservableKind, params: WaveguideParams) -> bool:
    """Standing waves in the box have no sign of the axial momentum."""
    return not (params.boundary is Boundary.BOX
                and kind in (ObservableKind.AXIAL_MOMENTUM, ObservableKind.POSITIVE_MOMENTUM))


def _check(kind: ObservableKind, params: WaveguideParams) -> None:
    if not supports(kind, params):
        raise ValueError(f"{kind.value} is not defined for the hard-wall box")


def row_energy_factor(params: WaveguideParams, eps_nl) -> np.ndarray:
    """hbar w_perp / (2 E_nl) in terms of the dimensionless level energy."""
    return params.lam / (2.0 * params.lam + 4.0 * np.asarray(eps_nl, dtype=float))


def diagonal_values(kind: ObservableKind, params: WaveguideParams, n, l, eps_nl) -> np.ndarray:
    """<nl|O|nl> for arrays of levels."""
    kind = ObservableKind.parse(kind)
    _check(kind, params)
    n = np.asarray(n)
    l = np.asarray(l)
    if kind is ObservableKind.AXIAL_MOMENTUM:
        return l.astype(float)
    if kind is ObservableKind.POSITIVE_MOMENTUM:
        return (l > 0).astype(float)
    if kind is ObservableKind.ODD_MODE:
        return (np.mod(l, 2) == 1).astype(float)
    return (2.0 * n + 1.0) * row_energy_factor(params, eps_nl)


def tail_mean(kind: ObservableKind, params: WaveguideParams) -> float:
    """Value assigned to the weight outside a state's stored band: the
    integrable microcanonical mean."""
    kind = ObservableKind.parse(kind)
    _check(kind, params)
    if kind is ObservableKind.AXIAL_MOMENTUM:
        return params.l0
    return _MEAN[kind]


def _neighbour_index(n: np.ndarray, l: np.ndarray, shift: int) -> np.ndarray:
    """Index of (n + shift, l) among the stored levels, or -1."""
    width = int(n.max()) + 2 if n.size else 1
    key = (l.astype(np.int64) - int(l.min() if l.size else 0)) * width + n.astype(np.int64)
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    target = key + shift
    pos = np.searchsorted(sorted_key, target)
    pos = np.minimum(pos, sorted_key.size - 1)
    found = (sorted_key[pos] == target) & (n + shift >= 0)
    return np.where(found, order[pos], -1)


def transverse_quadratic_form(state: EigState, params: WaveguideParams, symmetrized: bool = False) -> complex:
    """sum c*_{nl} U_{nl,n'l} c_{n'l} over stored levels.

    The printed element carries the row energy; `symmetrized` uses the
    average of the element and its transpose instead.
    """
    c = state.coeffs
    n, l = state.n, state.l
    u_row = row_energy_factor(params, state.eps_nl)
    total = np.sum(np.abs(c) ** 2 * (2 * n + 1) * u_row)
    if c.size == 0:
        return complex(total)
    up = _neighbour_index(n, l, +1)
    has = up >= 0
    i, j = np.flatnonzero(has), up[has]
    # rows (n, l) -> column (n + 1, l): -(n + 1); rows (n + 1, l) -> column (n, l): -(n + 1)
    weight_up = -(n[i] + 1.0)
    if symmetrized:
        u_pair = 0.5 * (u_row[i] + u_row[j])
        total = total + np.sum(weight_up * u_pair * (np.conj(c[i]) * c[j] + np.conj(c[j]) * c[i]))
    else:
        total = total + np.sum(weight_up * (u_row[i] * np.conj(c[i]) * c[j] + u_row[j] * np.conj(c[j]) * c[i]))
    return complex(total)


def expectation(state: EigState, kind, params: WaveguideParams, symmetrized: bool = False,
                fold_tail: bool = False, norm_tol: float = 1e-9) -> float:
    """<alpha|O|alpha> over the stored coefficients of a normalized state.

    With `fold_tail` the stored part is weighted by 1 - norm_defect and the
    missing weight is assigned the integrable mean of the observable.
    """
    kind = ObservableKind.parse(kind)
    _check(kind, params)
    stored = float(np.sum(state.weights))
    if abs(stored - 1.0) > norm_tol:
        raise ValueError(f"state alpha={state.line.alpha} is not normalized (sum |c|^2 = {stored!r})")
    if kind is ObservableKind.TRANSVERSE_FRACTION:
        value = transverse_quadratic_form(state, params, symmetrized).real
    else:
        value = float(np.sum(state.weights * diagonal_values(kind, params, state.n, state.l, state.eps_nl)))
    if fold_tail:
        tau = state.norm_defect
        value = (1.0 - tau) * value + tau * tail_mean(kind, params)
    return float(value)


def expectations(state: EigState, params: WaveguideParams, kinds=None, **kw) -> dict:
    kinds = [k for k in (kinds or ALL_OBSERVABLES) if supports(ObservableKind.parse(k), params)]
    return {ObservableKind.parse(k): expectation(state, k, params, **kw) for k in kinds}


def axial_variance_closed_form(eps_min: float, eps_max: float) -> float:
    """Large-window variance of l over levels between eps_min and eps_max
    (dimensionless form of the density-of-states integral)."""
    if not eps_max > eps_min >= 0:
        raise ValueError("need 0 <= eps_min < eps_max")
    return (eps_max**2.5 - eps_min**2.5) / (5.0 * math.pi**2 * (eps_max**1.5 - eps_min**1.5))


def integrable_baseline(kind, eps_window, params: WaveguideParams,
                        min_levels: int = MIN_BASELINE_LEVELS) -> tuple[float, float]:
    """Mean and variance of <nl|O|nl> over the integrable levels in the window."""
    kind = ObservableKind.parse(kind)
    _check(kind, params)
    lo, hi = float(eps_window[0]), float(eps_window[1])
    table = level_table(params, hi, lo)
    if len(table) < min_levels:
        raise ValueError(f"window [{lo}, {hi}] holds {len(table)} levels, need {min_levels}")
    vals = diagonal_values(kind, params, table.n, table.l, table.eps)
    return float(vals.mean()), float(vals.var())


def calibrate_transverse(params: WaveguideParams, eps_window) -> dict:
    """Check of the dimensionless U element against its integrable mean of
    1/3; the result goes into run manifests."""
    mean, var = integrable_baseline(ObservableKind.TRANSVERSE_FRACTION, eps_window, params)
    return {"window": [float(eps_window[0]), float(eps_window[1])], "mean": mean, "variance": var,
            "target_mean": 1.0 / 3.0, "target_variance": 1.0 / 45.0,
            "element": "(2n+1) lam / (2 lam + 4 eps_nl) on the diagonal"}
