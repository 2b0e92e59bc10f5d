"""Eigenstates in the integrable basis.

A root of the secular matrix comes with a null vector y of M = D S D - 1,
D = diag(sqrt(v)). With b = D y the expansion coefficients are

    <nl|alpha> = g(l) / (eps_alpha - eps_nl) / sqrt(N),   g(l) = sum_j f_l(z_j)* b_j,

and the norm N = -b^+ S'(eps_alpha) b / sqrt(lam) is known in closed form, so
every coefficient is absolutely normalized without summing the (slowly
converging) series. Only levels inside an energy band around the root are
materialized; the weight outside the band is reported as `norm_defect`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .greens import GreenFunction, SecularMatrix
from .params import Boundary, LevelTable, ScattererSet, WaveguideParams, level_table
from .spectrum import SpectralLine, Spectrum, formfactors

MIN_DENOMINATOR = 1e-9
DEFAULT_BAND = 1000.0      # half-width of the materialized band, in local level spacings
SPACING_HALF = 100         # states on each side used for the local spacing


class NullSpaceError(ArithmeticError):
    """The secular matrix is not singular, or its null space is not one-dimensional."""


class RootTooCloseError(ArithmeticError):
    """A root lies within MIN_DENOMINATOR of an integrable level; refine the root."""


@dataclass
class EigState:
    line: SpectralLine
    overlaps: np.ndarray        # <F_j|alpha>, zero for switched-off scatterers
    n: np.ndarray
    l: np.ndarray
    eps_nl: np.ndarray
    coeffs: np.ndarray          # normalized over the stored set
    norm_defect: float          # weight outside the stored set
    band: tuple[float, float]
    meta: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2

    @property
    def n_max(self) -> int:
        return int(self.n.max()) if self.n.size else -1

    def l_bounds(self) -> dict[int, tuple[int, int]]:
        """Smallest and largest stored l for each stored n."""
        out: dict[int, tuple[int, int]] = {}
        for n in np.unique(self.n):
            ls = self.l[self.n == n]
            out[int(n)] = (int(ls.min()), int(ls.max()))
        return out

    def coefficient_map(self) -> dict[tuple[int, int], complex]:
        return {(int(a), int(b)): complex(c) for a, b, c in zip(self.n, self.l, self.coeffs)}

    def absolute_coeffs(self) -> np.ndarray:
        """Coefficients before the rescale to unit stored weight."""
        return self.coeffs * math.sqrt(max(0.0, 1.0 - self.norm_defect))


# --------------------------------------------------------------------------
# null space

def solve_overlaps(sec: SecularMatrix, singular_tol: float = 1e-8,
                   degeneracy_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Null vector of the symmetrized secular matrix at a root.

    Returns (overlaps, y): y is the unit null vector of sqrt(v) S sqrt(v) - 1
    and overlaps = y / sqrt(v) is the solution of the unsymmetrized system,
    both with the first significant component real positive.
    """
    vals, vecs = np.linalg.eigh(sec.entries)
    if sec.derivative is not None:
        # distance to the root in energy; near strong poles a root that is exact
        # in energy still leaves an eigenvalue of order one
        slopes = np.abs(np.einsum("ji,jk,ki->i", vecs.conj(), sec.derivative, vecs).real)
        gap = np.abs(vals) / np.maximum(slopes, np.finfo(float).tiny)
        scale = max(1.0, abs(sec.eps))
    else:
        gap = np.abs(vals)
        scale = max(1.0, float(np.max(np.abs(vals))))
    order = np.argsort(gap)
    if gap[order[0]] >= singular_tol * scale:
        raise NullSpaceError(f"no null direction: {gap[order[0]]:.3e} "
                             f"is not below {singular_tol:g} x {scale:.3e}")
    # a branch diverging at a nearby level also has a small |value / slope|, but a large |value|
    if (vals.size > 1 and gap[order[1]] < degeneracy_tol * scale
            and abs(vals[order[1]]) <= max(10 * abs(vals[order[0]]), singular_tol * float(np.max(np.abs(vals))))):
        raise NullSpaceError(f"null space of dimension > 1 at eps={sec.eps!r}")
    y = _gauge(vecs[:, order[0]])
    strengths = np.ones(y.size) if sec.strengths is None else np.asarray(sec.strengths, float)
    overlaps = np.zeros_like(y)
    on = strengths > 0
    overlaps[on] = y[on] / np.sqrt(strengths[on])
    return overlaps, y


def _gauge(vec: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(vec) > 1e-8 * np.max(np.abs(vec)))
    if big.size == 0:
        return vec
    return vec * (abs(vec[big[0]]) / vec[big[0]])


def analytic_norm(y: np.ndarray, dM: np.ndarray, lam: float) -> float:
    """N = -y^+ (dM/deps) y / sqrt(lam), the full basis-sum weight of b = sqrt(v) y."""
    return float(-(y.conj() @ dM @ y).real / math.sqrt(lam))


# --------------------------------------------------------------------------
# expansion

def local_spacing(energies: np.ndarray, index: int, half: int = SPACING_HALF) -> float:
    """Mean spacing of the sorted energies around position `index`."""
    e = np.asarray(energies)
    if e.size < 3:
        raise ValueError("need at least three energies")
    half = min(half, (e.size - 1) // 2)
    lo = min(max(index - half, 0), e.size - 1 - 2 * half)
    return float((e[lo + 2 * half] - e[lo]) / (2 * half))


def axial_amplitudes(params: WaveguideParams, scatterers: ScattererSet, b: np.ndarray,
                     l: np.ndarray) -> np.ndarray:
    """g(l) = sum_j f_l(z_j)* b_j for each requested l."""
    F = formfactors(params, scatterers.positions, np.asarray(l))
    return F.conj().T @ b


class StateBuilder:
    """Expands the states of one spectrum. Holds a level table that covers the
    highest band, so repeated expansions only slice it."""

    def __init__(self, spectrum: Spectrum, band: float = DEFAULT_BAND, levels: LevelTable | None = None):
        self.spectrum = spectrum
        self.band = float(band)
        self.params = spectrum.params
        self.scat = spectrum.scatterers
        self.root_v = np.sqrt(self.scat.strengths)
        if levels is None:
            top = float(spectrum.eps[-1]) if len(spectrum) else 0.0
            span = self.band * self._spacing(len(spectrum) - 1) if len(spectrum) > 2 else 0.0
            self._covered = top + span + 1.0
            levels = level_table(self.params, self._covered)
        else:
            self._covered = float(levels.eps[-1]) if levels.eps.size else -np.inf
        self.levels = levels
        self._pinned = {int(i): k for k, i in enumerate(spectrum.pole_states.index)}

    def _spacing(self, index: int) -> float:
        return local_spacing(self.spectrum.eps, index)

    def halfwidth(self, index: int) -> float:
        return self.band * self._spacing(index)

    def expand(self, index: int) -> EigState:
        spec = self.spectrum
        line = SpectralLine(int(spec.alpha[index]), float(spec.eps[index]), float(spec.residual[index]),
                            (float(spec.bracket[index][0]), float(spec.bracket[index][1])),
                            bool(spec.pole_bound[index]))
        eps = line.eps
        if index in self._pinned:
            k = self._pinned[index]
            ps = spec.pole_states
            eps_nl = np.full(ps.n[k].size, eps)
            return EigState(line, np.zeros(self.scat.s, complex), ps.n[k].copy(), ps.l[k].copy(), eps_nl,
                            ps.coeffs[k].astype(complex), 0.0, (eps, eps), {"pinned": True})
        y = spec.null_vectors[index]
        norm = float(spec.norms[index])
        if not norm > 0:
            raise ValueError(f"state {line.alpha} has a non-positive norm {norm}")
        width = self.halfwidth(index)
        top = eps + width
        if top > self._covered:
            self._covered = top + width
            self.levels = level_table(self.params, self._covered)
        win = self.levels.window(eps - width, top)
        delta = eps - win.eps
        if delta.size and np.min(np.abs(delta)) < MIN_DENOMINATOR:
            raise RootTooCloseError(f"eps={eps!r} within {MIN_DENOMINATOR:g} of an integrable level")
        b = self.root_v * y
        ul, inv = np.unique(win.l, return_inverse=True)
        g = axial_amplitudes(self.params, self.scat, b, ul)[inv]
        c = g / delta / math.sqrt(norm)
        stored = float(np.sum(np.abs(c) ** 2))
        defect = 1.0 - stored
        if defect < -1e-6:
            raise ValueError(f"stored weight {stored!r} exceeds one: inconsistent norm for alpha={line.alpha}")
        c = c / math.sqrt(stored) if stored > 0 else c
        overlaps = np.zeros(self.scat.s, complex)
        on = self.scat.strengths > 0
        overlaps[on] = y[on] / self.root_v[on] / math.sqrt(norm)
        return EigState(line, overlaps, win.n.copy(), win.l.copy(), win.eps.copy(), c, max(defect, 0.0),
                        (eps - width, top), {"norm": norm, "halfwidth": width})

    def __iter__(self):
        for i in range(len(self.spectrum)):
            yield self.expand(i)


def expand_state(spectrum: Spectrum, index: int, band: float = DEFAULT_BAND, tol: float | None = None,
                 max_band: float = 64000.0) -> EigState:
    """One eigenstate. With `tol`, the band doubles until the weight outside it
    drops below tol or the band reaches `max_band` level spacings; the state's
    meta records whether the target was met."""
    builder = StateBuilder(spectrum, band)
    state = builder.expand(index)
    if tol is None:
        return state
    if not 0 < tol <= 1e-4:
        raise ValueError("tol must lie in (0, 1e-4]")
    while state.norm_defect > tol and builder.band < max_band:
        builder = StateBuilder(spectrum, 2 * builder.band)
        state = builder.expand(index)
    state.meta["tol"] = tol
    state.meta["converged"] = bool(state.norm_defect <= tol)
    return state


def state_overlap(a: EigState, b: EigState) -> complex:
    """<a|b> from the stored coefficient lists."""
    ka = {(int(n), int(l)): c for n, l, c in zip(a.n, a.l, a.absolute_coeffs())}
    total = 0j
    for n, l, c in zip(b.n, b.l, b.absolute_coeffs()):
        hit = ka.get((int(n), int(l)))
        if hit is not None:
            total += np.conj(hit) * c
    return complex(total)


# --------------------------------------------------------------------------
# overlaps between a model and the same model with one more scatterer

def _check_transition_pair(prev: Spectrum, nxt: Spectrum) -> None:
    sp, sn = prev.scatterers, nxt.scatterers
    if sp.s != sn.s - 1 or not np.array_equal(sp.positions, sn.positions[:-1]) \
            or not np.array_equal(sp.strengths, sn.strengths[:-1]) or prev.params != nxt.params:
        raise ValueError("spectra must share H0 and the first s-1 scatterers")
    if prev.pole_bound.any() or nxt.pole_bound.any():
        raise ValueError("closed form does not cover states pinned to integrable levels")


def transition_row_factors(prev: Spectrum, nxt: Spectrum, rows=None) -> np.ndarray:
    """h_beta = sum_{k<s} b^beta_k* S(z_k, z_s; eps_beta) for the given states of `prev`."""
    _check_transition_pair(prev, nxt)
    sp, s = prev.scatterers, nxt.scatterers.s
    rows = np.arange(len(prev)) if rows is None else np.asarray(rows)
    green = GreenFunction(nxt.params, nxt.scatterers.positions)
    bp = prev.null_vectors[rows] * np.sqrt(sp.strengths)[None, :]
    h = np.empty(rows.size, complex)
    for k, i in enumerate(rows):
        S = green.matrix(float(prev.eps[i]))
        h[k] = bp[k].conj() @ S[:s - 1, s - 1]
    return h


def transition_overlaps(prev: Spectrum, nxt: Spectrum, rows=None, cols=None, row_factors=None) -> np.ndarray:
    """<beta_{s-1}|alpha_s> for states of two spectra that share H0 and the
    first s-1 scatterers, in closed form.

    Writing b for sqrt(v) times the null vector and N for the norm, the basis
    sum telescopes to

        <beta|alpha> = h_beta b^alpha_s / (sqrt(lam) (eps_alpha - eps_beta) sqrt(N_alpha N_beta)),
        h_beta = sum_{k<s} b^beta_k* S(z_k, z_s; eps_beta),

    so each beta needs a single Green-function column. Pass `row_factors`
    (from transition_row_factors for the same rows) to reuse them.
    """
    rows = np.arange(len(prev)) if rows is None else np.asarray(rows)
    cols = np.arange(len(nxt)) if cols is None else np.asarray(cols)
    if row_factors is None:
        h = transition_row_factors(prev, nxt, rows)
    else:
        _check_transition_pair(prev, nxt)
        h = np.asarray(row_factors)
        if h.shape != rows.shape:
            raise ValueError("row_factors must match rows")
    sn = nxt.scatterers
    s = sn.s
    ba = nxt.null_vectors[cols, s - 1] * math.sqrt(sn.strengths[s - 1])
    denom = math.sqrt(prev.params.lam) * (nxt.eps[cols][None, :] - prev.eps[rows][:, None])
    return (h[:, None] * ba[None, :]) / denom \
        / np.sqrt(prev.norms[rows][:, None] * nxt.norms[cols][None, :])


# --------------------------------------------------------------------------
# checks and output

def level_weight_sum(spectrum: Spectrum, n: int, l: int) -> float:
    """sum_alpha |<nl|alpha>|^2 over the states of the spectrum."""
    params = spectrum.params
    scat = spectrum.scatterers
    eps_nl = float(params.lam * n + (0.25 * math.pi**2 * l**2 if params.boundary is Boundary.BOX
                                     else math.pi**2 * (l - params.l0) ** 2))
    regular = ~spectrum.pole_bound
    b = spectrum.null_vectors[regular] * np.sqrt(scat.strengths)[None, :]
    f = formfactors(params, scat.positions, np.array([l]))[:, 0]
    g = b @ f.conj()
    total = float(np.sum(np.abs(g) ** 2 / (spectrum.eps[regular] - eps_nl) ** 2 / spectrum.norms[regular]))
    ps = spectrum.pole_states
    for nn, ll, cc in zip(ps.n, ps.l, ps.coeffs):
        hit = (nn == n) & (ll == l)
        total += float(np.sum(np.abs(cc[hit]) ** 2))
    return total


def dump_states(states, path, threshold: float = 1e-8) -> None:
    """CSV rows (alpha, n, l, re, im) for weights above `threshold`, plus a
    JSON sidecar with each state's band and tail weight."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    side = []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "n", "l", "re", "im"])
        for st in states:
            keep = st.weights > threshold
            for n, l, c in zip(st.n[keep], st.l[keep], st.coeffs[keep]):
                w.writerow([st.line.alpha, int(n), int(l), repr(float(c.real)), repr(float(c.imag))])
            side.append({"alpha": st.line.alpha, "eps": st.line.eps, "band": list(st.band),
                         "n_max": st.n_max, "norm_defect": st.norm_defect, "stored": int(st.n.size),
                         "written": int(keep.sum())})
    path.with_suffix(".json").write_text(json.dumps({"threshold": threshold, "states": side}, indent=1))
