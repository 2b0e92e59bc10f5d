"""Chaos diagnostics over a window of eigenstates.

One pass over the states of a window collects per-state partials (IPR,
observable expectations, tail weight, local spacing) and the strength
function sampled at fixed energy offsets. The offset average is literal: for
every state alpha and offset x, the integrable level nearest to
eps_alpha + x * dE_alpha is looked up, dE_alpha being the local level spacing.
Offsets are in units of that spacing throughout.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .eigenstates import DEFAULT_BAND, StateBuilder, local_spacing, transition_overlaps, transition_row_factors
from .observables import (ALL_OBSERVABLES, ObservableKind, expectation, integrable_baseline,
                          supports)
from .params import Boundary, Model, ScattererSet, WaveguideParams, level_table, mean_level_spacing
from .spectrum import Spectrum, formfactors

MIN_WINDOW_STATES = 100
MIN_BIN_SAMPLES = 10
CHUNK_STATES = 2000


def symmetry_factor(model: Model | str) -> int:
    """Fourth-moment factor of the coefficient distribution: 2 for complex
    coefficients, 3 when T or PT symmetry makes them real."""
    return 2 if Model.parse(model) is Model.NONSYM else 3


# --------------------------------------------------------------------------
# per-state pass

@dataclass
class Ensemble:
    """Per-state partials for one window of one spectrum."""
    alpha: np.ndarray
    eps: np.ndarray
    spacing: np.ndarray          # local level spacing around each state
    ipr: np.ndarray              # sum_n |<n|alpha>|^4
    tail: np.ndarray             # weight outside the stored band
    observables: dict            # ObservableKind -> expectation per state
    hist_centers: np.ndarray     # offsets in local spacings
    hist_sum: np.ndarray         # sum over states of the sampled weight at each offset
    hist_count: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.alpha.size)

    @property
    def eps_window(self) -> tuple[float, float]:
        return float(self.eps[0]), float(self.eps[-1])


def offset_grid(bin_width: float = 0.25, max_offset: float = 200.0) -> np.ndarray:
    half = int(round(max_offset / bin_width))
    return bin_width * np.arange(-half, half + 1)


def window_indices(spectrum: Spectrum, alpha_min: int, alpha_max: int) -> np.ndarray:
    idx = np.flatnonzero((spectrum.alpha >= alpha_min) & (spectrum.alpha <= alpha_max))
    if idx.size < MIN_WINDOW_STATES:
        raise ValueError(f"window [{alpha_min}, {alpha_max}] holds {idx.size} states, "
                         f"need {MIN_WINDOW_STATES}")
    return idx


def _nearest_weights(eps_nl: np.ndarray, weights: np.ndarray, targets: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(eps_nl, targets)
    left = np.clip(pos - 1, 0, eps_nl.size - 1)
    right = np.clip(pos, 0, eps_nl.size - 1)
    pick = np.where(np.abs(eps_nl[right] - targets) < np.abs(eps_nl[left] - targets), right, left)
    return weights[pick]


def _chunk_partials(args) -> dict:
    spectrum, indices, band, centers, kinds = args
    builder = StateBuilder(spectrum, band)
    params = spectrum.params
    k = indices.size
    out = {"ipr": np.empty(k), "tail": np.empty(k), "spacing": np.empty(k),
           "obs": {kind: np.empty(k) for kind in kinds},
           "hist": np.zeros(centers.size), "count": np.zeros(centers.size, dtype=np.int64)}
    for j, i in enumerate(indices):
        st = builder.expand(int(i))
        w_abs = st.weights * (1.0 - st.norm_defect)
        out["ipr"][j] = float(np.sum(w_abs**2))
        out["tail"][j] = st.norm_defect
        de = local_spacing(spectrum.eps, int(i))
        out["spacing"][j] = de
        for kind in kinds:
            out["obs"][kind][j] = expectation(st, kind, params, fold_tail=True)
        if st.line.pole_bound:
            # exact integrable levels: all weight at zero offset
            centre = np.argmin(np.abs(centers))
            out["hist"][centre] += float(np.sum(w_abs))
            out["count"] += 1
            continue
        targets = st.line.eps + centers * de
        inside = (targets >= st.band[0]) & (targets <= st.band[1])
        out["hist"][inside] += _nearest_weights(st.eps_nl, w_abs, targets[inside])
        out["count"][inside] += 1
    return out


def collect(spectrum: Spectrum, alpha_min: int = 101, alpha_max: int | None = None,
            band: float = DEFAULT_BAND, bin_width: float = 0.25, max_offset: float = 200.0,
            kinds=None, workers: int = 1) -> Ensemble:
    """Stream the states of a window once. Chunks have a fixed size, so the
    result does not depend on `workers`."""
    alpha_max = int(spectrum.alpha[-1]) if alpha_max is None else int(alpha_max)
    idx = window_indices(spectrum, alpha_min, alpha_max)
    if band < max_offset + 2:
        raise ValueError("band must extend beyond the largest histogram offset")
    params = spectrum.params
    kinds = tuple(ObservableKind.parse(k) for k in (kinds or ALL_OBSERVABLES)
                  if supports(ObservableKind.parse(k), params))
    centers = offset_grid(bin_width, max_offset)
    jobs = [(spectrum, idx[a:a + CHUNK_STATES], band, centers, kinds)
            for a in range(0, idx.size, CHUNK_STATES)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_partials, jobs))
    else:
        parts = [_chunk_partials(job) for job in jobs]
    hist = np.zeros(centers.size)
    count = np.zeros(centers.size, dtype=np.int64)
    for part in parts:          # fixed merge order
        hist += part["hist"]
        count += part["count"]
    return Ensemble(
        alpha=spectrum.alpha[idx].copy(), eps=spectrum.eps[idx].copy(),
        spacing=np.concatenate([p["spacing"] for p in parts]),
        ipr=np.concatenate([p["ipr"] for p in parts]),
        tail=np.concatenate([p["tail"] for p in parts]),
        observables={k: np.concatenate([p["obs"][k] for p in parts]) for k in kinds},
        hist_centers=centers, hist_sum=hist, hist_count=count,
        meta={"band": band, "bin_width": bin_width, "max_offset": max_offset,
              "config_hash": spectrum.config_hash, "model": spectrum.scatterers.model.value,
              "s": spectrum.scatterers.s, "seed": spectrum.scatterers.seed},
    )


# --------------------------------------------------------------------------
# IPR and strength function

def ipr(ens: Ensemble) -> float:
    """Window average of sum_n |<n|alpha>|^4."""
    if len(ens) < MIN_WINDOW_STATES:
        raise ValueError(f"need at least {MIN_WINDOW_STATES} states")
    return float(np.mean(ens.ipr))


@dataclass
class StrengthHistogram:
    centers: np.ndarray      # E_n - E_alpha in local spacings
    bin_width: float
    weights: np.ndarray      # averaged weight per bin; sums to ~1
    counts: np.ndarray
    sparse_bins: np.ndarray  # bins with fewer than MIN_BIN_SAMPLES samples

    @property
    def density(self) -> np.ndarray:
        """W(x): averaged |<n|alpha>|^2 at offset x (per level)."""
        return self.weights / self.bin_width

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))


def strength_histogram(ens: Ensemble) -> StrengthHistogram:
    h = float(ens.meta["bin_width"])
    if h > 0.5:
        raise ValueError("bin width must not exceed half a level spacing")
    with np.errstate(invalid="ignore", divide="ignore"):
        density = np.where(ens.hist_count > 0, ens.hist_sum / np.maximum(ens.hist_count, 1), 0.0)
    return StrengthHistogram(ens.hist_centers.copy(), h, density * h, ens.hist_count.copy(),
                             np.flatnonzero(ens.hist_count < MIN_BIN_SAMPLES))


def lorentzian(x, gamma):
    return gamma / (math.pi * (np.asarray(x) ** 2 + gamma**2))


@dataclass
class LorentzFit:
    gamma: float             # in local level spacings
    residual: float          # rms of weighted residuals relative to the peak
    degenerate: bool
    gamma_from_eta: float | None = None


def gamma_from_eta(eta: float, factor: int) -> float:
    """Width (in level spacings) implied by eta = factor / (2 pi Gamma)."""
    return factor / (2.0 * math.pi * eta)


def fit_lorentzian(hist: StrengthHistogram, eta: float | None = None, factor: int = 2,
                   min_bins: int = 10) -> LorentzFit:
    """Least-squares fit of W_L(x, Gamma) to W(x), weighted by the per-bin sample counts."""
    populated = hist.weights > 0
    fallback = gamma_from_eta(eta, factor) if eta else None
    peak_share = float(np.max(hist.weights) / max(hist.total, 1e-300))
    if populated.sum() < min_bins or peak_share > 0.99:
        if fallback is None:
            raise ValueError("degenerate histogram and no eta to fall back on")
        return LorentzFit(fallback, float("nan"), True, fallback)
    x = hist.centers
    y = hist.density
    sw = np.sqrt(hist.counts / max(hist.counts.max(), 1))
    top = float(np.max(y))

    def resid(theta):
        return sw * (lorentzian(x, math.exp(theta[0])) - y) / top

    guess = fallback if fallback else 1.0 / (math.pi * max(top, 1e-12))
    sol = least_squares(resid, [math.log(max(guess, 1e-3))], method="lm")
    gamma = float(math.exp(sol.x[0]))
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return LorentzFit(gamma, rms, False, fallback)


def tail_slope(hist: StrengthHistogram, decade: tuple[float, float] | None = None) -> float:
    """log-log slope of W(|x|) (both sides averaged) over the outermost decade."""
    x = hist.centers
    hi = float(np.max(np.abs(x)))
    lo_edge, hi_edge = decade or (hi / 10.0, hi)
    mags = np.abs(x)
    sel = (mags >= lo_edge) & (mags <= hi_edge) & (hist.weights > 0)
    pos = sel & (x > 0)
    neg = sel & (x < 0)
    # average the two sides at equal |x|
    xp, yp = mags[pos], hist.density[pos]
    yn = np.interp(xp, mags[neg][::-1], hist.density[neg][::-1])
    y = 0.5 * (yp + yn)
    keep = y > 0
    slope, _ = np.polyfit(np.log(xp[keep]), np.log(y[keep]), 1)
    return float(slope)


def ipr_from_histogram(hist: StrengthHistogram, factor: int) -> float:
    """eta ~ factor * sum_n <|<n|alpha>|^2>^2, with the level sum as an integral over offsets."""
    return float(factor * np.sum(hist.density**2) * hist.bin_width)


# --------------------------------------------------------------------------
# fluctuations of expectation values

def variance_ratio(ens: Ensemble, kind, params: WaveguideParams) -> float:
    """Var over window states of <alpha|O|alpha> divided by the integrable
    variance over the same energy window."""
    kind = ObservableKind.parse(kind)
    values = ens.observables[kind]
    _, base = integrable_baseline(kind, ens.eps_window, params, min_levels=MIN_WINDOW_STATES)
    if base <= 0:
        raise ValueError(f"zero integrable variance for {kind.value}")
    return float(np.var(values) / base)


# --------------------------------------------------------------------------
# independence of two perturbations

def _mc_levels(params: WaveguideParams, eps_window, min_levels: int):
    table = level_table(params, float(eps_window[1]), float(eps_window[0]))
    if len(table) < min_levels:
        raise ValueError(f"window holds {len(table)} levels, need {min_levels}")
    return table


def independence_ratio(scatterers: ScattererSet, params: WaveguideParams, eps_window,
                       method: str = "factorized", min_levels: int = 1000) -> float:
    """Cross term of the last perturbation with each earlier one, relative to
    the sum of the diagonal terms, maximized over the earlier ones.

    With <nl|V_j|n'l'> = v_j f_l(z_j)* f_l'(z_j), the double sum over levels
    of the window factorizes into |sum_nl f_l(z_a)* f_l(z_b)|^2; the "direct"
    method evaluates the double sum literally.
    """
    if scatterers.s < 2:
        raise ValueError("need at least two scatterers")
    table = _mc_levels(params, eps_window, min_levels)
    F = formfactors(params, scatterers.positions, table.l)      # (s, levels)
    v = scatterers.strengths
    if method == "factorized":
        gram = F.conj() @ F.T                                   # sum_nl f(z_a)* f(z_b)
        cross = v[-1] * v[:-1] * np.abs(gram[-1, :-1]) ** 2
        diag = np.sum(v**2 * np.abs(np.diag(gram)) ** 2)
    elif method == "direct":
        def element(j):
            return v[j] * np.outer(F[j].conj(), F[j])           # <nl|V_j|n'l'>
        last = element(scatterers.s - 1)
        cross = np.array([abs(np.sum(last * element(j).T)) for j in range(scatterers.s - 1)])
        diag = sum(float(np.sum(np.abs(element(j)) ** 2)) for j in range(scatterers.s))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.max(cross) / diag)


# --------------------------------------------------------------------------
# strength-function relation between s - 1 and s scatterers

@dataclass
class Eq2Result:
    l1: float
    direct: np.ndarray
    convolved: np.ndarray
    centers: np.ndarray
    transfer: np.ndarray        # averaged |<beta|alpha>|^2 against offset


def _transfer_histogram(prev: Spectrum, nxt: Spectrum, idx: np.ndarray, centers: np.ndarray,
                        reach: int) -> np.ndarray:
    """Average of |<beta_{s-1}|alpha_s>|^2 binned at the offsets (E_beta - E_alpha)
    in local spacings of alpha; bin weights, summing to about one."""
    out = np.zeros(centers.size)
    width = float(centers[1] - centers[0])
    zero = int(np.argmin(np.abs(centers)))
    if nxt.scatterers.strengths[-1] == 0:
        out[zero] = 1.0
        return out
    h = transition_row_factors(prev, nxt)
    for i in idx:
        e = nxt.eps[i]
        j0 = int(np.searchsorted(prev.eps, e))
        rows = np.arange(max(j0 - reach, 0), min(j0 + reach, len(prev)))
        P = np.abs(transition_overlaps(prev, nxt, rows, [i], row_factors=h[rows])[:, 0]) ** 2
        de = local_spacing(nxt.eps, int(i))
        k = zero + np.rint((prev.eps[rows] - e) / de / width).astype(np.int64)
        ok = (k >= 0) & (k < centers.size)
        np.add.at(out, k[ok], P[ok])
    return out / idx.size


def eq2_consistency(prev: Spectrum, nxt: Spectrum, ens_prev: Ensemble, ens_next: Ensemble,
                    reach: int = 400) -> Eq2Result:
    """L1 distance between W_s measured directly and W_s obtained by
    convolving W_{s-1} with the averaged |<alpha_{s-1}|alpha_s>|^2."""
    if not (abs(ens_prev.eps_window[0] - ens_next.eps_window[0]) < 0.05 * ens_next.eps_window[0] + 50
            and abs(ens_prev.eps_window[1] - ens_next.eps_window[1]) < 0.05 * ens_next.eps_window[1]):
        raise ValueError("windows of the two ensembles are misaligned")
    h_prev = strength_histogram(ens_prev)
    h_next = strength_histogram(ens_next)
    centers = h_next.centers
    idx = np.flatnonzero(np.isin(nxt.alpha, ens_next.alpha))
    transfer = _transfer_histogram(prev, nxt, idx, centers, reach)
    w_prev = h_prev.density
    # W_conv(x) = sum_beta P_beta W_{s-1}(x - y_beta), with y_beta rounded to the bin grid
    full = np.convolve(transfer, w_prev)
    mid = (full.size - centers.size) // 2
    conv = full[mid:mid + centers.size]
    direct = h_next.density
    l1 = float(np.sum(np.abs(direct - conv)) * h_next.bin_width)
    return Eq2Result(l1, direct, conv, centers, transfer)


# --------------------------------------------------------------------------
# report

@dataclass
class MetricsReport:
    model: str
    s: int
    v: float
    seed: int | None
    alpha_window: tuple[int, int]
    eps_window: tuple[float, float]
    states: int
    eta: float
    npc: float
    gamma: float              # fitted width, absolute energy units
    gamma_spacings: float     # fitted width in local level spacings
    gamma_from_eta: float     # width implied by eta, in local level spacings
    fit_residual: float
    fit_degenerate: bool
    delta_e: float            # mean integrable level spacing over the window
    closure: float            # eta * 2 pi Gamma / dE
    tail_slope: float
    eta_histogram: float
    var_ratio: dict
    mean_tail_weight: float
    sparse_bins: int
    provenance: dict = field(default_factory=dict)
    subwindows: list = field(default_factory=list)   # eta and variance ratios on consecutive parts

    def to_dict(self) -> dict:
        out = asdict(self)
        out["var_ratio"] = {ObservableKind.parse(k).value: float(v) for k, v in self.var_ratio.items()}
        return out


def subwindow_summary(ens: Ensemble, params: WaveguideParams, parts: int = 2) -> list[dict]:
    """eta and variance ratios on `parts` consecutive slices of the state window.

    Slices too small for an integrable baseline get NaN ratios."""
    out = []
    for idx in np.array_split(np.arange(len(ens)), parts):
        if idx.size == 0:
            continue
        part = Ensemble(ens.alpha[idx], ens.eps[idx], ens.spacing[idx], ens.ipr[idx], ens.tail[idx],
                        {k: v[idx] for k, v in ens.observables.items()}, ens.hist_centers,
                        ens.hist_sum, ens.hist_count, ens.meta)
        ratios = {}
        for kind in part.observables:
            try:
                ratios[kind.value] = variance_ratio(part, kind, params)
            except ValueError:
                ratios[kind.value] = float("nan")
        out.append({"alpha_window": [int(part.alpha[0]), int(part.alpha[-1])], "eta": ipr(part),
                    "var_ratio": ratios})
    return out


def report(ens: Ensemble, spectrum: Spectrum) -> MetricsReport:
    params = spectrum.params
    scat = spectrum.scatterers
    factor = symmetry_factor(scat.model)
    eta = ipr(ens)
    hist = strength_histogram(ens)
    fit = fit_lorentzian(hist, eta, factor)
    lo, hi = ens.eps_window
    try:
        delta_e = mean_level_spacing(params, (lo, hi))
    except ValueError:
        delta_e = float(np.mean(ens.spacing))
    ratios = {}
    for kind in ens.observables:
        try:
            ratios[kind] = variance_ratio(ens, kind, params)
        except ValueError:
            ratios[kind] = float("nan")
    v = float(scat.strengths.max()) if scat.s else 0.0
    return MetricsReport(
        model=scat.model.value, s=scat.s, v=v, seed=scat.seed,
        alpha_window=(int(ens.alpha[0]), int(ens.alpha[-1])), eps_window=(lo, hi), states=len(ens),
        eta=eta, npc=1.0 / eta, gamma=fit.gamma * float(np.mean(ens.spacing)), gamma_spacings=fit.gamma,
        gamma_from_eta=gamma_from_eta(eta, factor), fit_residual=fit.residual, fit_degenerate=fit.degenerate,
        delta_e=delta_e, closure=eta * 2.0 * math.pi * fit.gamma,
        tail_slope=tail_slope(hist) if not fit.degenerate else float("nan"),
        eta_histogram=ipr_from_histogram(hist, factor), var_ratio=ratios,
        mean_tail_weight=float(np.mean(ens.tail)), sparse_bins=int(hist.sparse_bins.size),
        provenance={"config_hash": spectrum.config_hash, "band": ens.meta["band"],
                    "bin_width": ens.meta["bin_width"], "max_offset": ens.meta["max_offset"],
                    "boundary": params.boundary.value, "lambda": params.lam, "l0": params.l0},
        subwindows=subwindow_summary(ens, params) if len(ens) >= 2 * MIN_WINDOW_STATES else [],
    )
