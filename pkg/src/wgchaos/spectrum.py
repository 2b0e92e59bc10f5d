"""Eigenenergies of the perturbed waveguide.

Roots of det M(eps) for the Hermitian secular matrix M = sqrt(v) S sqrt(v) - 1
are located by counting. Between poles every eigenvalue of M decreases with
eps, and crossing a pole (an integrable level cluster of formfactor rank r)
raises the number of positive eigenvalues by r. So the number of roots in an
inter-pole interval is the drop of that positive-eigenvalue count across it,
and the j-th root is the zero of a specific eigenvalue branch, found by Brent's
method. Each pole is probed on both sides to make sure no root hides within
the probe offset.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .greens import GreenFunction, PoleError, ThresholdError, secular_from_green
from .params import Boundary, LevelTable, Model, ScattererSet, WaveguideParams, level_table

SCAN_COUNTER = {"scans": 0}


class CountMismatchError(RuntimeError):
    def __init__(self, message: str, window: tuple[float, float]):
        super().__init__(f"{message} in window [{window[0]!r}, {window[1]!r}]")
        self.window = window


class DegenerateRootError(RuntimeError):
    pass


class CacheIntegrityError(RuntimeError):
    pass


class CacheCollisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    pole_offset: float = 1e-10        # probe distance from a pole, relative to max(1, eps)
    xtol: float = 1e-10               # root tolerance, relative to max(1, eps)
    refinements: int = 4              # probe-offset reductions before giving up
    eps_lo: float | None = None       # scan start; default -lam/2
    cluster_tol: float = 2e-12        # poles closer than this (relative) are one cluster
    rank_tol: float = 1e-9            # singular-value cutoff for cluster formfactor rank
    closed_channels: int | None = None
    chunk_poles: int = 512

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SpectralLine:
    alpha: int
    eps: float
    residual: float
    bracket: tuple[float, float]
    pole_bound: bool = False


@dataclass
class PoleBoundStates:
    """Eigenstates pinned to a degenerate integrable level: combinations of the
    cluster's basis states that vanish on every scatterer."""
    index: np.ndarray          # positions in the spectrum arrays
    n: list[np.ndarray] = field(default_factory=list)
    l: list[np.ndarray] = field(default_factory=list)
    coeffs: list[np.ndarray] = field(default_factory=list)


@dataclass
class Spectrum:
    params: WaveguideParams
    scatterers: ScattererSet
    eps_range: tuple[float, float]
    config_hash: str
    alpha: np.ndarray
    eps: np.ndarray
    residual: np.ndarray
    bracket: np.ndarray
    null_vectors: np.ndarray
    norms: np.ndarray
    pole_bound: np.ndarray
    below: int
    pole_states: PoleBoundStates
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.eps.size)

    @property
    def lines(self) -> list[SpectralLine]:
        return [SpectralLine(int(a), float(e), float(r), (float(b[0]), float(b[1])), bool(p))
                for a, e, r, b, p in zip(self.alpha, self.eps, self.residual, self.bracket, self.pole_bound)]

    def truncate(self, alpha_max: int) -> Spectrum:
        keep = self.alpha <= alpha_max
        idx = np.flatnonzero(keep)
        remap = {int(old): new for new, old in enumerate(idx)}
        ps = self.pole_states
        sel = [k for k, i in enumerate(ps.index) if int(i) in remap]
        pole_states = PoleBoundStates(np.array([remap[int(ps.index[k])] for k in sel], dtype=np.int64),
                                      [ps.n[k] for k in sel], [ps.l[k] for k in sel],
                                      [ps.coeffs[k] for k in sel])
        hi = float(self.eps[idx[-1]]) if idx.size else self.eps_range[0]
        return Spectrum(self.params, self.scatterers, (self.eps_range[0], hi), self.config_hash,
                        self.alpha[keep], self.eps[keep], self.residual[keep], self.bracket[keep],
                        self.null_vectors[keep], self.norms[keep], self.pole_bound[keep], self.below,
                        pole_states, dict(self.meta))


# --------------------------------------------------------------------------
# poles

@dataclass(frozen=True)
class PoleClusters:
    eps: np.ndarray            # cluster energies
    rank: np.ndarray           # formfactor rank (number of eigenvalues that jump)
    size: np.ndarray           # number of integrable levels in the cluster
    start: np.ndarray          # first level of each cluster in `levels`
    levels: LevelTable


def formfactors(params: WaveguideParams, positions: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Basis-state amplitudes on the axis: f_l(z_j), shape (s, len(l))."""
    l = np.asarray(l, dtype=float)
    if params.boundary is Boundary.BOX:
        return math.sqrt(2.0) * np.sin(math.pi * np.outer(positions, l))
    return np.exp(2j * math.pi * np.outer(positions, l))


def pole_clusters(params: WaveguideParams, scatterers: ScattererSet, eps_lo: float, eps_hi: float,
                  config: SolverConfig) -> PoleClusters:
    levels = level_table(params, eps_hi, eps_lo)
    e = levels.eps
    if e.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PoleClusters(np.zeros(0), empty, empty, empty, levels)
    gaps = np.diff(e)
    new = np.concatenate([[True], gaps > config.cluster_tol * np.maximum(1.0, e[1:])])
    start = np.flatnonzero(new)
    size = np.diff(np.append(start, e.size))
    active = scatterers.strengths > 0
    root_v = np.sqrt(scatterers.strengths[active])
    rank = np.zeros(start.size, dtype=np.int64)
    single = size == 1
    rank[single] = 1 if active.any() else 0
    for c in np.flatnonzero(~single):
        sl = slice(start[c], start[c] + size[c])
        block = root_v[:, None] * formfactors(params, scatterers.positions[active], levels.l[sl])
        if block.size:
            sv = np.linalg.svd(block, compute_uv=False)
            rank[c] = int(np.sum(sv > config.rank_tol * max(1.0, sv[0])))
    # single levels with a vanishing formfactor are exact eigenstates as well
    if active.any() and single.any():
        idx = start[single]
        amp = np.abs(root_v[:, None] * formfactors(params, scatterers.positions[active], levels.l[idx]))
        dead = np.max(amp, axis=0) <= config.rank_tol
        rank[np.flatnonzero(single)[dead]] = 0
    energies = np.array([e[a:a + k].mean() for a, k in zip(start, size)]) if (~single).any() else e[start]
    return PoleClusters(energies, rank, size, start, levels)


# --------------------------------------------------------------------------
# evaluation helpers

class _Evaluator:
    """Eigenvalues (descending) of the secular matrix, memoized by energy."""

    def __init__(self, params: WaveguideParams, scatterers: ScattererSet, config: SolverConfig):
        self.green = GreenFunction(params, scatterers.positions, config.closed_channels)
        self.strengths = scatterers.strengths
        self.memo: dict[float, np.ndarray] = {}
        self.calls = 0

    def eigvals(self, eps: float) -> np.ndarray:
        hit = self.memo.get(eps)
        if hit is not None:
            return hit
        self.calls += 1
        M = secular_from_green(self.green.matrix(eps), self.strengths)
        vals = np.linalg.eigvalsh(M)[::-1]
        self.memo[eps] = vals
        return vals

    def positive(self, eps: float) -> int:
        return int(np.sum(self.eigvals(eps) > 0))

    def at_root(self, eps: float):
        S, dS = self.green.matrix(eps, derivative=True)
        M = secular_from_green(S, self.strengths)
        root_v = np.sqrt(self.strengths)
        dM = root_v[:, None] * dS * root_v[None, :]
        vals, vecs = np.linalg.eigh(M)
        slopes = np.einsum("ji,jk,ki->i", vecs.conj(), dM, vecs).real
        return S, dS, vals, vecs, slopes


def _probe(ev: _Evaluator, eps: float, offset: float) -> tuple[float, float, int, int]:
    lo, hi = eps - offset, eps + offset
    return lo, hi, ev.positive(lo), ev.positive(hi)


def _gauge(vec: np.ndarray) -> np.ndarray:
    """Rotate so the first non-negligible component is real positive."""
    big = np.flatnonzero(np.abs(vec) > 1e-8 * np.max(np.abs(vec)))
    if big.size == 0:
        return vec
    ph = vec[big[0]] / abs(vec[big[0]])
    return vec / ph


def _scan_block(params: WaveguideParams, scatterers: ScattererSet, config: SolverConfig,
                breakpoints: np.ndarray, ranks: np.ndarray, is_pole: np.ndarray) -> dict:
    """Roots in the consecutive intervals between the given breakpoints.

    Breakpoints that are poles are probed at +-offset; the others (scan ends)
    are evaluated exactly once.
    """
    ev = _Evaluator(params, scatterers, config)
    s = scatterers.s
    sqrt_lam = math.sqrt(params.lam)
    left_edge = []   # (energy, P) just above each breakpoint
    right_edge = []  # (energy, P) just below each breakpoint
    for b, r, pole in zip(breakpoints, ranks, is_pole):
        if not pole:
            P = ev.positive(float(b))
            left_edge.append((float(b), P))
            right_edge.append((float(b), P))
            continue
        offset = config.pole_offset * max(1.0, abs(b))
        for _ in range(config.refinements + 1):
            lo, hi, p_lo, p_hi = _probe(ev, float(b), offset)
            if p_hi - p_lo == r:
                break
            offset *= 0.1
        else:
            raise CountMismatchError(f"root inseparable from pole at {b!r}", (float(b), float(b)))
        right_edge.append((lo, p_lo))
        left_edge.append((hi, p_hi))

    out = {"eps": [], "residual": [], "bracket": [], "vectors": [], "norms": []}
    for k in range(len(breakpoints) - 1):
        a, p_a = left_edge[k]
        b, p_b = right_edge[k + 1]
        count = p_a - p_b
        if count < 0 or count > s:
            raise CountMismatchError(f"inconsistent count {count}", (a, b))
        lo = a
        for j in range(count):
            branch = p_a - j - 1          # 0-based index in descending order

            def h(x, branch=branch):
                try:
                    return ev.eigvals(x)[branch]
                except ThresholdError:
                    x2 = x * (1 + 4e-12) + 4e-12
                    return ev.eigvals(x2)[branch]

            f_lo, f_hi = h(lo), h(b)
            if not (f_lo >= 0 >= f_hi):
                raise CountMismatchError(f"eigenvalue branch {branch} does not cross zero", (lo, b))
            xtol = config.xtol * max(1.0, abs(a))
            if f_lo == 0:
                root = lo
            else:
                root = brentq(h, lo, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
            S, dS, vals, vecs, slopes = ev.at_root(root)
            if j > 0 and root - lo < 100 * xtol:
                raise DegenerateRootError(f"null space of dimension > 1 at eps={root!r}")
            # rank by energy distance |value / slope|: near strong poles a root within
            # xtol can leave the crossing eigenvalue below a flat one in magnitude
            gap = np.abs(vals) / np.maximum(np.abs(slopes), np.finfo(float).tiny)
            near = int(np.argmin(gap))
            step = vals[near] / slopes[near] if slopes[near] != 0 else 0.0
            refined = root - step if abs(step) < 10 * xtol else root
            if refined != root:
                # close to a level the norm scales like 1/distance^2, so evaluate where eps is stored
                S, dS, vals, vecs, slopes = ev.at_root(refined)
                gap = np.abs(vals) / np.maximum(np.abs(slopes), np.finfo(float).tiny)
                near = int(np.argmin(gap))
            y = _gauge(vecs[:, near])
            bvec = np.sqrt(scatterers.strengths) * y
            norm = float(-(bvec.conj() @ dS @ bvec).real / sqrt_lam)
            out["eps"].append(refined)
            out["residual"].append(abs(step))
            out["bracket"].append((a, b))
            out["vectors"].append(y)
            out["norms"].append(norm)
            lo = root
    out["calls"] = ev.calls
    return out


def _block_job(args):
    return _scan_block(*args)


def _pole_bound_states(params: WaveguideParams, scatterers: ScattererSet, clusters: PoleClusters,
                       config: SolverConfig):
    """(energy, n, l, coefficient-vector) for each state pinned to a cluster."""
    found = []
    active = scatterers.strengths > 0
    for c in np.flatnonzero(clusters.size > clusters.rank):
        sl = slice(clusters.start[c], clusters.start[c] + clusters.size[c])
        n = clusters.levels.n[sl]
        l = clusters.levels.l[sl]
        block = formfactors(params, scatterers.positions[active], l) * \
            np.sqrt(scatterers.strengths[active])[:, None]
        if block.shape[0] == 0:
            basis = np.eye(l.size, dtype=complex)
        else:
            _, sv, vh = np.linalg.svd(block)
            r = int(clusters.rank[c])
            basis = vh[r:].conj().T
        for k in range(basis.shape[1]):
            found.append((float(clusters.eps[c]), n.copy(), l.copy(), _gauge(basis[:, k].astype(complex))))
    return found


def default_eps_lo(params: WaveguideParams, config: SolverConfig) -> float:
    return config.eps_lo if config.eps_lo is not None else -0.5 * params.lam


def scan_roots(params: WaveguideParams, scatterers: ScattererSet, eps_range, grid_factor: float = 0.1,
               config: SolverConfig | None = None, workers: int = 1) -> Spectrum:
    """All eigenenergies in (eps_range[0], eps_range[1]].

    `grid_factor` only matters for the sign-scan cross-check (see
    `det_sign_scan`); it is accepted here so both routes share a config.
    """
    if not 0 < grid_factor <= 0.5:
        raise ValueError("grid_factor must lie in (0, 0.5]")
    config = config or SolverConfig()
    SCAN_COUNTER["scans"] += 1
    eps_lo, eps_hi = float(eps_range[0]), float(eps_range[1])
    clusters = pole_clusters(params, scatterers, eps_lo, eps_hi, config)
    if clusters.eps.size and clusters.eps[-1] >= eps_hi - config.pole_offset * max(1.0, eps_hi) * 100:
        raise ValueError("eps_range upper end must not sit on an integrable level")
    active = scatterers.strengths > 0
    n_pos = int(np.sum(active))

    breakpoints = np.concatenate([[eps_lo], clusters.eps, [eps_hi]])
    ranks = np.concatenate([[0], clusters.rank, [0]])
    is_pole = np.concatenate([[False], np.ones(clusters.eps.size, bool), [False]])
    jobs = []
    step = max(1, config.chunk_poles)
    for start in range(0, breakpoints.size - 1, step):
        stop = min(start + step, breakpoints.size - 1)
        sl = slice(start, stop + 1)
        jobs.append((params, scatterers, config, breakpoints[sl], ranks[sl], is_pole[sl]))

    if n_pos == 0:
        results = [{"eps": [], "residual": [], "bracket": [], "vectors": [], "norms": [], "calls": 0}]
        below = 0
    else:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_block_job, jobs))
        else:
            results = [_block_job(job) for job in jobs]
        below = n_pos - _Evaluator(params, scatterers, config).positive(eps_lo)

    roots = np.array([x for r in results for x in r["eps"]], dtype=float)
    residual = np.array([x for r in results for x in r["residual"]], dtype=float)
    bracket = np.array([x for r in results for x in r["bracket"]], dtype=float).reshape(-1, 2)
    vectors = np.array([x for r in results for x in r["vectors"]], dtype=complex).reshape(-1, scatterers.s)
    norms = np.array([x for r in results for x in r["norms"]], dtype=float)
    flags = np.zeros(roots.size, dtype=bool)

    pinned = _pole_bound_states(params, scatterers, clusters, config)
    if pinned:
        pe = np.array([p[0] for p in pinned])
        roots = np.concatenate([roots, pe])
        residual = np.concatenate([residual, np.zeros(pe.size)])
        bracket = np.concatenate([bracket, np.column_stack([pe, pe])])
        vectors = np.concatenate([vectors, np.zeros((pe.size, scatterers.s), complex)])
        norms = np.concatenate([norms, np.ones(pe.size)])
        flags = np.concatenate([flags, np.ones(pe.size, bool)])
    order = np.argsort(roots, kind="stable")
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    first_pinned = roots.size - len(pinned)
    pole_states = PoleBoundStates(np.array([inverse[first_pinned + k] for k in range(len(pinned))], dtype=np.int64),
                                  [p[1] for p in pinned], [p[2] for p in pinned], [p[3] for p in pinned])
    # ordering of pinned entries follows the sorted spectrum
    if len(pinned):
        o = np.argsort(pole_states.index, kind="stable")
        pole_states = PoleBoundStates(pole_states.index[o], [pole_states.n[i] for i in o],
                                      [pole_states.l[i] for i in o], [pole_states.coeffs[i] for i in o])
    roots = roots[order]
    alpha = below + 1 + np.arange(roots.size)
    spec = Spectrum(params, scatterers, (eps_lo, eps_hi), config_hash(params, scatterers, (eps_lo, eps_hi), config),
                    alpha, roots, residual[order], bracket[order], vectors[order], norms[order], flags[order],
                    below, pole_states,
                    {"evaluations": int(sum(r["calls"] for r in results)), "n_levels": int(clusters.levels.eps.size)})
    return spec


def det_sign_scan(params: WaveguideParams, scatterers: ScattererSet, eps_range, grid_factor: float = 0.1,
                  config: SolverConfig | None = None) -> np.ndarray:
    """Independent root count per inter-pole interval from sign changes of the
    real determinant det M on a grid of step grid_factor x (local minimal
    inter-pole distance). Sign flips at poles are not counted because every
    grid stays strictly inside one interval. Returns the bracket midpoints of
    all detected sign changes."""
    config = config or SolverConfig()
    eps_lo, eps_hi = float(eps_range[0]), float(eps_range[1])
    clusters = pole_clusters(params, scatterers, eps_lo, eps_hi, config)
    green = GreenFunction(params, scatterers.positions, config.closed_channels)
    edges = np.concatenate([[eps_lo], clusters.eps, [eps_hi]])
    gaps = np.diff(edges)
    found = []
    for k in range(edges.size - 1):
        a, b = edges[k], edges[k + 1]
        local = min(gaps[max(k - 1, 0):k + 2])
        steps = max(2, int(math.ceil((b - a) / (grid_factor * local))))
        pad = config.pole_offset * max(1.0, abs(b)) * 10
        grid = np.linspace(a + (pad if k > 0 else 0.0), b - (pad if k < edges.size - 2 else 0.0), steps + 1)
        signs = []
        for x in grid:
            try:
                M = secular_from_green(green.matrix(x), scatterers.strengths)
            except PoleError:
                signs.append(0.0)
                continue
            signs.append(np.sign(np.linalg.det(M).real))
        signs = np.array(signs)
        flips = np.flatnonzero(signs[:-1] * signs[1:] < 0)
        found.extend(0.5 * (grid[flips] + grid[flips + 1]))
    return np.array(found)


# --------------------------------------------------------------------------
# ranges, hashing and cache

def eps_range_for_alpha(params: WaveguideParams, scatterers: ScattererSet, alpha_max: int,
                        config: SolverConfig | None = None) -> tuple[float, float]:
    """A scan range guaranteed to hold states 1..alpha_max: its top sits
    midway between two integrable levels beyond index alpha_max + s."""
    config = config or SolverConfig()
    target = alpha_max + scatterers.s + 8
    guess = max(4.0 * params.lam, (3 * math.pi * params.lam * target / 4) ** (2.0 / 3.0) * 1.2)
    while True:
        table = level_table(params, guess)
        if table.eps.size > target + 2:
            break
        guess *= 1.5
    e = table.eps
    k = target
    while e[k + 1] - e[k] < 1e-6 * max(1.0, e[k]):
        k += 1
    hi = 0.5 * (e[k] + e[k + 1])
    if abs(hi / params.lam - round(hi / params.lam)) * params.lam < 1e-6:
        hi = e[k] + 0.25 * (e[k + 1] - e[k])
    return default_eps_lo(params, config), float(hi)


def _float_list(values) -> list[str]:
    return [float(x).hex() for x in np.asarray(values, dtype=float).ravel()]


def key_material(params: WaveguideParams, scatterers: ScattererSet, eps_range, config: SolverConfig) -> dict:
    return {
        "params": {"lambda": float(params.lam).hex(), "l0": float(params.l0).hex(),
                   "boundary": params.boundary.value},
        "scatterers": {"model": scatterers.model.value, "seed": scatterers.seed,
                       "positions": _float_list(scatterers.positions),
                       "strengths": _float_list(scatterers.strengths),
                       "shifts": _float_list(scatterers.shifts)},
        "eps_range": _float_list(eps_range),
        "solver": config.to_dict(),
        "version": __version__,
    }


def config_hash(params, scatterers, eps_range, config) -> str:
    blob = json.dumps(key_material(params, scatterers, eps_range, config), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload_bytes(spec: Spectrum) -> bytes:
    import io

    ps = spec.pole_states
    sizes = np.array([x.size for x in ps.n], dtype=np.int64)
    buf = io.BytesIO()
    np.savez(buf, alpha=spec.alpha, eps=spec.eps, residual=spec.residual, bracket=spec.bracket,
             null_vectors=spec.null_vectors, norms=spec.norms, pole_bound=spec.pole_bound,
             ps_index=ps.index, ps_sizes=sizes,
             ps_n=np.concatenate(ps.n) if ps.n else np.zeros(0, np.int64),
             ps_l=np.concatenate(ps.l) if ps.l else np.zeros(0, np.int64),
             ps_coeffs=np.concatenate(ps.coeffs) if ps.coeffs else np.zeros(0, complex))
    return buf.getvalue()


def cache_paths(cache_dir, key: str) -> tuple[Path, Path]:
    root = Path(cache_dir)
    return root / f"{key}.npz", root / f"{key}.json"


def cache_put(spec: Spectrum, cache_dir, config: SolverConfig) -> str:
    root = Path(cache_dir)
    root.mkdir(parents=True, exist_ok=True)
    key = spec.config_hash
    payload = _payload_bytes(spec)
    data_path, manifest_path = cache_paths(root, key)
    manifest = {
        "key": key,
        "material": key_material(spec.params, spec.scatterers, spec.eps_range, config),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "count": int(spec.eps.size),
        "below": int(spec.below),
        "eps_range": list(spec.eps_range),
        "seed": spec.scatterers.seed,
        "version": __version__,
        "meta": spec.meta,
    }
    _atomic_write(data_path, payload)
    _atomic_write(manifest_path, json.dumps(manifest, indent=1, sort_keys=True).encode())
    return key


def cache_get(params: WaveguideParams, scatterers: ScattererSet, eps_range, config: SolverConfig,
              cache_dir) -> Spectrum | None:
    key = config_hash(params, scatterers, eps_range, config)
    data_path, manifest_path = cache_paths(cache_dir, key)
    if not manifest_path.exists() or not data_path.exists():
        return None
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as exc:
        raise CacheIntegrityError(f"unreadable manifest {manifest_path}") from exc
    material = key_material(params, scatterers, eps_range, config)
    if json.dumps(manifest.get("material"), sort_keys=True) != json.dumps(material, sort_keys=True):
        raise CacheCollisionError(f"cache key {key} maps to a different configuration")
    payload = data_path.read_bytes()
    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise CacheIntegrityError(f"payload {data_path} does not match its manifest")
    import io

    with np.load(io.BytesIO(payload), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    cuts = np.cumsum(arrays["ps_sizes"])[:-1]
    pole_states = PoleBoundStates(arrays["ps_index"], list(np.split(arrays["ps_n"], cuts)) if arrays["ps_sizes"].size else [],
                                  list(np.split(arrays["ps_l"], cuts)) if arrays["ps_sizes"].size else [],
                                  list(np.split(arrays["ps_coeffs"], cuts)) if arrays["ps_sizes"].size else [])
    return Spectrum(params, scatterers, tuple(float(x) for x in manifest["eps_range"]), key,
                    arrays["alpha"], arrays["eps"], arrays["residual"], arrays["bracket"],
                    arrays["null_vectors"], arrays["norms"], arrays["pole_bound"], int(manifest["below"]),
                    pole_states, dict(manifest.get("meta", {})))


def default_cache_dir() -> Path:
    """Spectrum cache root: $WGCHAOS_CACHE, else ~/.cache/wgchaos."""
    env = os.environ.get("WGCHAOS_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "wgchaos"


def load_or_scan(params: WaveguideParams, scatterers: ScattererSet, alpha_max: int,
                 config: SolverConfig | None = None, cache_dir=None, workers: int = 1) -> Spectrum:
    """Spectrum holding states up to alpha_max, from the cache when possible."""
    config = config or SolverConfig()
    eps_range = eps_range_for_alpha(params, scatterers, alpha_max, config)
    if cache_dir is not None:
        try:
            hit = cache_get(params, scatterers, eps_range, config, cache_dir)
        except CacheIntegrityError:
            hit = None
        if hit is not None:
            hit.meta["cache"] = "hit"
            return hit.truncate(alpha_max)
    spec = scan_roots(params, scatterers, eps_range, config=config, workers=workers)
    if cache_dir is not None:
        cache_put(spec, cache_dir, config)
    spec.meta["cache"] = "miss"
    return spec.truncate(alpha_max)
