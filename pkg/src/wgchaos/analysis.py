"""Parameter sweeps, the NPC-versus-s fit, and figure tables.

Sweep points are (model, s, v) triples. Spectra come from the spectrum cache;
per-state partials (the expensive part of the metrics) are cached next to
them, keyed by the spectrum hash and the metric settings.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from . import __version__
from .metrics import Ensemble, MetricsReport, collect, report
from .observables import ALL_OBSERVABLES, ObservableKind, calibrate_transverse
from .params import DEFAULT_L0, DEFAULT_LAMBDA, Model, generate_scatterers, params_for_model, sweep_seed
from .spectrum import (CountMismatchError, DegenerateRootError, SolverConfig, Spectrum, _atomic_write,
                       default_cache_dir, load_or_scan)

DEFAULT_S_LIST = (4, 8, 16, 24, 32)
DEFAULT_V_LIST = (1e6, 1e-1, 1e-2, 2e-3, 1e-3, 1e-4, 0.0)


@dataclass
class SweepSettings:
    alpha_max: int = 50000
    alpha_min: int = 101
    lam: float = DEFAULT_LAMBDA
    l0: float = DEFAULT_L0
    band: float = 1000.0
    bin_width: float = 0.25
    max_offset: float = 200.0
    seed_base: int = 1000
    workers: int = 1
    cache_dir: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def cache_root(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else default_cache_dir()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cache_dir"] = str(self.cache_root())
        return out


@dataclass
class SweepFailure:
    model: str
    s: int
    v: float
    error: str
    detail: str


# --------------------------------------------------------------------------
# spectra and ensembles

def sweep_spectrum(model, s: int, v: float, settings: SweepSettings, alpha_max: int | None = None) -> Spectrum:
    params = params_for_model(model, settings.lam, settings.l0)
    scat = generate_scatterers(model, s, v, sweep_seed(s, settings.seed_base))
    return load_or_scan(params, scat, alpha_max or settings.alpha_max, settings.solver,
                        settings.cache_root(), settings.workers)


def _ensemble_key(spectrum: Spectrum, settings: SweepSettings, alpha_max: int) -> str:
    material = {"spectrum": spectrum.config_hash, "alpha": [settings.alpha_min, alpha_max],
                "band": settings.band, "bin_width": settings.bin_width,
                "max_offset": settings.max_offset, "version": __version__}
    return hashlib.sha256(json.dumps(material, sort_keys=True).encode()).hexdigest()[:32]


def _save_ensemble(ens: Ensemble, path: Path) -> None:
    buf = io.BytesIO()
    obs = {f"obs_{k.value}": v for k, v in ens.observables.items()}
    np.savez(buf, alpha=ens.alpha, eps=ens.eps, spacing=ens.spacing, ipr=ens.ipr, tail=ens.tail,
             hist_centers=ens.hist_centers, hist_sum=ens.hist_sum, hist_count=ens.hist_count, **obs)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, buf.getvalue())
    _atomic_write(path.with_suffix(".json"), json.dumps(ens.meta, sort_keys=True).encode())


def _load_ensemble(path: Path) -> Ensemble | None:
    meta_path = path.with_suffix(".json")
    if not path.exists() or not meta_path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(meta_path.read_text())
    except (OSError, ValueError):
        return None
    obs = {ObservableKind(k[4:]): v for k, v in arrays.items() if k.startswith("obs_")}
    return Ensemble(arrays["alpha"], arrays["eps"], arrays["spacing"], arrays["ipr"], arrays["tail"], obs,
                    arrays["hist_centers"], arrays["hist_sum"], arrays["hist_count"], meta)


def ensemble_for(spectrum: Spectrum, settings: SweepSettings, alpha_max: int | None = None) -> Ensemble:
    alpha_max = int(alpha_max or settings.alpha_max)
    path = settings.cache_root() / "ensembles" / f"{_ensemble_key(spectrum, settings, alpha_max)}.npz"
    hit = _load_ensemble(path)
    if hit is not None:
        return hit
    ens = collect(spectrum, settings.alpha_min, alpha_max, settings.band, settings.bin_width,
                  settings.max_offset, workers=settings.workers)
    _save_ensemble(ens, path)
    return ens


def metrics_point(model, s: int, v: float, settings: SweepSettings,
                  alpha_max: int | None = None) -> MetricsReport:
    spec = sweep_spectrum(model, s, v, settings, alpha_max)
    ens = ensemble_for(spec, settings, alpha_max)
    rep = report(ens, spec)
    rep.provenance.update({"alpha_max": int(alpha_max or settings.alpha_max),
                           "seed_policy": f"seed = {settings.seed_base} + s",
                           "cache": spec.meta.get("cache")})
    return rep


def _run_points(points, settings: SweepSettings):
    reports, failures = [], []
    for model, s, v in points:
        try:
            reports.append(metrics_point(model, s, v, settings))
        except (CountMismatchError, DegenerateRootError) as exc:
            failures.append(SweepFailure(Model.parse(model).value, s, v, type(exc).__name__, str(exc)))
    return reports, failures


def sweep_scatterers(model, s_list, v: float, settings: SweepSettings):
    """One report per s (identical windows); failed points are returned separately."""
    points = [(model, int(s), float(v)) for s in sorted(s_list)]
    return _run_points(points, settings)


def sweep_strength(model, s: int, v_list, settings: SweepSettings):
    points = [(model, int(s), float(v)) for v in v_list]
    return _run_points(points, settings)


# --------------------------------------------------------------------------
# NPC fit

@dataclass
class NpcFit:
    model: str
    s: list
    npc: list
    nu: float
    intercept: float          # NPC extrapolated to s = 0
    eta2: float               # 1 / NPC(2) on the fitted line
    r2: float
    residuals: list
    nu_ci: tuple[float, float]
    confidence: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit_npc(s_values, npc_values, model: str = "", confidence: float = 0.95) -> NpcFit:
    """Unweighted least-squares line NPC = eta2^-1 + (s - 2) nu over s >= 2."""
    from scipy import stats

    s = np.asarray(s_values, dtype=float)
    y = np.asarray(npc_values, dtype=float)
    keep = s >= 2
    s, y = s[keep], y[keep]
    if s.size < 3:
        raise ValueError("need at least three points with s >= 2")
    res = stats.linregress(s, y)
    fitted = res.intercept + res.slope * s
    resid = y - fitted
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    dof = s.size - 2
    if dof > 0 and np.isfinite(res.stderr):
        t = stats.t.ppf(0.5 + confidence / 2, dof)
        ci = (float(res.slope - t * res.stderr), float(res.slope + t * res.stderr))
    else:
        ci = (float(res.slope), float(res.slope))
    at2 = res.intercept + 2 * res.slope
    return NpcFit(model, [int(v) if float(v).is_integer() else float(v) for v in s], y.tolist(),
                  float(res.slope), float(res.intercept), float(1.0 / at2) if at2 != 0 else float("nan"),
                  float(r2), resid.tolist(), ci, confidence)


# --------------------------------------------------------------------------
# tables, figures, manifests

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    _atomic_write(path, buf.getvalue().encode())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def fig2a_rows(reports, alpha_max: int):
    rows = sorted(((r.s, r.npc, r.model, r.eta, r.v, alpha_max) for r in reports), key=lambda t: (t[2], t[0]))
    return ["s", "npc", "model", "eta", "v", "alpha_max"], rows


def fig2b_rows(reports, alpha_max: int):
    rows = []
    for r in sorted(reports, key=lambda r: -r.v):
        for k, val in sorted(r.var_ratio.items(), key=lambda kv: ObservableKind.parse(kv[0]).value):
            rows.append((r.eta, val, ObservableKind.parse(k).value, r.v, r.s, r.model, alpha_max))
    return ["eta", "var_ratio", "observable", "v", "s", "model", "alpha_max"], rows


def fig2c_rows(reports, alpha_max: int):
    rows = []
    for r in sorted(reports, key=lambda r: (r.model, r.s)):
        for k, val in sorted(r.var_ratio.items(), key=lambda kv: ObservableKind.parse(kv[0]).value):
            rows.append((r.s, val, ObservableKind.parse(k).value, r.eta, r.model, alpha_max))
    return ["s", "var_ratio", "observable", "eta", "model", "alpha_max"], rows


_MARKERS = {"nonsym": "+", "sym": "x", "box": "o", "tinv": "^",
            "axial_momentum": "x", "transverse_fraction": "+", "positive_momentum": "^", "odd_mode": "o"}


def _svg(fig, path) -> None:
    import matplotlib

    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "wgchaos", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    _atomic_write(Path(path), buf.getvalue().encode())


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_fig2a(reports, fits, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 3))
    for model in sorted({r.model for r in reports}):
        pts = sorted((r.s, r.npc) for r in reports if r.model == model)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], _MARKERS.get(model, "."), label=model, color="k")
        fit = fits.get(model)
        if fit is not None:
            xs = np.array([min(fit.s), max(fit.s)], dtype=float)
            ax.plot(xs, fit.intercept + fit.nu * xs, "-", color="k", lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("NPC")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _svg(fig, path)
    plt.close(fig)


def plot_variance(rows, xkey: str, path, log: bool = False) -> None:
    """Variance ratios against `xkey` with eta as the reference line."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 3))
    for obs in sorted({r["observable"] for r in rows}):
        pts = sorted((float(r[xkey]), float(r["var_ratio"])) for r in rows if r["observable"] == obs)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], _MARKERS.get(obs, "."), color="k", label=obs)
    ref = sorted({(float(r[xkey]), float(r["eta"])) for r in rows})
    ax.plot([p[0] for p in ref], [p[1] for p in ref], "-", color="k", lw=0.8, label="IPR")
    if log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("IPR" if xkey == "eta" else xkey)
    ax.set_ylabel("Var ratio")
    ax.legend(frameon=False, fontsize=6)
    fig.tight_layout()
    _svg(fig, path)
    plt.close(fig)


def write_manifest(path, payload: dict) -> None:
    body = {"version": __version__} | payload
    _atomic_write(Path(path), json.dumps(body, indent=1, sort_keys=True, default=_json_default).encode())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not serializable: {type(obj)}")


def emit_fig2(out_dir, s_reports, v_reports, settings: SweepSettings, failures=()) -> dict:
    """Write fig2a/b/c tables, SVG plots and a manifest; returns the fits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fits = {}
    for model in sorted({r.model for r in s_reports}):
        pts = [(r.s, r.npc) for r in s_reports if r.model == model]
        if len([p for p in pts if p[0] >= 2]) >= 3:
            fits[model] = fit_npc([p[0] for p in pts], [p[1] for p in pts], model)
    if s_reports:
        header, rows = fig2a_rows(s_reports, settings.alpha_max)
        write_csv(out / "fig2a.csv", header, rows)
        plot_fig2a(s_reports, fits, out / "fig2a.svg")
    if v_reports:
        header, rows = fig2b_rows(v_reports, settings.alpha_max)
        write_csv(out / "fig2b.csv", header, rows)
        plot_variance(read_csv(out / "fig2b.csv"), "eta", out / "fig2b.svg", log=True)
    nonsym = [r for r in s_reports if r.model == "nonsym"]
    if nonsym:
        header, rows = fig2c_rows(nonsym, settings.alpha_max)
        write_csv(out / "fig2c.csv", header, rows)
        plot_variance(read_csv(out / "fig2c.csv"), "s", out / "fig2c.svg")
    everything = list(s_reports) + list(v_reports)
    window = everything[0].eps_window if everything else None
    write_manifest(out / "manifest.json", {
        "settings": settings.to_dict(),
        "fits": {m: f.to_dict() for m, f in fits.items()},
        "reports": [r.to_dict() for r in everything],
        "failures": [asdict(f) for f in failures],
        "transverse_calibration": _calibration(settings, window),
        "seeds": {f"{r.model}:{r.s}": r.seed for r in everything},
    })
    return fits


def _calibration(settings: SweepSettings, window):
    if window is None:
        return None
    try:
        return calibrate_transverse(params_for_model("nonsym", settings.lam, settings.l0), window)
    except ValueError as exc:
        return {"skipped": str(exc)}


def observables_table(reports) -> list[tuple]:
    return [(r.model, r.s, r.v, ObservableKind.parse(k).value, v)
            for r in reports for k, v in r.var_ratio.items()]


def expected_observables(model) -> tuple[ObservableKind, ...]:
    params = params_for_model(model)
    from .observables import supports

    return tuple(k for k in ALL_OBSERVABLES if supports(k, params))


def env_alpha_max(default: int = 50000) -> int:
    return int(os.environ.get("WGCHAOS_ALPHA_MAX", default))


def is_finite(x: float) -> bool:
    return math.isfinite(x)
