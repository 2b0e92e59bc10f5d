"""Command-line front end: wgchaos <subcommand> [--config FILE] [flags].

Settings come from dataclass defaults, then an INI file (any section, keys
named like the flags with underscores), then command-line flags. The
effective configuration is written to manifest.json in the output directory.

Exit status: 0 success, 1 a tolerance was not met, 2 invalid configuration,
3 numerical failure (a FAILED marker is left next to the partial outputs).
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (DEFAULT_S_LIST, DEFAULT_V_LIST, SweepSettings, emit_fig2, ensemble_for, fit_npc,
                       read_csv, sweep_scatterers, sweep_strength, write_csv, write_manifest)
from .eigenstates import StateBuilder, dump_states
from .metrics import independence_ratio, report, strength_histogram
from .params import DEFAULT_L0, DEFAULT_LAMBDA, Model, generate_scatterers, params_for_model, sweep_seed
from .spectrum import CountMismatchError, DegenerateRootError, SolverConfig, default_cache_dir, load_or_scan

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
SUBCOMMANDS = ("spectrum", "states", "metrics", "sweep-s", "sweep-v", "fit-npc", "check-independence", "validate")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str = "spectrum"
    model: str = "nonsym"
    models: list = field(default_factory=lambda: ["nonsym"])
    s: int = 4
    s_list: list = field(default_factory=lambda: list(DEFAULT_S_LIST))
    v: float = 1e6
    v_list: list = field(default_factory=lambda: list(DEFAULT_V_LIST))
    lam: float = DEFAULT_LAMBDA
    l0: float = DEFAULT_L0
    seed: int | None = None
    seed_base: int = 1000
    alpha_min: int = 101
    alpha_max: int = 2000
    alpha_range: list = field(default_factory=lambda: [101, 110])
    eps_window: list = field(default_factory=lambda: [9000.0, 11000.0])
    grid_factor: float = 0.1
    pole_offset: float = 1e-10
    xtol: float = 1e-10
    band: float = 1000.0
    state_tol: float | None = None
    threshold: float = 1e-8
    bin_width: float = 0.25
    max_offset: float = 200.0
    method: str = "factorized"
    input: str | None = None
    cache_dir: str | None = None
    out: str | None = None
    workers: int = 1

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        try:
            for m in [self.model, *self.models]:
                Model.parse(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.s >= 1, "s must be at least 1"),
            (all(int(x) >= 1 for x in self.s_list), "s_list entries must be at least 1"),
            (self.v >= 0 and all(x >= 0 for x in self.v_list), "strengths must be non-negative"),
            (self.lam > 0, "lam must be positive"),
            (1 <= self.alpha_min <= self.alpha_max, "need 1 <= alpha_min <= alpha_max"),
            (len(self.alpha_range) == 2 and 1 <= self.alpha_range[0] <= self.alpha_range[1],
             "alpha_range must be lo:hi with 1 <= lo <= hi"),
            (len(self.eps_window) == 2 and self.eps_window[0] < self.eps_window[1], "eps_window must be lo:hi"),
            (self.grid_factor > 0 and self.pole_offset > 0 and self.xtol > 0, "tolerances must be positive"),
            (0 < self.bin_width <= 0.5, "bin_width must be in (0, 0.5]"),
            (self.band > 0 and self.max_offset > 0, "band and max_offset must be positive"),
            (self.workers >= 1, "workers must be at least 1"),
            (self.method in ("factorized", "direct"), "method must be factorized or direct"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.subcommand == "fit-npc" and not self.input:
            raise ConfigError("fit-npc needs --input pointing at a fig2a.csv")

    def solver(self) -> SolverConfig:
        return SolverConfig(pole_offset=self.pole_offset, xtol=self.xtol)

    def cache_root(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else default_cache_dir()

    def out_dir(self) -> Path:
        return Path(self.out) if self.out else Path("wgchaos-out") / self.subcommand

    def sweep_settings(self) -> SweepSettings:
        return SweepSettings(alpha_max=self.alpha_max, alpha_min=self.alpha_min, lam=self.lam, l0=self.l0,
                             band=self.band, bin_width=self.bin_width, max_offset=self.max_offset,
                             seed_base=self.seed_base, workers=self.workers,
                             cache_dir=str(self.cache_root()), solver=self.solver())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cache_dir"] = str(self.cache_root())
        out["out"] = str(self.out_dir())
        return out


# --------------------------------------------------------------------------
# config parsing

def _pair(text, cast):
    parts = str(text).replace(",", ":").split(":")
    if len(parts) != 2:
        raise ConfigError(f"expected lo:hi, got {text!r}")
    return [cast(parts[0]), cast(parts[1])]


def _list(text, cast):
    return [cast(x) for x in str(text).replace(",", " ").split()]


def _optional_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _optional_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _optional_str(text):
    return None if str(text).strip().lower() in ("", "none") else str(text)


_PARSERS = {
    "model": str, "models": lambda t: _list(t, str), "s": int, "s_list": lambda t: _list(t, int),
    "v": float, "v_list": lambda t: _list(t, float), "lam": float, "l0": float, "seed": _optional_int,
    "seed_base": int, "alpha_min": int, "alpha_max": int, "alpha_range": lambda t: _pair(t, int),
    "eps_window": lambda t: _pair(t, float), "grid_factor": float, "pole_offset": float, "xtol": float,
    "band": float, "state_tol": _optional_float, "threshold": float, "bin_width": float,
    "max_offset": float, "method": str, "input": _optional_str, "cache_dir": _optional_str,
    "out": _optional_str, "workers": int,
}


def _convert(key: str, raw) -> object:
    try:
        return _PARSERS[key](raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in _PARSERS:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[key] = _convert(key, raw)
    return values


_HELP = {
    "model": "nonsym, sym, tinv or box", "models": "comma list of models (sweep-s)",
    "s": "number of scatterers", "s_list": "comma list of s (sweep-s)",
    "v": "scatterer strength V/V0", "v_list": "comma list of strengths (sweep-v)",
    "lam": "aspect parameter lambda", "l0": "scaled vector potential (periodic models)",
    "seed": "layout seed; default seed-base + s", "seed_base": "base of the per-s seed",
    "alpha_min": "first state of the averaging window", "alpha_max": "last state computed",
    "alpha_range": "lo,hi states to dump (states)", "eps_window": "lo,hi energies (check-independence)",
    "grid_factor": "sign-scan grid in local spacings (cross-check only)",
    "pole_offset": "relative probe offset around levels", "xtol": "relative root tolerance",
    "band": "stored half-band in level spacings", "state_tol": "target tail weight per state",
    "threshold": "smallest |c|^2 written by states", "bin_width": "strength-function bin, in spacings",
    "max_offset": "strength-function range, in spacings", "method": "factorized or direct",
    "input": "CSV with s, npc, model columns (fit-npc)", "cache_dir": "spectrum cache directory",
    "out": "output directory", "workers": "worker processes",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgchaos", description="Waveguide scatterer spectra and chaos metrics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file; flags override its values")
        for key in _PARSERS:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=_HELP.get(key))
    return parser


def resolve_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key in _PARSERS:
        raw = getattr(args, key)
        if raw is not None:
            values[key] = _convert(key, raw)
    cfg = RunConfig(subcommand=args.subcommand)
    names = {f.name for f in fields(RunConfig)}
    for key, value in values.items():
        if key in names:
            setattr(cfg, key, value)
    if "model" in values and "models" not in values:
        cfg.models = [cfg.model]
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# subcommands

def _scatterers(cfg: RunConfig):
    seed = cfg.seed if cfg.seed is not None else sweep_seed(cfg.s, cfg.seed_base)
    return params_for_model(cfg.model, cfg.lam, cfg.l0), generate_scatterers(cfg.model, cfg.s, cfg.v, seed)


def _spectrum(cfg: RunConfig):
    params, scat = _scatterers(cfg)
    return load_or_scan(params, scat, cfg.alpha_max, cfg.solver(), cfg.cache_root(), cfg.workers)


def cmd_spectrum(cfg: RunConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    spec = _spectrum(cfg)
    rows = [(int(a), float(e), float(r), float(b[0]), float(b[1]), int(p))
            for a, e, r, b, p in zip(spec.alpha, spec.eps, spec.residual, spec.bracket, spec.pole_bound)]
    write_csv(out / "spectrum.csv", ["alpha", "eps", "residual", "bracket_lo", "bracket_hi", "pole_bound"], rows)
    elapsed = time.perf_counter() - t0
    print(f"{len(spec)} states up to alpha={cfg.alpha_max}, eps <= {spec.eps[-1]:.6g}; "
          f"cache {spec.meta.get('cache')} in {elapsed:.2f}s")
    return {"states": len(spec), "cache": spec.meta.get("cache"), "config_hash": spec.config_hash,
            "below": spec.below, "scatterers": spec.scatterers.to_dict(), "seconds": elapsed}


def cmd_states(cfg: RunConfig, out: Path) -> dict:
    lo, hi = cfg.alpha_range
    if hi > cfg.alpha_max:
        cfg.alpha_max = hi
    spec = _spectrum(cfg)
    builder = StateBuilder(spec, cfg.band)
    idx = np.flatnonzero((spec.alpha >= lo) & (spec.alpha <= hi))
    states = []
    for i in idx:
        st = builder.expand(int(i))
        if cfg.state_tol is not None and st.norm_defect > cfg.state_tol:
            from .eigenstates import expand_state

            st = expand_state(spec, int(i), cfg.band, cfg.state_tol)
        states.append(st)
    dump_states(states, out / "states.csv", cfg.threshold)
    defects = [st.norm_defect for st in states]
    print(f"{len(states)} states alpha {lo}..{hi}; max tail weight {max(defects, default=0.0):.3g}")
    unmet = cfg.state_tol is not None and any(d > cfg.state_tol for d in defects)
    return {"states": len(states), "max_norm_defect": max(defects, default=0.0),
            "tolerance_met": not unmet, "config_hash": spec.config_hash}


def cmd_metrics(cfg: RunConfig, out: Path) -> dict:
    spec = _spectrum(cfg)
    settings = cfg.sweep_settings()
    ens = ensemble_for(spec, settings)
    rep = report(ens, spec)
    hist = strength_histogram(ens)
    write_csv(out / "strength.csv", ["offset", "weight", "samples"],
              zip(hist.centers.tolist(), hist.weights.tolist(), hist.counts.tolist()))
    kinds = list(ens.observables)
    write_csv(out / "states.csv", ["alpha", "eps", "ipr", "tail"] + [k.value for k in kinds],
              ([int(a), float(e), float(i), float(t)] + [float(ens.observables[k][j]) for k in kinds]
               for j, (a, e, i, t) in enumerate(zip(ens.alpha, ens.eps, ens.ipr, ens.tail))))
    body = rep.to_dict()
    (out / "metrics.json").write_text(json.dumps(body, indent=1, sort_keys=True))
    print(f"eta={rep.eta:.4g} npc={rep.npc:.4g} gamma={rep.gamma_spacings:.4g} spacings "
          f"closure={rep.closure:.3g} tail slope={rep.tail_slope:.3g}")
    for k, val in body["var_ratio"].items():
        print(f"  var ratio {k}: {val:.4g}")
    return {"report": body}


def _sweep_outcome(out: Path, s_reports, v_reports, failures, cfg: RunConfig) -> dict:
    fits = emit_fig2(out, s_reports, v_reports, cfg.sweep_settings(), failures)
    for r in list(s_reports) + list(v_reports):
        print(f"{r.model:7s} s={r.s:<3d} v={r.v:<8.3g} eta={r.eta:.4g} npc={r.npc:.4g}")
    for model, fit in fits.items():
        print(f"{model}: nu={fit.nu:.4g} [{fit.nu_ci[0]:.4g}, {fit.nu_ci[1]:.4g}] R2={fit.r2:.4f}")
    if failures:
        raise NumericalFailure([asdict(f) for f in failures])
    return {"fits": {m: f.to_dict() for m, f in fits.items()}}


def cmd_sweep_s(cfg: RunConfig, out: Path) -> dict:
    settings = cfg.sweep_settings()
    reports, failures = [], []
    for model in cfg.models:
        r, f = sweep_scatterers(model, cfg.s_list, cfg.v, settings)
        reports += r
        failures += f
    return _sweep_outcome(out, reports, [], failures, cfg)


def cmd_sweep_v(cfg: RunConfig, out: Path) -> dict:
    reports, failures = sweep_strength(cfg.model, cfg.s, cfg.v_list, cfg.sweep_settings())
    return _sweep_outcome(out, [], reports, failures, cfg)


def cmd_fit_npc(cfg: RunConfig, out: Path) -> dict:
    try:
        rows = read_csv(cfg.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {cfg.input}: {exc}") from None
    if not rows or not {"s", "npc", "model"} <= set(rows[0]):
        raise ConfigError(f"{cfg.input} lacks s, npc, model columns")
    fits = {}
    for model in sorted({r["model"] for r in rows}):
        pts = [(float(r["s"]), float(r["npc"])) for r in rows if r["model"] == model]
        try:
            fits[model] = fit_npc([p[0] for p in pts], [p[1] for p in pts], model)
        except ValueError as exc:
            print(f"{model}: {exc}")
            continue
        f = fits[model]
        print(f"{model}: nu={f.nu:.4g} 95% CI [{f.nu_ci[0]:.4g}, {f.nu_ci[1]:.4g}] "
              f"eta2={f.eta2:.4g} R2={f.r2:.4f}")
    (out / "fit_npc.json").write_text(json.dumps({m: f.to_dict() for m, f in fits.items()},
                                                 indent=1, sort_keys=True))
    return {"fits": {m: f.to_dict() for m, f in fits.items()}, "tolerance_met": bool(fits)}


def cmd_check_independence(cfg: RunConfig, out: Path) -> dict:
    params, scat = _scatterers(cfg)
    ratio = independence_ratio(scat, params, cfg.eps_window, cfg.method)
    print(f"independence ratio {ratio:.4g} over eps {cfg.eps_window[0]:g}..{cfg.eps_window[1]:g}")
    body = {"ratio": ratio, "eps_window": cfg.eps_window, "method": cfg.method,
            "scatterers": scat.to_dict()}
    (out / "independence.json").write_text(json.dumps(body, indent=1, sort_keys=True))
    return body


def cmd_validate(cfg: RunConfig, out: Path) -> dict:
    from .oracles import oracle_suite

    results = oracle_suite()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max error {r.max_error:.3g} "
              f"(tol {r.tol:g}, {r.points} points, {r.seconds:.1f}s)")
    body = [r.to_dict() for r in results]
    (out / "validate.json").write_text(json.dumps(body, indent=1, sort_keys=True))
    return {"oracles": body, "tolerance_met": all(r.passed for r in results)}


COMMANDS = {"spectrum": cmd_spectrum, "states": cmd_states, "metrics": cmd_metrics, "sweep-s": cmd_sweep_s,
            "sweep-v": cmd_sweep_v, "fit-npc": cmd_fit_npc, "check-independence": cmd_check_independence,
            "validate": cmd_validate}


class NumericalFailure(RuntimeError):
    def __init__(self, details):
        super().__init__("numerical failure")
        self.details = details


def _error_report(kind: str, message: str, details=None) -> dict:
    return {"error": kind, "message": message, "details": details, "version": __version__}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(json.dumps(_error_report("config", str(exc))), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        print(json.dumps(_error_report("config", "invalid command line", " ".join(argv))), file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    manifest = {"config": cfg.to_dict(), "argv": argv}
    status = EXIT_OK
    t0 = time.perf_counter()
    try:
        result = COMMANDS[cfg.subcommand](cfg, out)
        manifest["result"] = result
        if result.get("tolerance_met") is False:
            status = EXIT_TOLERANCE
    except ConfigError as exc:
        report_ = _error_report("config", str(exc))
        print(json.dumps(report_), file=sys.stderr)
        manifest["error"] = report_
        status = EXIT_CONFIG
    except (CountMismatchError, DegenerateRootError, NumericalFailure, ArithmeticError) as exc:
        details = getattr(exc, "details", None)
        report_ = _error_report(type(exc).__name__, str(exc), details)
        print(json.dumps(report_, default=str), file=sys.stderr)
        (out / "FAILED").write_text(json.dumps(report_, indent=1, default=str))
        manifest["error"] = report_
        status = EXIT_NUMERICAL
    except ValueError as exc:
        report_ = _error_report("invalid_input", str(exc))
        print(json.dumps(report_), file=sys.stderr)
        manifest["error"] = report_
        status = EXIT_CONFIG
    manifest["exit_status"] = status
    manifest["seconds"] = time.perf_counter() - t0
    write_manifest(out / "manifest.json", manifest)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
