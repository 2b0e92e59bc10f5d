"""Fill the spectrum and ensemble caches for the acceptance runs and the figure sweeps.

Usage: python3 scripts/warm_cache.py [--alpha-max N] [--only NAME ...]
Each entry is skipped quickly when already cached. Progress goes to stdout.
"""
from __future__ import annotations

import argparse
import os
import time

from wgchaos.analysis import SweepSettings, ensemble_for
from wgchaos.params import generate_scatterers, params_for_model, sweep_seed
from wgchaos.spectrum import SolverConfig, default_cache_dir, load_or_scan

ALPHA_MAX = int(os.environ.get("WGCHAOS_ALPHA_MAX", "50000"))


def plan(alpha_max: int) -> list[tuple[str, str, int, float, int]]:
    jobs = [("rank1", "nonsym", 1, 1e6, 5000),
            ("eq2", "nonsym", 1, 1e6, 3000), ("eq2", "nonsym", 2, 1e6, 3000)]
    for v in (0.0, 1e-4, 1e-1, 1e6):
        jobs.append(("limits", "nonsym", 32, v, 10000))
    for model in ("nonsym", "sym", "tinv"):
        for s in (4, 8, 16, 24, 32):
            jobs.append(("npc", model, s, 1e6, alpha_max))
    for v in (1e-2, 2e-3, 1e-3):
        jobs.append(("fig2b", "nonsym", 32, v, 10000))
    for s in (4, 8, 16, 24, 32):
        jobs.append(("box", "box", s, 1e6, alpha_max))
    return jobs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha-max", type=int, default=ALPHA_MAX)
    ap.add_argument("--only", nargs="*", default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cache = default_cache_dir()
    for name, model, s, v, alpha_max in plan(args.alpha_max):
        if args.only and name not in args.only:
            continue
        params = params_for_model(model)
        scat = generate_scatterers(model, s, v, sweep_seed(s))
        t0 = time.time()
        spec = load_or_scan(params, scat, alpha_max, SolverConfig(), cache, args.workers)
        t1 = time.time()
        if name not in ("rank1", "eq2"):
            ensemble_for(spec, SweepSettings(alpha_max=alpha_max, workers=args.workers))
        print(f"{name:7s} {model:6s} s={s:<3d} v={v:<8g} alpha_max={alpha_max:<6d} "
              f"states={len(spec):<6d} {spec.meta.get('cache')} scan {t1 - t0:7.1f}s "
              f"ensemble {time.time() - t1:7.1f}s", flush=True)


if __name__ == "__main__":
    main()
