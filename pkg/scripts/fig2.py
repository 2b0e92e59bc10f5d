"""Figure tables and plots: NPC against s for each model, variance ratios
against IPR (strength sweep at s = 32) and against s (non-symmetric model).

Usage: python3 scripts/fig2.py [--out DIR] [--alpha-max N] [--models nonsym sym tinv box]
Run scripts/warm_cache.py first; otherwise the scans happen here.
"""
from __future__ import annotations

import argparse

from wgchaos.analysis import DEFAULT_S_LIST, DEFAULT_V_LIST, SweepSettings, emit_fig2, sweep_scatterers, sweep_strength


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="wgchaos-out/fig2")
    ap.add_argument("--alpha-max", type=int, default=50000)
    ap.add_argument("--strength-alpha-max", type=int, default=10000)
    ap.add_argument("--models", nargs="+", default=["nonsym", "sym", "tinv"])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    settings = SweepSettings(alpha_max=args.alpha_max, workers=args.workers)
    s_reports, failures = [], []
    for model in args.models:
        reports, failed = sweep_scatterers(model, DEFAULT_S_LIST, 1e6, settings)
        s_reports += reports
        failures += failed
    strength = SweepSettings(alpha_max=args.strength_alpha_max, workers=args.workers)
    v_reports, failed = sweep_strength("nonsym", 32, DEFAULT_V_LIST, strength)
    failures += failed
    fits = emit_fig2(args.out, s_reports, v_reports, settings, failures)
    for model, fit in fits.items():
        print(f"{model}: nu = {fit.nu:.3f} [{fit.nu_ci[0]:.3f}, {fit.nu_ci[1]:.3f}], R2 = {fit.r2:.4f}")
    for f in failures:
        print(f"failed: {f.model} s={f.s} v={f.v:g}: {f.error}")


if __name__ == "__main__":
    main()
