import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgchaos.analysis import (SweepSettings, emit_fig2, ensemble_for, expected_observables, fig2a_rows, fit_npc,
                              read_csv, sweep_scatterers, sweep_spectrum, sweep_strength, write_csv)
from wgchaos.observables import ObservableKind


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    return SweepSettings(alpha_max=500, cache_dir=str(tmp_path_factory.mktemp("sweep")))


@given(st.floats(0.1, 3.0), st.floats(-5.0, 5.0))
def test_fit_exact_line(nu, c):
    s = [1, 4, 8, 16, 24, 32]
    fit = fit_npc(s, [c + nu * x for x in s], "nonsym")
    assert fit.nu == pytest.approx(nu, rel=1e-9, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.s == [4, 8, 16, 24, 32]
    assert fit.nu_ci[0] <= fit.nu <= fit.nu_ci[1]


def test_fit_noisy_line_confidence():
    rng = np.random.default_rng(3)
    s = np.array([4, 8, 16, 24, 32])
    y = 0.9 + 1.07 * s + rng.normal(0, 0.5, s.size)
    fit = fit_npc(s, y)
    assert fit.nu_ci[0] < 1.07 < fit.nu_ci[1]
    assert 0.97 < fit.r2 < 1.0
    assert np.allclose(fit.residuals, y - (fit.intercept + fit.nu * s))


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_npc([1, 4, 8], [1.0, 2.0, 3.0])


def test_csv_roundtrip_exact(tmp_path):
    path = tmp_path / "t.csv"
    rows = [(4, 0.1 + 0.2, "nonsym"), (8, 1 / 3, "tinv")]
    write_csv(path, ["s", "x", "model"], rows)
    back = read_csv(path)
    assert float(back[0]["x"]) == 0.1 + 0.2 and float(back[1]["x"]) == 1 / 3
    assert back[1]["model"] == "tinv"


def test_expected_observables():
    assert len(expected_observables("nonsym")) == 4
    assert set(expected_observables("box")) == {ObservableKind.TRANSVERSE_FRACTION, ObservableKind.ODD_MODE}


def test_integrable_sweep(small):
    reports, failures = sweep_strength("nonsym", 4, [0.0], small)
    assert not failures
    assert reports[0].npc == pytest.approx(1.0)
    assert reports[0].seed == 1004


def test_ensemble_cache_roundtrip(small):
    spec = sweep_spectrum("nonsym", 2, 1e6, small)
    a = ensemble_for(spec, small)
    b = ensemble_for(spec, small)
    assert np.array_equal(a.ipr, b.ipr) and np.array_equal(a.hist_sum, b.hist_sum)
    for k in a.observables:
        assert np.array_equal(a.observables[k], b.observables[k])
    assert len(list((small.cache_root() / "ensembles").glob("*.npz"))) >= 1


def test_emit_outputs_are_deterministic(small, tmp_path):
    s_reports, fail_s = sweep_scatterers("nonsym", [2, 3, 4], 1e6, small)
    v_reports, fail_v = sweep_strength("nonsym", 4, [1e6, 0.0], small)
    assert not fail_s and not fail_v
    one, two = tmp_path / "one", tmp_path / "two"
    fits = emit_fig2(one, s_reports, v_reports, small)
    emit_fig2(two, s_reports, v_reports, small)
    assert "nonsym" in fits and fits["nonsym"].nu > 0
    for name in ("fig2a.csv", "fig2b.csv", "fig2c.csv", "fig2a.svg", "fig2b.svg", "fig2c.svg"):
        assert (one / name).read_bytes() == (two / name).read_bytes()
    header, rows = fig2a_rows(s_reports, small.alpha_max)
    assert [r["s"] for r in read_csv(one / "fig2a.csv")] == ["2", "3", "4"]
    assert header[-1] == "alpha_max"
    manifest = json.loads((one / "manifest.json").read_text())
    assert manifest["settings"]["alpha_max"] == 500
    assert manifest["seeds"]["nonsym:3"] == 1003


def test_emit_without_s_sweep(small, tmp_path):
    v_reports, _ = sweep_strength("nonsym", 4, [0.0], small)
    assert emit_fig2(tmp_path, [], v_reports, small) == {}
    assert (tmp_path / "fig2b.csv").exists() and not (tmp_path / "fig2a.csv").exists()
