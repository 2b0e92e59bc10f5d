import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import wgchaos.metrics as metrics
from wgchaos.metrics import (StrengthHistogram, collect, eq2_consistency, fit_lorentzian, gamma_from_eta,
                             independence_ratio, ipr, ipr_from_histogram, lorentzian, offset_grid, report,
                             strength_histogram, subwindow_summary, symmetry_factor, tail_slope, variance_ratio)
from wgchaos.observables import ObservableKind
from wgchaos.params import Model, ScattererSet, generate_scatterers, params_for_model
from wgchaos.spectrum import SolverConfig, load_or_scan

NONSYM = params_for_model("nonsym")


def _synthetic(gamma, bin_width=0.25, max_offset=200.0, count=1000):
    x = offset_grid(bin_width, max_offset)
    density = lorentzian(x, gamma)
    return StrengthHistogram(x, bin_width, density * bin_width, np.full(x.size, count), np.array([], int))


def test_symmetry_factor():
    assert symmetry_factor("nonsym") == 2
    assert all(symmetry_factor(m) == 3 for m in ("sym", "tinv", "box"))


def test_offset_grid():
    x = offset_grid(0.25, 200.0)
    assert x[0] == -200.0 and x[-1] == 200.0 and 0.0 in x
    assert np.allclose(np.diff(x), 0.25)


@given(st.floats(0.2, 20.0))
def test_lorentzian_normalized(gamma):
    x = np.linspace(-1e5, 1e5, 2_000_001)
    assert np.trapezoid(lorentzian(x, gamma), x) == pytest.approx(1.0, abs=2e-4 * gamma)


@given(st.floats(0.5, 15.0))
def test_fit_recovers_width(gamma):
    fit = fit_lorentzian(_synthetic(gamma))
    assert fit.gamma == pytest.approx(gamma, rel=1e-6)
    assert not fit.degenerate


def test_fit_degenerate_fallback():
    x = offset_grid()
    w = np.zeros(x.size)
    w[np.argmin(np.abs(x))] = 1.0
    hist = StrengthHistogram(x, 0.25, w, np.full(x.size, 100), np.array([], int))
    fit = fit_lorentzian(hist, eta=1.0, factor=2)
    assert fit.degenerate and fit.gamma == pytest.approx(gamma_from_eta(1.0, 2))
    with pytest.raises(ValueError):
        fit_lorentzian(hist)


def test_tail_slope_of_lorentzian():
    assert tail_slope(_synthetic(3.0)) == pytest.approx(-2.0, abs=0.01)


@given(st.floats(1.0, 10.0), st.sampled_from([2, 3]))
def test_eta_closure_for_lorentzian(gamma, factor):
    # factor * int W^2 = factor / (2 pi Gamma), and gamma_from_eta inverts it
    eta = ipr_from_histogram(_synthetic(gamma, 0.05, 400.0), factor)
    assert eta == pytest.approx(factor / (2 * math.pi * gamma), rel=0.03)
    assert gamma_from_eta(eta, factor) == pytest.approx(gamma, rel=0.03)


def test_collect_basic(nonsym4):
    ens = collect(nonsym4, 101, 1200)
    assert len(ens) == 1100
    eta = ipr(ens)
    assert 0.05 < eta < 0.5
    hist = strength_histogram(ens)
    assert 0.97 < hist.total <= 1.0 + 1e-9
    assert set(ens.observables) == set(ObservableKind)
    with pytest.raises(ValueError):
        collect(nonsym4, 101, 150)
    with pytest.raises(ValueError):
        collect(nonsym4, 101, 1200, band=100.0, max_offset=200.0)


def test_collect_independent_of_workers(nonsym4, monkeypatch):
    monkeypatch.setattr(metrics, "CHUNK_STATES", 300)
    a = collect(nonsym4, 101, 1000, workers=1)
    b = collect(nonsym4, 101, 1000, workers=2)
    assert np.array_equal(a.ipr, b.ipr)
    assert np.array_equal(a.hist_sum, b.hist_sum)
    for k in a.observables:
        assert np.array_equal(a.observables[k], b.observables[k])


def test_report_fields(nonsym4):
    ens = collect(nonsym4, 101, 1200)
    rep = report(ens, nonsym4)
    assert rep.npc == pytest.approx(1.0 / rep.eta)
    assert rep.tail_slope == pytest.approx(-2.0, abs=0.3)
    assert 1.2 < rep.closure < 2.8
    body = json.loads(json.dumps(rep.to_dict()))
    assert set(body["var_ratio"]) == {k.value for k in ObservableKind}


def test_integrable_limit(make_spectrum):
    spec = make_spectrum("nonsym", 4, 0.0, 3, 600)
    ens = collect(spec, 101, 600)
    assert ipr(ens) == pytest.approx(1.0)
    for kind in ens.observables:
        assert variance_ratio(ens, kind, spec.params) == pytest.approx(1.0, abs=0.05)
    hist = strength_histogram(ens)
    assert hist.weights[np.argmin(np.abs(hist.centers))] == pytest.approx(hist.total)


def test_independence_coincident_pair():
    sc = ScattererSet(Model.NONSYM, np.array([0.3, 0.3 + 1e-13]), np.array([5.0, 5.0]))
    assert independence_ratio(sc, NONSYM, (9000.0, 11000.0)) == pytest.approx(0.5, abs=1e-9)


@given(st.floats(0.05, 0.95), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_independence_methods_agree(z, va, vb):
    sc = ScattererSet(Model.NONSYM, np.array([0.0, z]), np.array([va, vb]))
    win = (2000.0, 2400.0)
    fact = independence_ratio(sc, NONSYM, win, "factorized", min_levels=100)
    direct = independence_ratio(sc, NONSYM, win, "direct", min_levels=100)
    assert fact == pytest.approx(direct, rel=1e-9, abs=1e-14)


def test_independence_errors():
    one = generate_scatterers("nonsym", 1, 1.0, 1)
    with pytest.raises(ValueError):
        independence_ratio(one, NONSYM, (9000.0, 11000.0))
    two = generate_scatterers("nonsym", 2, 1.0, 1)
    with pytest.raises(ValueError):
        independence_ratio(two, NONSYM, (9000.0, 9001.0))
    with pytest.raises(ValueError):
        independence_ratio(two, NONSYM, (9000.0, 11000.0), method="other")


def test_eq2_with_switched_off_scatterer(tmp_path):
    full = generate_scatterers("nonsym", 2, 1e6, 1002).with_strengths([1e6, 0.0])
    prev_scat = full.subset(1)
    prev = load_or_scan(NONSYM, prev_scat, 600, SolverConfig(), tmp_path)
    nxt = load_or_scan(NONSYM, full, 600, SolverConfig(), tmp_path)
    assert np.allclose(prev.eps, nxt.eps, atol=1e-8)
    e_prev = collect(prev, 101, 600)
    e_next = collect(nxt, 101, 600)
    res = eq2_consistency(prev, nxt, e_prev, e_next)
    assert res.transfer[np.argmin(np.abs(res.centers))] == 1.0
    assert res.l1 < 1e-6


def test_subwindows(nonsym4):
    ens = collect(nonsym4, 101, 1200)
    parts = subwindow_summary(ens, nonsym4.params, parts=2)
    assert [p["alpha_window"] for p in parts] == [[101, 650], [651, 1200]]
    assert np.mean([p["eta"] for p in parts]) == pytest.approx(ipr(ens))
    assert len(report(ens, nonsym4).subwindows) == 2
