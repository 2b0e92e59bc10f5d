import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgchaos.eigenstates import EigState, StateBuilder
from wgchaos.observables import (ALL_OBSERVABLES, ObservableKind, axial_variance_closed_form, calibrate_transverse,
                                 diagonal_values, expectation, expectations, integrable_baseline,
                                 row_energy_factor, supports, tail_mean, transverse_quadratic_form)
from wgchaos.params import level_energy, params_for_model
from wgchaos.spectrum import SpectralLine

NONSYM = params_for_model("nonsym")


def _state(n, l, coeffs, params=NONSYM):
    n = np.asarray(n)
    l = np.asarray(l)
    eps_nl = level_energy(params, n, l)
    c = np.asarray(coeffs, dtype=complex)
    c = c / np.linalg.norm(c)
    line = SpectralLine(1, float(eps_nl.mean()), 0.0, (0.0, 0.0))
    return EigState(line, np.zeros(1, complex), n, l, eps_nl, c, 0.0, (0.0, 0.0))


def test_parse():
    assert ObservableKind.parse("U") is ObservableKind.TRANSVERSE_FRACTION
    assert ObservableKind.parse("p_ax") is ObservableKind.AXIAL_MOMENTUM
    assert ObservableKind.parse("odd") is ObservableKind.ODD_MODE
    with pytest.raises(ValueError):
        ObservableKind.parse("energy")


def test_diagonal_values():
    n = np.array([0, 1, 2, 0])
    l = np.array([0, -1, 3, 2])
    eps = level_energy(NONSYM, n, l)
    assert list(diagonal_values("p_ax", NONSYM, n, l, eps)) == [0, -1, 3, 2]
    # theta(0) = 0
    assert list(diagonal_values("ppos", NONSYM, n, l, eps)) == [0, 0, 1, 1]
    assert list(diagonal_values("podd", NONSYM, n, l, eps)) == [0, 1, 1, 0]
    u = diagonal_values("u", NONSYM, n, l, eps)
    assert u == pytest.approx((2 * n + 1) * NONSYM.lam / (2 * NONSYM.lam + 4 * eps))


def test_transverse_fraction_limits():
    # all energy in the transverse mode: l = l0 would give exactly 1/2
    eps = NONSYM.lam * 7.0
    assert (2 * 7 + 1) * row_energy_factor(NONSYM, eps) == pytest.approx(0.5)
    # no transverse excitation at high axial energy: small
    assert row_energy_factor(NONSYM, 1e6) < 1e-3


def test_box_support():
    box = params_for_model("box")
    assert not supports(ObservableKind.AXIAL_MOMENTUM, box)
    assert not supports(ObservableKind.POSITIVE_MOMENTUM, box)
    assert supports(ObservableKind.ODD_MODE, box)
    with pytest.raises(ValueError):
        tail_mean("p_ax", box)


def test_tail_means():
    assert tail_mean("p_ax", NONSYM) == NONSYM.l0
    assert tail_mean("u", NONSYM) == pytest.approx(1 / 3)
    assert tail_mean("ppos", NONSYM) == 0.5


def test_integrable_baselines():
    win = (2.0e4, 3.0e4)
    mean, var = integrable_baseline("u", win, NONSYM)
    assert mean == pytest.approx(1 / 3, rel=0.01)
    assert var == pytest.approx(1 / 45, rel=0.02)
    for kind in ("ppos", "podd"):
        assert integrable_baseline(kind, win, NONSYM)[1] == pytest.approx(0.25, rel=0.01)
    mean, var = integrable_baseline("p_ax", win, NONSYM)
    assert abs(mean - NONSYM.l0) < 0.1
    assert var == pytest.approx(axial_variance_closed_form(*win), rel=0.01)
    with pytest.raises(ValueError):
        integrable_baseline("u", (100.0, 120.0), NONSYM)


def test_calibration_record():
    rec = calibrate_transverse(NONSYM, (2.0e4, 3.0e4))
    assert rec["target_mean"] == pytest.approx(1 / 3)
    assert abs(rec["mean"] - rec["target_mean"]) < 0.01


def test_closed_form_errors():
    with pytest.raises(ValueError):
        axial_variance_closed_form(10.0, 5.0)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=12, max_size=12),
       st.booleans())
def test_quadratic_form_against_dense_matrix(raw, symmetrized):
    # full (n, l) grid so that every n +- 1 neighbour is present
    n, l = (a.ravel() for a in np.meshgrid(np.arange(4), np.array([-1, 0, 2]), indexing="ij"))
    c = np.array([complex(a, b) for a, b in raw])
    if np.linalg.norm(c) < 1e-3:
        return
    state = _state(n, l, c)
    u = row_energy_factor(NONSYM, state.eps_nl)
    U = np.zeros((12, 12))
    for i in range(12):
        for j in range(12):
            if l[i] != l[j]:
                continue
            if n[i] == n[j]:
                U[i, j] = 2 * n[i] + 1
            elif abs(int(n[i]) - int(n[j])) == 1:
                U[i, j] = -max(n[i], n[j])
    if symmetrized:
        M = U * 0.5 * (u[:, None] + u[None, :])
    else:
        M = U * u[:, None]
    dense = state.coeffs.conj() @ M @ state.coeffs
    assert transverse_quadratic_form(state, NONSYM, symmetrized) == pytest.approx(dense, abs=1e-12)


def test_integrable_state_expectations(make_spectrum):
    spec = make_spectrum("nonsym", 3, 0.0, 5, 300)
    st = StateBuilder(spec).expand(150)
    vals = expectations(st, spec.params)
    n, l = int(st.n[0]), int(st.l[0])
    assert vals[ObservableKind.AXIAL_MOMENTUM] == l
    assert vals[ObservableKind.TRANSVERSE_FRACTION] == pytest.approx(
        float(diagonal_values("u", spec.params, n, l, st.eps_nl[0])))


def test_chaotic_state_u_is_real(nonsym4):
    builder = StateBuilder(nonsym4)
    for i in (300, 800):
        st = builder.expand(i)
        verbatim = transverse_quadratic_form(st, nonsym4.params)
        sym = transverse_quadratic_form(st, nonsym4.params, symmetrized=True)
        assert abs(verbatim.imag) < 1e-12
        assert verbatim.real == pytest.approx(sym.real, abs=1e-3)
        assert 0.0 < verbatim.real < 0.5 + 1e-9


def test_fold_tail_and_normalization(nonsym4):
    st = StateBuilder(nonsym4).expand(500)
    plain = expectation(st, "p_ax", nonsym4.params)
    folded = expectation(st, "p_ax", nonsym4.params, fold_tail=True)
    tau = st.norm_defect
    assert folded == pytest.approx((1 - tau) * plain + tau * nonsym4.params.l0)
    bad = EigState(st.line, st.overlaps, st.n, st.l, st.eps_nl, 2 * st.coeffs, tau, st.band)
    with pytest.raises(ValueError):
        expectation(bad, "p_ax", nonsym4.params)


def test_all_observables_listed():
    assert len(ALL_OBSERVABLES) == 4
