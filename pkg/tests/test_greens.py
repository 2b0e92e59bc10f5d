import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgchaos.greens import (GreenFunction, PoleError, build_secular_matrix, greens_axis, greens_diag,
                            secular_from_green)
from wgchaos.oracles import diagonal_by_extrapolation, resolvent_bruteforce
from wgchaos.params import generate_scatterers, level_energy, params_for_model

# direct (n, l) resolvent sums
GREEN_REFERENCE = [
    ("nonsym", 0.1, 0.37, 523.7, 6.56455401649344 + 3.0060865236333987j),
    ("nonsym", 0.2, 0.9, -40.0, -0.03308359157274487 - 0.015194739057995354j),
    ("tinv", 0.05, 0.6, 2718.3, 31.855353293868 + 0j),
    ("sym", 0.3, 0.31, 150.2, 5.724670925318319 + 1.6140593381711228j),
    ("box", 0.2, 0.55, 1234.5, -10.4894898134414 + 0j),
    ("box", 0.7, 0.75, -20.0, -2.2560708765467026 + 0j),
]

# multiprecision channel sum plus Hurwitz zeta
DIAGONAL_REFERENCE = [
    ("nonsym", -150.0, 2.0141786210721997),
    ("nonsym", 35.7, 2.291850237562125),
    ("nonsym", 1500.3, 2.981735935233221),
    ("tinv", 35.7, -4.356257390038354),
    ("tinv", 1500.3, -7.38224428288865),
]


@pytest.mark.parametrize("model,z1,z2,eps,ref", GREEN_REFERENCE)
def test_offdiagonal_frozen(model, z1, z2, eps, ref):
    S = GreenFunction(params_for_model(model), [z1, z2]).matrix(eps)
    assert abs(S[0, 1] - ref) < 1e-8 * max(1.0, abs(ref))
    assert abs(S[1, 0] - np.conj(ref)) < 1e-8 * max(1.0, abs(ref))


@pytest.mark.parametrize("model,eps,ref", DIAGONAL_REFERENCE)
def test_diagonal_frozen(model, eps, ref):
    S = GreenFunction(params_for_model(model), [0.0]).matrix(eps)
    assert S[0, 0].real == pytest.approx(ref, abs=1e-9)
    assert greens_diag(eps, params_for_model(model), 2.0) == pytest.approx(2.0 * ref - 1.0, abs=1e-8)


def test_diagonal_by_extrapolation():
    p = params_for_model("nonsym")
    assert diagonal_by_extrapolation(35.7, p) == pytest.approx(2.291850237562125, abs=1e-6)


@given(st.sampled_from(["nonsym", "tinv", "box"]), st.floats(0.02, 0.98), st.floats(0.02, 0.98),
       st.floats(-200.0, 3000.0))
def test_offdiagonal_against_bruteforce(model, a, b, eps):
    z1, z2 = sorted((a, b))
    if z2 - z1 < 0.02:
        return
    p = params_for_model(model)
    try:
        fast = GreenFunction(p, [z1, z2]).matrix(eps)[0, 1]
    except PoleError:
        return
    slow = resolvent_bruteforce(z1, z2, eps, p)
    assert abs(fast - slow) < 1e-6 * max(1.0, abs(slow))


@given(st.sampled_from(["nonsym", "sym", "tinv", "box"]), st.integers(1, 8), st.integers(0, 1000),
       st.floats(-40.0, 5000.0))
def test_hermitian(model, s, seed, eps):
    try:
        sc = generate_scatterers(model, s, 1.0, seed)
        S = GreenFunction(params_for_model(model), sc.positions).matrix(eps)
    except (ValueError, PoleError):
        return
    assert np.allclose(S, S.conj().T, atol=1e-12 * max(1.0, np.abs(S).max()))
    if model in ("tinv", "box"):
        assert np.allclose(S.imag, 0.0, atol=1e-12 * max(1.0, np.abs(S).max()))


@given(st.sampled_from(["nonsym", "tinv", "box"]), st.floats(-40.0, 3000.0))
def test_derivative_matches_finite_difference(model, eps):
    p = params_for_model(model)
    g = GreenFunction(p, [0.13, 0.41, 0.77])
    h = 1e-5
    # the difference quotient cannot straddle a channel threshold (square-root branch point)
    if abs(eps / p.lam - round(eps / p.lam)) * p.lam < 1e-3:
        return
    try:
        _, dS = g.matrix(eps, derivative=True)
        fd = (g.matrix(eps + h) - g.matrix(eps - h)) / (2 * h)
    except PoleError:
        return
    scale = max(1.0, np.abs(dS).max())
    # stay away from poles where the difference quotient is meaningless
    if scale > 1e4:
        return
    assert np.allclose(dS, fd, atol=1e-5 * scale)


def test_derivative_negative_definite_between_poles():
    # S decreases with energy: -dS/deps is positive definite
    p = params_for_model("nonsym")
    g = GreenFunction(p, [0.0, 0.3, 0.55])
    for eps in (10.0, 523.7, 2001.1):
        _, dS = g.matrix(eps, derivative=True)
        assert np.all(np.linalg.eigvalsh(-dS) > 0)


def test_pole_raises():
    p = params_for_model("nonsym")
    eps = float(level_energy(p, 3, 2))
    with pytest.raises(PoleError):
        GreenFunction(p, [0.0, 0.4]).matrix(eps)


def test_axis_helper():
    p = params_for_model("nonsym")
    z, eps = 0.27, 812.3
    assert greens_axis(z, eps, p) == pytest.approx(resolvent_bruteforce(z, 0.0, eps, p), abs=1e-8)
    assert greens_axis(-z, eps, p) == pytest.approx(np.conj(greens_axis(z, eps, p)))
    with pytest.raises(ValueError):
        greens_axis(0.0, eps, p)
    with pytest.raises(ValueError):
        greens_axis(0.3, eps, params_for_model("box"))
    with pytest.raises(ValueError):
        greens_diag(eps, params_for_model("box"), 1.0)


def test_secular_matrix_forms():
    p = params_for_model("nonsym")
    sc = generate_scatterers("nonsym", 4, 2.5, 11)
    sec = build_secular_matrix(321.0, sc, p, derivative=True)
    S = GreenFunction(p, sc.positions).matrix(321.0)
    assert np.allclose(sec.entries, 2.5 * S - np.eye(4))
    assert np.allclose(secular_from_green(S, np.zeros(4)), -np.eye(4))
    # column-scaled form S v - 1 has the same determinant
    assert np.linalg.det(S * 2.5 - np.eye(4)) == pytest.approx(np.linalg.det(sec.entries))
    assert sec.derivative.shape == (4, 4)


def test_pole_closeness_stability():
    # approaching a level from below the matrix grows smoothly like 1/distance
    p = params_for_model("nonsym")
    level = float(level_energy(p, 1, 0))
    g = GreenFunction(p, [0.0, 0.35])
    vals = [g.matrix(level - d)[0, 0].real * d for d in (1e-3, 1e-6, 1e-9)]
    assert vals[1] == pytest.approx(vals[2], rel=1e-4)
    assert math.isfinite(vals[0])
