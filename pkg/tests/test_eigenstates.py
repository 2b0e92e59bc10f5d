import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from wgchaos.eigenstates import (NullSpaceError, RootTooCloseError, StateBuilder, analytic_norm, dump_states,
                                 expand_state, level_weight_sum, local_spacing, solve_overlaps, state_overlap,
                                 transition_overlaps)
from wgchaos.greens import build_secular_matrix
from wgchaos.params import generate_scatterers, level_energy, params_for_model


def _overlap_bound(a, b):
    """Rigorous bound on |<a|b>| restricted to the common stored levels,
    given that the full overlap vanishes."""
    ka = {(int(n), int(l)) for n, l in zip(a.n, a.l)}
    kb = {(int(n), int(l)) for n, l in zip(b.n, b.l)}
    wa = a.absolute_coeffs()
    wb = b.absolute_coeffs()
    a_not_b = sum(abs(c) ** 2 for n, l, c in zip(a.n, a.l, wa) if (int(n), int(l)) not in kb)
    b_not_a = sum(abs(c) ** 2 for n, l, c in zip(b.n, b.l, wb) if (int(n), int(l)) not in ka)
    return math.sqrt(a.norm_defect * (b.norm_defect + b_not_a)) + math.sqrt(a_not_b * b.norm_defect)


def test_normalization(nonsym4):
    builder = StateBuilder(nonsym4)
    for i in range(100, 1100, 97):
        st = builder.expand(i)
        assert np.sum(st.weights) == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= st.norm_defect < 0.02
        assert np.sum(np.abs(st.absolute_coeffs()) ** 2) == pytest.approx(1.0 - st.norm_defect, abs=1e-12)


def test_analytic_norm_matches_fresh_null_space(nonsym4):
    spec = nonsym4
    for i in (150, 600, 1100):
        sec = build_secular_matrix(float(spec.eps[i]), spec.scatterers, spec.params, derivative=True)
        _, y = solve_overlaps(sec)
        assert abs(abs(np.vdot(y, spec.null_vectors[i])) - 1.0) < 1e-8
        assert analytic_norm(y, sec.derivative, spec.params.lam) == pytest.approx(spec.norms[i], rel=1e-8)


def test_tail_shrinks_like_inverse_root_of_band(nonsym4):
    i = 700
    small = StateBuilder(nonsym4, 500.0).expand(i).norm_defect
    large = StateBuilder(nonsym4, 2000.0).expand(i).norm_defect
    assert large < small
    assert 0.35 < large / small < 0.7


def test_orthogonality_within_tail_bound(nonsym4):
    builder = StateBuilder(nonsym4)
    states = [builder.expand(i) for i in range(500, 520)]
    for a in states[:6]:
        for b in states:
            if a.line.alpha == b.line.alpha:
                continue
            assert abs(state_overlap(a, b)) <= _overlap_bound(a, b) + 1e-12


def test_completeness_of_low_level(nonsym4):
    # sum over states of |<00|alpha>|^2; the missing part sits above alpha_max
    total = level_weight_sum(nonsym4, 0, 0)
    assert 0.995 < total <= 1.0 + 1e-9


def test_transition_overlaps_closed_form(make_spectrum):
    prev = make_spectrum("nonsym", 1, 1e6, 1002, 600)
    params = prev.params
    full = generate_scatterers("nonsym", 2, 1e6, 1002)
    nxt = make_spectrum("nonsym", 2, 1e6, 1002, 600)
    assert np.array_equal(full.positions[:1], prev.scatterers.positions)
    # sum over beta of |<beta|alpha>|^2 close to one for a mid-window alpha
    col = 300
    P = np.abs(transition_overlaps(prev, nxt, None, [col])[:, 0]) ** 2
    assert 0.98 < P.sum() <= 1.0 + 1e-9
    # closed form against the explicit coefficient lists
    bp, bn = StateBuilder(prev, 4000.0), StateBuilder(nxt, 4000.0)
    a = bn.expand(col)
    rows = np.argsort(-P)[:5]
    exact = transition_overlaps(prev, nxt, rows, [col])[:, 0]
    for r, value in zip(rows, exact):
        b = bp.expand(int(r))
        assert abs(state_overlap(b, a) - value) <= _overlap_bound(b, a) + 1e-12
    assert params == nxt.params


def test_transition_requires_shared_scatterers(make_spectrum):
    # periodic layouts always start at z = 0, so change the strength instead
    a = make_spectrum("nonsym", 1, 1e6, 1002, 300)
    b = make_spectrum("nonsym", 2, 0.5, 1002, 300)
    with pytest.raises(ValueError):
        transition_overlaps(a, b, [0], [0])


def test_pinned_states_at_zero_strength(make_spectrum):
    spec = make_spectrum("nonsym", 3, 0.0, 5, 300)
    st = StateBuilder(spec).expand(120)
    assert st.meta["pinned"]
    assert st.norm_defect == 0.0
    assert np.sum(st.weights) == pytest.approx(1.0)
    assert np.allclose(st.eps_nl, spec.eps[120])


def test_root_on_level_is_rejected(nonsym4):
    spec = nonsym4
    eps = spec.eps.copy()
    level = float(level_energy(spec.params, 1, 2))
    i = int(np.argmin(np.abs(eps - level)))
    eps[i] = level
    bad = dataclasses.replace(spec, eps=eps)
    with pytest.raises(RootTooCloseError):
        StateBuilder(bad).expand(i)


def test_expand_with_tolerance(nonsym4):
    st = expand_state(nonsym4, 400, band=500.0, tol=1e-4, max_band=4000.0)
    assert st.meta["tol"] == 1e-4
    assert st.meta["converged"] == (st.norm_defect <= 1e-4)
    assert st.norm_defect < StateBuilder(nonsym4, 500.0).expand(400).norm_defect
    with pytest.raises(ValueError):
        expand_state(nonsym4, 400, tol=0.1)


def test_null_space_errors():
    p = params_for_model("nonsym")
    sc = generate_scatterers("nonsym", 3, 1e6, 5)
    sec = build_secular_matrix(123.456, sc, p)
    with pytest.raises(NullSpaceError):
        solve_overlaps(sec)


def test_local_spacing():
    e = np.arange(1000) * 0.5
    assert local_spacing(e, 0) == pytest.approx(0.5)
    assert local_spacing(e, 999) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        local_spacing(e[:2], 0)


def test_dump_states(tmp_path, nonsym4):
    builder = StateBuilder(nonsym4)
    states = [builder.expand(i) for i in (200, 201)]
    path = tmp_path / "st.csv"
    dump_states(states, path, threshold=1e-6)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert {int(r["alpha"]) for r in rows} == {s.line.alpha for s in states}
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["threshold"] == 1e-6 and len(side["states"]) == 2
    written = sum(1 for r in rows if int(r["alpha"]) == states[0].line.alpha)
    assert written == int(np.sum(states[0].weights > 1e-6))
