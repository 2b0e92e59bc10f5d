"""Axial Green function of the waveguide and the secular matrix.

S(z, eps) is sqrt(lam) times the resolvent sum_nl f_l(z) f_l(0)* / (eps - eps_nl)
restricted to the waveguide axis. The axial sum is done in closed form per
transverse channel, leaving a sum over channels n. Open channels and the first
`closed_channels` evanescent ones are summed exactly; the rest is an
Euler-Maclaurin tail. Matrices over many positions are built from products of
per-channel exponential (or sine) tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import Boundary, ScattererSet, WaveguideParams
from .specfun import EvanescentTail, hurwitz_zeta, threshold_tolerance

POLE_GUARD = 1e-13
MAX_DECAY = 300.0      # largest kappa kept in exact channel tables
MIN_DECAY = 20.0       # kappa beyond which only the tail expansion is used


class PoleError(ArithmeticError):
    """Energy sits on (or numerically at) a pole of the Green function."""


class ThresholdError(PoleError):
    """Energy sits on a channel threshold eps = lam n."""


@dataclass(frozen=True)
class SecularMatrix:
    eps: float
    entries: np.ndarray
    model: str
    derivative: np.ndarray | None = None
    strengths: np.ndarray | None = None


@dataclass(frozen=True)
class _Channels:
    n_open: int
    q: float
    p: np.ndarray
    kappa_tail_start: float


def closed_channel_count(eps: float, lam: float) -> int:
    """Exactly summed evanescent channels: enough that the last has
    kappa >= MIN_DECAY, capped so no exponential table overflows."""
    want = math.ceil(MIN_DECAY**2 / lam) + 2
    cap = max(8, int(MAX_DECAY**2 / lam))
    return int(min(max(48, want), cap))


def _channels(eps: float, lam: float, closed: int) -> _Channels:
    if eps >= 0:
        n_open = int(math.floor(eps / lam)) + 1
        while n_open > 0 and lam * (n_open - 1) > eps:
            n_open -= 1
        while lam * n_open <= eps:
            n_open += 1
    else:
        n_open = 0
    n = np.arange(n_open + closed, dtype=float)
    k2 = eps - lam * n
    tol = threshold_tolerance(eps)
    near = np.abs(k2) < tol
    if np.any(near):
        raise ThresholdError(f"eps={eps!r} on threshold of channel {int(n[near][0])}")
    p = np.where(k2 > 0, np.sqrt(np.abs(k2)) + 0j, 1j * np.sqrt(np.abs(k2)))
    q = n_open - eps / lam
    return _Channels(n_open, q, p, closed + q)


def _offset_from_zero(eps: float, lam: float, n: np.ndarray, k: np.ndarray,
                      centre: np.ndarray, axial: np.ndarray) -> np.ndarray:
    """k - centre for open-channel momenta k, where centre**2 = axial is the
    axial energy of a nearby integrable level. Written through eps - eps_level
    so the offset keeps full relative accuracy right next to the level."""
    return (eps - (lam * n + axial)) / (k + centre)


def _expm1i(phi: np.ndarray) -> np.ndarray:
    """exp(i phi) - 1 without cancellation for small phi."""
    return 2j * np.sin(0.5 * phi) * np.exp(0.5j * phi)


class GreenFunction:
    """Green-function matrices for a fixed waveguide and fixed positions."""

    def __init__(self, params: WaveguideParams, positions, closed_channels: int | None = None):
        self.params = params
        self.positions = np.asarray(positions, dtype=float)
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")
        self.closed_channels = closed_channels
        self._sqrt_lam = math.sqrt(params.lam)
        z = self.positions
        self._sep = z[:, None] - z[None, :]
        self._lower = np.tril_indices(z.size, -1)
        zj, zi = z[self._lower[0]], z[self._lower[1]]
        d = zj - zi
        if params.boundary is Boundary.BOX:
            # image distances d, 2 - d, zj + zi, 2 - zj - zi, then the
            # diagonal images 2z, 2 - 2z and the full round trip 2
            parts = [d, 2.0 - d, zj + zi, 2.0 - zj - zi, 2 * z, 2.0 - 2 * z, [2.0]]
        else:
            parts = [d, 1.0 - d, [1.0]]
        sizes = np.cumsum([0] + [len(x) for x in parts])
        self._tail_slices = [slice(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self._tail = EvanescentTail(np.concatenate([np.asarray(x, float) for x in parts]), params.lam)

    def _tails(self, start: float, derivative: bool = False) -> list[np.ndarray]:
        values = self._tail(start, derivative)
        return [values[sl] for sl in self._tail_slices]

    def _closed(self, eps: float) -> int:
        if self.closed_channels is not None:
            return self.closed_channels
        return closed_channel_count(eps, self.params.lam)

    def matrix(self, eps: float, derivative: bool = False):
        """S (s x s, Hermitian) at eps; with derivative=True also dS/deps."""
        if self.params.boundary is Boundary.BOX:
            return self._box(float(eps), derivative)
        return self._periodic(float(eps), derivative)

    # periodic boundary ---------------------------------------------------
    def _periodic(self, eps: float, derivative: bool):
        lam, l0 = self.params.lam, self.params.l0
        ch = _channels(eps, lam, self._closed(eps))
        p = ch.p
        w = np.exp(2j * math.pi * l0)
        e2 = np.exp(2j * p)
        fwd_m1 = w * e2 - 1
        back_m1 = w / e2 - 1
        no = ch.n_open
        if no:
            k = p[:no].real
            n = np.arange(no, dtype=float)
            m = np.rint(k / math.pi + l0)
            off = _offset_from_zero(eps, lam, n, k, math.pi * (m - l0), math.pi**2 * (m - l0) ** 2)
            fwd_m1[:no] = _expm1i(2.0 * off)
            m = np.rint(k / math.pi - l0)
            off = _offset_from_zero(eps, lam, n, k, math.pi * (m + l0), math.pi**2 * (m + l0) ** 2)
            back_m1[:no] = _expm1i(-2.0 * off)
        if np.any(np.minimum(np.abs(fwd_m1), np.abs(back_m1)) < POLE_GUARD):
            raise PoleError(f"eps={eps!r} is at a pole")
        fwd = fwd_m1 + 1
        back = back_m1 + 1
        a = 1j / (p * fwd_m1)
        b = -1j / (p * back_m1)

        z = self.positions
        E = np.exp(2j * np.outer(z, p))
        F = 1.0 / E
        phase = np.exp(2j * math.pi * l0 * self._sep)
        body = (E * a) @ F.T + (F * b) @ E.T

        lo = self._lower
        t_near, t_far, t_loop = self._tails(ch.kappa_tail_start)
        tail = t_near + np.conj(w) * t_far
        S = np.zeros((z.size, z.size), dtype=complex)
        S[lo] = self._sqrt_lam * phase[lo] * (body[lo] - tail)

        closed = p[ch.n_open + 1:]
        kappa = closed.imag
        counter = np.sum(1.0 / kappa)
        diag_tail = 2.0 * math.cos(2 * math.pi * l0) * t_loop[0]
        diag = self._sqrt_lam * (np.sum(a + b).real + counter - diag_tail) \
            - hurwitz_zeta(0.5, ch.q + 1.0)
        S = S + S.conj().T
        S[np.diag_indices(z.size)] = diag
        if not derivative:
            return S

        dp = 1.0 / (2.0 * p)
        da = (-a / p + 2.0 * fwd / (p * fwd_m1**2)) * dp
        db = (-b / p + 2.0 * back / (p * back_m1**2)) * dp
        dbody = (E * da) @ F.T + (F * db) @ E.T \
            + 2j * self._sep * ((E * (a * dp)) @ F.T - (F * (b * dp)) @ E.T)
        dt_near, dt_far, dt_loop = self._tails(ch.kappa_tail_start, derivative=True)
        dtail = dt_near + np.conj(w) * dt_far
        dS = np.zeros_like(S)
        dS[lo] = self._sqrt_lam * phase[lo] * (dbody[lo] - dtail)
        dcounter = np.sum(0.5 / kappa**3)
        ddiag_tail = 2.0 * math.cos(2 * math.pi * l0) * dt_loop[0]
        ddiag = self._sqrt_lam * (np.sum(da + db).real + dcounter - ddiag_tail) \
            - hurwitz_zeta(1.5, ch.q + 1.0) / (2.0 * lam)
        dS = dS + dS.conj().T
        dS[np.diag_indices(z.size)] = ddiag
        return S, dS

    # hard-wall box -------------------------------------------------------
    def _box(self, eps: float, derivative: bool):
        lam = self.params.lam
        ch = _channels(eps, lam, self._closed(eps))
        z = self.positions
        s = z.size
        no = ch.n_open
        k = ch.p[:no].real
        m = np.rint(2 * k / math.pi)
        off = _offset_from_zero(eps, lam, np.arange(no, dtype=float), k, 0.5 * math.pi * m,
                                0.25 * math.pi**2 * m**2)
        sin2 = np.where(m % 2 == 0, 1.0, -1.0) * np.sin(2.0 * off)
        if np.any(np.abs(sin2) < POLE_GUARD):
            raise PoleError(f"eps={eps!r} is at a pole")
        # open channels: X = 2 sin(2k(1-z_j)) sin(2k z_i) / (k sin 2k), z_j >= z_i
        A = np.sin(2 * np.outer(1.0 - z, k))
        B = np.sin(2 * np.outer(z, k))
        wo = 2.0 / (k * sin2)
        X = (A * wo) @ B.T

        # closed channels in decaying-exponential form
        kap = ch.p[no:].imag
        damp = np.exp(-4 * kap)
        wc = 1.0 / (kap * (1.0 - damp))
        P = np.exp(-2 * np.outer(z, kap))
        Pinv = np.exp(2 * np.outer(z, kap))
        Q = np.exp(-2 * np.outer(1.0 - z, kap))
        far = np.exp(-2 * kap)
        terms = [
            ((P * wc) @ Pinv.T, +1),
            ((Q * (wc * far)) @ P.T, +1),
            ((P * wc) @ P.T, -1),
            ((Q * wc) @ Q.T, -1),
        ]
        X = X + sum(sign * m for m, sign in terms)

        lo = self._lower
        signs = [1, 1, -1, -1]
        start = ch.kappa_tail_start
        tails = self._tails(start)
        tail = sum(sg * tv for tv, sg in zip(tails[:4], signs))
        S = np.zeros((s, s))
        S[lo] = -self._sqrt_lam * (X[lo].real + tail)

        counter = np.sum(1.0 / kap[1:])
        diag_tail = tails[4] + tails[5] - 2.0 * tails[6][0]
        diag = -self._sqrt_lam * (np.diag(X).real - counter - diag_tail) \
            - hurwitz_zeta(0.5, ch.q + 1.0)
        S = S + S.T
        S[np.diag_indices(s)] = diag
        if not derivative:
            return S

        # d/deps = (1 / 2k) d/dk on open channels
        dA = 2 * (1.0 - z)[:, None] * np.cos(2 * np.outer(1.0 - z, k))
        dB = 2 * z[:, None] * np.cos(2 * np.outer(z, k))
        scale = wo / (2 * k)
        log_w = 1.0 / k + 2.0 * np.cos(2 * k) / sin2
        dX = (dA * scale) @ B.T + (A * scale) @ dB.T - (A * (scale * log_w)) @ B.T
        # closed channels: f = exp(-2 kap d) wc; df/deps = f (2d + 1/kap + 4 damp/(1-damp)) / (2 kap)
        rate = (1.0 / kap + 4 * damp / (1.0 - damp)) / (2 * kap)
        full = [z[:, None] - z[None, :], 2.0 - z[:, None] + z[None, :],
                z[:, None] + z[None, :], 2.0 - z[:, None] - z[None, :]]
        mats_rate = [
            (P * (wc * rate)) @ Pinv.T,
            (Q * (wc * far * rate)) @ P.T,
            (P * (wc * rate)) @ P.T,
            (Q * (wc * rate)) @ Q.T,
        ]
        mats_dist = [
            (P * (wc / kap)) @ Pinv.T,
            (Q * (wc * far / kap)) @ P.T,
            (P * (wc / kap)) @ P.T,
            (Q * (wc / kap)) @ Q.T,
        ]
        for sg, mr, md, dd in zip(signs, mats_rate, mats_dist, full):
            dX = dX + sg * (mr + dd * md)
        dtails = self._tails(start, derivative=True)
        dtail = sum(sg * tv for tv, sg in zip(dtails[:4], signs))
        dS = np.zeros((s, s))
        dS[lo] = -self._sqrt_lam * (dX[lo].real + dtail)
        dcounter = np.sum(0.5 / kap[1:] ** 3)
        ddiag_tail = dtails[4] + dtails[5] - 2.0 * dtails[6][0]
        ddiag = -self._sqrt_lam * (np.diag(dX).real - dcounter - ddiag_tail) \
            - hurwitz_zeta(1.5, ch.q + 1.0) / (2.0 * lam)
        dS = dS + dS.T
        dS[np.diag_indices(s)] = ddiag
        return S, dS


def greens_axis(z: float, eps: float, params: WaveguideParams, tol: float = 1e-12) -> complex:
    """S(z, eps) on the axis of a periodic waveguide, |z| < 1, z != 0.

    The evanescent tail is always summed to machine precision, so `tol` only
    bounds what is acceptable and is kept for interface symmetry.
    """
    if params.boundary is not Boundary.PERIODIC:
        raise ValueError("the box Green function is not translation invariant; use GreenFunction")
    z = float(z)
    if not (0 < abs(z) < 1):
        raise ValueError("need 0 < |z| < 1")
    value = GreenFunction(params, [0.0, abs(z)]).matrix(eps)[1, 0]
    return complex(value if z > 0 else np.conj(value))


def greens_diag(eps: float, params: WaveguideParams, v_j: float, z: float | None = None) -> float:
    """v_j times the regularized diagonal element, minus one.

    For the box the diagonal depends on the position `z`.
    """
    if params.boundary is Boundary.BOX:
        if z is None:
            raise ValueError("box diagonal needs the scatterer position")
        pos = [float(z)]
    else:
        pos = [0.0]
    if v_j == 0:
        return -1.0
    value = GreenFunction(params, pos).matrix(eps)[0, 0].real
    return float(v_j * value - 1.0)


def secular_from_green(S: np.ndarray, strengths: np.ndarray) -> np.ndarray:
    root_v = np.sqrt(np.asarray(strengths, dtype=float))
    return root_v[:, None] * S * root_v[None, :] - np.eye(root_v.size)


def build_secular_matrix(eps: float, scatterers: ScattererSet, params: WaveguideParams,
                         derivative: bool = False, green: GreenFunction | None = None) -> SecularMatrix:
    """M = sqrt(v) S sqrt(v) - 1, Hermitian, with the same null space (after
    the sqrt(v) rescaling) as the column-scaled form S v - 1."""
    green = green or GreenFunction(params, scatterers.positions)
    out = green.matrix(eps, derivative)
    root_v = np.sqrt(scatterers.strengths)
    if derivative:
        S, dS = out
        return SecularMatrix(eps, secular_from_green(S, scatterers.strengths), scatterers.model.value,
                             root_v[:, None] * dS * root_v[None, :], scatterers.strengths)
    return SecularMatrix(eps, secular_from_green(out, scatterers.strengths), scatterers.model.value,
                         strengths=scatterers.strengths)
