"""Special functions used by the Green function.

Hurwitz zeta by Euler-Maclaurin summation, transverse channel momenta, the
closed-form and brute-force lattice sums over the axial quantum number, and
Euler-Maclaurin tails of the evanescent-channel series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# B_{2k} / (2k)!
_BERNOULLI_OVER_FACTORIAL = np.array([
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
    43867.0 / 5109094217170944000.0,
    -174611.0 / 802857662698291200000.0,
    77683.0 / 14101100039391805440000.0,
])


def _em_remainder(s: float, x: np.ndarray, terms: int) -> np.ndarray:
    """Size of the first omitted Euler-Maclaurin correction for sum k^(-s)."""
    k = terms + 1
    rising = math.prod(s + i for i in range(2 * k - 1))
    return np.abs(_BERNOULLI_OVER_FACTORIAL[k - 1] * rising) * x ** (-s - 2 * k + 1)


def hurwitz_zeta(s: float, q, tol: float = 1e-13):
    """Hurwitz zeta(s, q) for real s != 1 and q > 0.

    Sums the first `shift` terms directly and the remainder by
    Euler-Maclaurin; the shift grows until the first omitted correction
    (which bounds the remainder for these completely monotone summands) is
    below `tol` relative to max(1, |zeta|).
    """
    if s == 1.0:
        raise ValueError("pole at s = 1")
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q must be positive")
    terms = 8
    shift = 8
    while True:
        x = q + shift
        if np.all(_em_remainder(s, x, terms) < 0.5 * tol):
            break
        shift *= 2
    k = np.arange(shift, dtype=float)
    head = np.sum((q[..., None] + k) ** (-s), axis=-1)
    tail = x ** (1.0 - s) / (s - 1.0) + 0.5 * x ** (-s)
    rising = s
    power = x ** (-s - 1.0)
    for j in range(terms):
        tail = tail + _BERNOULLI_OVER_FACTORIAL[j] * rising * power
        rising *= (s + 2 * j + 1) * (s + 2 * j + 2)
        power = power / (x * x)
    out = head + tail
    return float(out) if out.ndim == 0 else out


def hurwitz_zeta_half(q):
    """zeta(1/2, q), accurate to 1e-10 absolute for q in (0, 2]."""
    return hurwitz_zeta(0.5, q)


@dataclass(frozen=True)
class ChannelMomentum:
    n: int
    p: complex
    open: bool
    threshold: bool


def threshold_tolerance(eps: float) -> float:
    return 1e-12 * max(1.0, abs(eps))


def momenta(eps: float, lam: float, n) -> np.ndarray:
    """p_n = sqrt(eps - lam n): real for open channels, i|p| for closed ones."""
    k2 = eps - lam * np.asarray(n, dtype=float)
    return np.where(k2 >= 0, np.sqrt(np.abs(k2)) + 0j, 1j * np.sqrt(np.abs(k2)))


def channel_momenta(eps: float, lam: float, n_max: int) -> list[ChannelMomentum]:
    if n_max < math.ceil(eps / lam):
        raise ValueError("n_max must reach the first closed channel")
    n = np.arange(n_max + 1)
    p = momenta(eps, lam, n)
    tol = threshold_tolerance(eps)
    k2 = eps - lam * n
    return [ChannelMomentum(int(i), complex(pi), bool(k >= 0), bool(abs(k) < tol))
            for i, pi, k in zip(n, p, k2)]


def lattice_sum_closed(zeta_frac: float, a: float) -> complex:
    """sum_l exp(2 i pi l zeta) / (l + a) in closed form.

    At zeta = 0 the symmetric partial sums converge to the midpoint of the
    jump, pi cot(pi a).
    """
    if abs(a - round(a)) < 1e-12:
        raise ValueError("a is an integer: pole of the lattice sum")
    frac = zeta_frac - math.floor(zeta_frac)
    if frac == 0.0:
        return complex(math.pi / math.tan(math.pi * a))
    return math.pi * np.exp(-2j * math.pi * a * (frac - 0.5)) / math.sin(math.pi * a)


def lattice_sum_bruteforce(zeta_frac: float, a: float, tol: float = 1e-9) -> complex:
    """The same lattice sum from symmetric partial sums.

    Partial sums S_L over |l| <= L oscillate around the limit with an O(1/L)
    envelope; a smooth-bump weighted average of S_L over L in [L0, 2 L0]
    suppresses the oscillation faster than any power of L0.
    What is left is a smooth c1/L0 + c2/L0^2 error (c1 vanishes unless
    zeta = 0), removed by two Richardson steps in L0. L0 doubles until two
    successive estimates agree to `tol`.
    """
    if abs(a - round(a)) < 1e-9:
        raise ValueError("a is an integer: the lattice sum diverges")

    def averaged(L0: int) -> complex:
        l = np.arange(1, 2 * L0 + 1, dtype=float)
        pair = (np.exp(2j * np.pi * l * zeta_frac) / (l + a)
                + np.exp(-2j * np.pi * l * zeta_frac) / (a - l))
        partial = 1.0 / a + np.cumsum(pair)
        u = (np.arange(L0 + 1) + 0.5) / (L0 + 1)
        weight = np.exp(-1.0 / (u * (1.0 - u)))
        return complex(np.sum(weight * partial[L0 - 1:]) / np.sum(weight))

    def extrapolated(L0: int) -> complex:
        e1, e2, e4 = averaged(L0), averaged(2 * L0), averaged(4 * L0)
        r1, r2 = 2.0 * e2 - e1, 2.0 * e4 - e2
        return (4.0 * r2 - r1) / 3.0

    L0 = 512
    previous = None
    while L0 <= 2**20:
        estimate = extrapolated(L0)
        if previous is not None and abs(estimate - previous) < tol:
            return estimate
        previous = estimate
        L0 *= 2
    raise RuntimeError("lattice sum did not converge")


def _exp_power_derivatives(c: np.ndarray, order: int) -> list[np.ndarray]:
    """Coefficient tables for the derivatives of g(x) = exp(-c sqrt x)/sqrt x.

    Returns A with g^(m)(x) = exp(-c t) sum_k A[m][k] t^(-k), t = sqrt x.
    Uses d/dx [exp(-c t) t^-k] = exp(-c t) [-(c/2) t^-(k+1) - (k/2) t^-(k+2)].
    """
    width = 2 * order + 3
    tables = [np.zeros((width,) + c.shape)]
    tables[0][1] = 1.0
    for _ in range(order):
        prev = tables[-1]
        nxt = np.zeros_like(prev)
        for k in range(1, width - 2):
            if np.any(prev[k]):
                nxt[k + 1] -= 0.5 * c * prev[k]
                nxt[k + 2] -= 0.5 * k * prev[k]
        tables.append(nxt)
    return tables


class EvanescentTail:
    """Tail sums T(d) = sum_{k>=0} exp(-2 kappa_k d) / kappa_k for a fixed set
    of distances d, with kappa_k = sqrt(lam (start + k)), by Euler-Maclaurin.

    The derivative tables of g(x) = exp(-c sqrt x)/sqrt x depend only on d and
    lam, so they are built once; each call then costs a few array products.
    `start` must be large (tens) for the correction series to be accurate.
    """

    def __init__(self, d, lam: float, em_terms: int = 4):
        self.d = np.asarray(d, dtype=float)
        self.lam = float(lam)
        self.c = 2.0 * self.d * math.sqrt(lam)
        tables = _exp_power_derivatives(self.c, 2 * em_terms + 2)
        self.em_terms = em_terms
        # rows: g, g', and the odd derivatives used by each correction series
        self._value_rows = np.stack([tables[0]] + [tables[2 * j + 1] for j in range(em_terms)])
        self._deriv_rows = np.stack([tables[0], tables[1]] + [tables[2 * j + 2] for j in range(em_terms)])
        self._weights = -_BERNOULLI_OVER_FACTORIAL[:em_terms]

    def _rows(self, rows: np.ndarray, x: float) -> np.ndarray:
        t = math.sqrt(x)
        powers = t ** -np.arange(rows.shape[1], dtype=float)
        return np.exp(-self.c * t) * np.tensordot(powers, rows, axes=(0, 1))

    def __call__(self, start: float, derivative: bool = False) -> np.ndarray:
        x = float(start)
        if not derivative:
            g = self._rows(self._value_rows, x)
            with np.errstate(divide="ignore"):
                integral = 2.0 / self.c * np.exp(-self.c * math.sqrt(x))
            total = integral + 0.5 * g[0] + np.tensordot(self._weights, g[1:], axes=(0, 0))
            return total / math.sqrt(self.lam)
        g = self._rows(self._deriv_rows, x)
        total = -g[0] + 0.5 * g[1] + np.tensordot(self._weights, g[2:], axes=(0, 0))
        return -total / self.lam**1.5


def evanescent_tail(d, lam: float, start: float, derivative: bool = False, em_terms: int = 4):
    """One-shot EvanescentTail evaluation; the energy derivative uses
    d kappa_k / d eps = -1 / (2 kappa_k)."""
    return EvanescentTail(d, lam, em_terms)(start, derivative)
