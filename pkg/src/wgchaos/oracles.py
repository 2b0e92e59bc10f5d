"""Slow reference evaluations used to validate the fast Green function.

Nothing here is used on the production path. The resolvent oracle sums the
(n, l) basis directly; the diagonal oracle subtracts the 1/z singularity of
per-channel sums and extrapolates z -> 0.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .params import Boundary, WaveguideParams
from .specfun import hurwitz_zeta, lattice_sum_bruteforce, lattice_sum_closed


def _bump_weights(count: int) -> np.ndarray:
    u = (np.arange(count) + 0.5) / count
    w = np.exp(-1.0 / (u * (1.0 - u)))
    return w / w.sum()


def resolvent_bruteforce(z1: float, z2: float, eps: float, params: WaveguideParams,
                         axial_cutoff: int = 4096, decay_cutoff: float = 1e-13) -> complex:
    """sqrt(lam) sum_{n,l} f_l(z1) f_l(z2)* / (eps - eps_nl) by direct summation.

    For each channel the axial sum is a smooth-bump average of symmetric
    partial sums over cutoffs in [L, 2L]. Channels are added until the
    evanescent contribution exp(-2 kappa d)/kappa falls below `decay_cutoff`,
    d being the shortest path between the two points (including images).
    """
    lam = params.lam
    box = params.boundary is Boundary.BOX
    if box:
        d = min(abs(z1 - z2), z1 + z2, 2 - z1 - z2)
    else:
        sep = (z1 - z2) % 1.0
        d = min(sep, 1.0 - sep)
    if d <= 0:
        raise ValueError("points must be distinct")
    L = axial_cutoff
    weights = _bump_weights(L + 1)
    if box:
        l = np.arange(1, 2 * L + 1, dtype=float)
        numer = 2.0 * np.sin(math.pi * l * z1) * np.sin(math.pi * l * z2)
        axial = 0.25 * math.pi**2 * l**2
        blocks = None
    else:
        l = np.arange(-2 * L, 2 * L + 1, dtype=float)
        numer = np.exp(2j * math.pi * l * (z1 - z2))
        axial = math.pi**2 * (l - params.l0) ** 2
        # partial sum index k collects |l| <= k
        blocks = np.abs(l).astype(int)
    total = 0.0 + 0.0j
    n = 0
    while True:
        k2 = lam * n - eps
        if k2 > 0:
            kappa = math.sqrt(k2)
            if math.exp(-2 * kappa * d) / kappa < decay_cutoff:
                break
        terms = numer / (eps - lam * n - axial)
        if box:
            partial = np.cumsum(terms)
        else:
            partial = np.cumsum(np.bincount(blocks, weights=terms.real)
                                + 1j * np.bincount(blocks, weights=terms.imag))
        total += np.sum(weights * partial[L - 1 if box else L:2 * L + (0 if box else 1)])
        n += 1
    return complex(math.sqrt(lam) * total)


def _channel_mode(z: float, eps: float, lam: float, l0: float, n: np.ndarray) -> np.ndarray:
    """Per-channel axial sum at separation 0 < z < 1 via the cotangent form."""
    k2 = eps - lam * n
    p = np.where(k2 >= 0, np.sqrt(np.abs(k2)) + 0j, 1j * np.sqrt(np.abs(k2)))
    cot = lambda x: np.cos(x) / np.sin(x)
    with np.errstate(over="ignore", invalid="ignore"):
        plus = np.where(p.imag > 300, -1j, cot(math.pi * l0 + p))
        minus = np.where(p.imag > 300, 1j, cot(math.pi * l0 - p))
    return np.exp(2j * math.pi * l0 * z) / (2 * p) * (
        np.exp(2j * p * z) * (plus - 1j) - np.exp(-2j * p * z) * (minus - 1j))


def diagonal_by_extrapolation(eps: float, params: WaveguideParams, h: float = 0.02,
                              levels: int = 6, chunk: int = 1 << 20) -> float:
    """Regularized S(0) for periodic boundary conditions.

    Evaluates exp(-2 i pi l0 z) S(z) + 1/(sqrt(lam) z) at z = h / 2^k by an
    explicit channel sum and Richardson-extrapolates to z = 0. Channels are
    summed in chunks until exp(-2 kappa z) < 1e-17.
    """
    lam, l0 = params.lam, params.l0
    values = []
    for k in range(levels):
        z = h / 2**k
        n_top = int(eps / lam + (20.0 / z) ** 2 / lam) + 2
        re, im = [], []
        for start in range(0, n_top, chunk):
            n = np.arange(start, min(start + chunk, n_top), dtype=float)
            modes = _channel_mode(z, eps, lam, l0, n)
            re.append(math.fsum(modes.real))
            im.append(math.fsum(modes.imag))
        total = math.sqrt(lam) * complex(math.fsum(re), math.fsum(im))
        values.append(np.exp(-2j * math.pi * l0 * z) * total + 1.0 / (math.sqrt(lam) * z))
    table = [np.array(values)]
    for order in range(1, levels):
        prev = table[-1]
        table.append((2**order * prev[1:] - prev[:-1]) / (2**order - 1))
    return float(table[-1][0].real)


def diagonal_closed_form(eps: float, params: WaveguideParams, dps: int = 30) -> float:
    """The regularized diagonal written as a channel sum plus a Hurwitz zeta
    term, evaluated in multiprecision (mpmath)."""
    import mpmath as mp

    lam = mp.mpf(params.lam)
    l0 = mp.mpf(params.l0)
    eps_m = mp.mpf(eps)
    with mp.workdps(dps):
        n_open = int(mp.floor(eps_m / lam)) + 1 if eps >= 0 else 0
        total = mp.mpf(0)
        n = 0
        while True:
            k2 = eps_m - lam * n
            if k2 >= 0:
                p = mp.sqrt(k2)
                term = mp.sin(2 * p) / (p * (mp.cos(2 * mp.pi * l0) - mp.cos(2 * p)))
            else:
                kappa = mp.sqrt(-k2)
                # sin(2 i k) / (i k (c - cosh 2k)) = sinh 2k / (k (c - cosh 2k))
                term = mp.sinh(2 * kappa) / (kappa * (mp.cos(2 * mp.pi * l0) - mp.cosh(2 * kappa))) \
                    + 1 / kappa
                if kappa > 40 and abs(term) < mp.mpf(10) ** (-dps + 5):
                    break
            total += term
            n += 1
        q = n_open - eps_m / lam
        value = mp.sqrt(lam) * total - mp.zeta(mp.mpf(1) / 2, q)
    return float(value)


def hurwitz_zeta_mp(s: float, q: float) -> float:
    import mpmath as mp

    return float(mp.zeta(s, q))


def zeta_half_alternating(terms: int = 60) -> float:
    """zeta(1/2) from the alternating eta series with the Borwein-type
    acceleration of Cohen, Rodriguez Villegas and Zagier."""
    n = terms
    d = (3 + math.sqrt(8)) ** n
    d = (d + 1 / d) / 2
    b = -1.0
    c = -d
    total = 0.0
    for k in range(n):
        c = b - c
        total += c / math.sqrt(k + 1)
        b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1))
    eta = total / d
    return eta / (1.0 - 2.0 ** 0.5)


def lattice_sum_pair(zeta_frac: float, a: float, tol: float = 1e-9) -> tuple[complex, complex]:
    return lattice_sum_bruteforce(zeta_frac, a, tol), lattice_sum_closed(zeta_frac, a)


def check_hurwitz(points=(0.05, 0.25, 0.5, 1.0, 1.5, 2.0)) -> float:
    return max(abs(hurwitz_zeta(0.5, q) - hurwitz_zeta_mp(0.5, q)) for q in points)


@dataclass
class OracleResult:
    name: str
    max_error: float
    tol: float
    points: int
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tol)

    def to_dict(self) -> dict:
        return asdict(self) | {"max_error": float(self.max_error), "passed": self.passed}


def _green_points(rng: np.random.Generator, count: int) -> list[tuple[str, float, float, float]]:
    pts = []
    for i in range(count):
        model = ("nonsym", "tinv", "box")[i % 3]
        z1, z2 = np.sort(rng.uniform(0.02, 0.98, 2))
        if z2 - z1 < 0.02:
            z2 = min(z1 + 0.05, 0.99)
        eps = float(rng.uniform(-200.0, 3000.0))
        pts.append((model, float(z1), float(z2), eps))
    return pts


def check_green(count: int = 20, seed: int = 7) -> OracleResult:
    """Closed-form Green function against direct (n, l) resolvent sums.

    The error is relative to max(1, |S|) so that large values near poles
    are compared on the same footing.
    """
    from .greens import GreenFunction
    from .params import params_for_model

    t0 = time.perf_counter()
    worst = 0.0
    for model, z1, z2, eps in _green_points(np.random.default_rng(seed), count):
        params = params_for_model(model)
        fast = GreenFunction(params, [z1, z2]).matrix(eps)[0, 1]
        slow = resolvent_bruteforce(z1, z2, eps, params)
        worst = max(worst, abs(fast - slow) / max(1.0, abs(slow)))
    return OracleResult("green_function", worst, 1e-6, count, time.perf_counter() - t0)


def check_hurwitz_suite(seed: int = 11) -> OracleResult:
    """Fast Hurwitz zeta against mpmath at s = 1/2 and 3/2, plus zeta(1/2)
    from the accelerated alternating series."""
    t0 = time.perf_counter()
    q = np.concatenate([[0.05, 0.25, 0.5, 1.0, 1.5, 2.0], np.random.default_rng(seed).uniform(0.01, 3.0, 14)])
    worst = 0.0
    for s in (0.5, 1.5):
        for x in q:
            ref = hurwitz_zeta_mp(s, float(x))
            worst = max(worst, abs(float(hurwitz_zeta(s, float(x))) - ref) / max(1.0, abs(ref)))
    worst = max(worst, abs(float(hurwitz_zeta(0.5, 1.0)) - zeta_half_alternating()))
    return OracleResult("hurwitz_zeta", worst, 1e-10, 2 * q.size + 1, time.perf_counter() - t0)


def check_lattice(count: int = 12, seed: int = 13) -> OracleResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    cases = [(0.0, 0.3), (0.5, -0.25)] + [(float(rng.uniform(0, 1)), float(rng.uniform(-3, 3)))
                                          for _ in range(count - 2)]
    worst = 0.0
    for zeta_frac, a in cases:
        if abs(a - round(a)) < 1e-3:
            a += 0.1
        slow, fast = lattice_sum_pair(zeta_frac, a)
        worst = max(worst, abs(slow - fast) / max(1.0, abs(fast)))
    return OracleResult("lattice_sum", worst, 1e-8, len(cases), time.perf_counter() - t0)


def check_diagonal(energies=(-150.0, 35.7, 812.3, 2403.9)) -> OracleResult:
    """Regularized diagonal element against its multiprecision closed form."""
    from .greens import GreenFunction
    from .params import params_for_model

    t0 = time.perf_counter()
    params = params_for_model("nonsym")
    worst = 0.0
    for eps in energies:
        fast = GreenFunction(params, [0.0]).matrix(eps)[0, 0].real
        ref = diagonal_closed_form(eps, params)
        worst = max(worst, abs(fast - ref) / max(1.0, abs(ref)))
    return OracleResult("diagonal_element", worst, 1e-8, len(energies), time.perf_counter() - t0)


def oracle_suite() -> list[OracleResult]:
    return [check_green(), check_hurwitz_suite(), check_lattice(), check_diagonal()]
