"""Model parameters, scatterer layouts and the integrable spectrum.

Energies are dimensionless, eps = m L^2 (E - hbar w_perp) / (2 hbar^2), and
scatterer strengths are measured in units of the interaction scale V0.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA = math.pi**3 * (1.0 + math.sqrt(5.0))
DEFAULT_L0 = 0.25 - math.exp(-4.0)


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    BOX = "box"


class Model(str, enum.Enum):
    NONSYM = "nonsym"
    SYM = "sym"
    TINV = "tinv"
    BOX = "box"

    @property
    def boundary(self) -> Boundary:
        return Boundary.BOX if self is Model.BOX else Boundary.PERIODIC

    @property
    def time_reversal(self) -> bool:
        return self is not Model.NONSYM

    @classmethod
    def parse(cls, name: str | Model) -> Model:
        if isinstance(name, Model):
            return name
        aliases = {
            "nonsymmetric": "nonsym", "non-symmetric": "nonsym",
            "symmetric": "sym", "t-invariant": "tinv", "tinvariant": "tinv",
            "hardwallbox": "box",
        }
        key = name.strip().lower()
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class WaveguideParams:
    lam: float
    l0: float
    boundary: Boundary

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.boundary is Boundary.BOX and self.l0 != 0.0:
            raise ValueError("hard-wall box requires l0 = 0")

    @property
    def time_reversal(self) -> bool:
        return self.boundary is Boundary.BOX or self.l0 == 0.0

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "l0": self.l0, "boundary": self.boundary.value}


def build_params(lam: float, l0: float, boundary: Boundary | str) -> WaveguideParams:
    return WaveguideParams(float(lam), float(l0), Boundary(boundary))


def params_for_model(model: Model | str, lam: float = DEFAULT_LAMBDA,
                     l0: float = DEFAULT_L0) -> WaveguideParams:
    """Waveguide parameters implied by a model: the vector potential is only
    switched on for the non-symmetric and symmetric models."""
    model = Model.parse(model)
    if model in (Model.NONSYM, Model.SYM):
        return build_params(lam, l0, Boundary.PERIODIC)
    return build_params(lam, 0.0, model.boundary)


@dataclass(frozen=True)
class ScattererSet:
    model: Model
    positions: np.ndarray
    strengths: np.ndarray
    seed: int | None = None
    shifts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        vs = np.asarray(self.strengths, dtype=float)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "strengths", vs)
        object.__setattr__(self, "shifts", np.asarray(self.shifts, dtype=float))
        if pos.ndim != 1 or pos.size == 0 or pos.shape != vs.shape:
            raise ValueError("positions and strengths must be equal-length 1d arrays")
        if np.any(vs < 0):
            raise ValueError("strengths must be non-negative")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        if self.model is Model.BOX:
            if pos[0] <= 0 or pos[-1] >= 1:
                raise ValueError("box positions must lie strictly inside (0, 1)")
        elif pos[0] < 0 or pos[-1] >= 1:
            raise ValueError("periodic positions must lie in [0, 1)")

    @property
    def s(self) -> int:
        return int(self.positions.size)

    def subset(self, count: int) -> ScattererSet:
        """The first `count` scatterers, same model and seed."""
        return ScattererSet(self.model, self.positions[:count], self.strengths[:count],
                            self.seed, self.shifts[:count])

    def with_strengths(self, strengths) -> ScattererSet:
        vs = np.broadcast_to(np.asarray(strengths, dtype=float), self.positions.shape)
        return ScattererSet(self.model, self.positions, vs.copy(), self.seed, self.shifts)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "s": self.s,
            "seed": self.seed,
            "positions": [float(x) for x in self.positions],
            "strengths": [float(x) for x in self.strengths],
            "shifts": [float(x) for x in self.shifts],
        }


def draw_shifts(s: int, seed: int) -> np.ndarray:
    """Shifts uniform on [-0.25, 0.25); one draw of length s per (s, seed)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.25, 0.25, s)


SWEEP_SEED_BASE = 1000


def sweep_seed(s: int, base: int = SWEEP_SEED_BASE) -> int:
    """Seed used for an s-scatterer layout in sweeps. It does not depend on
    the model, so the non-symmetric and T-invariant layouts coincide."""
    return int(base) + int(s)


def generate_scatterers(model: Model | str, s: int, v: float, seed: int) -> ScattererSet:
    """Scatterer layout for one of the four models.

    The periodic layouts put the first scatterer at the origin and the rest at
    (j - 1 + shift_j) / s. The symmetric layout mirrors the first half of that
    list about z_s / 2. The box spreads s scatterers over (j + shift_j)/(s + 1).
    """
    model = Model.parse(model)
    if s < 1:
        raise ValueError("need at least one scatterer")
    if v < 0:
        raise ValueError("strength must be non-negative")
    shifts = draw_shifts(s, seed)
    j = np.arange(1, s + 1)
    if model is Model.BOX:
        pos = (j + shifts) / (s + 1)
    else:
        shifts[0] = 0.0
        base = (j - 1 + shifts) / s
        if model is Model.SYM:
            pos = np.empty(s)
            half = s // 2
            zs = base[-1]
            pos[:half] = base[:half]
            pos[s - half:] = zs - base[:half][::-1]
            if s % 2:
                pos[half] = 0.5 * zs
        else:
            pos = base
    if np.any(np.diff(pos) <= 0):
        raise ValueError(f"seed {seed} produced coincident or unordered positions for s={s}")
    return ScattererSet(model, pos, np.full(s, float(v)), seed, shifts)


@dataclass(frozen=True)
class IntegrableLevel:
    n: int
    l: int
    eps: float


@dataclass(frozen=True)
class LevelTable:
    """Integrable levels as parallel arrays sorted by (eps, n, l)."""
    n: np.ndarray
    l: np.ndarray
    eps: np.ndarray

    def __len__(self) -> int:
        return int(self.eps.size)

    def window(self, eps_min: float, eps_max: float) -> LevelTable:
        lo = np.searchsorted(self.eps, eps_min, side="left")
        hi = np.searchsorted(self.eps, eps_max, side="right")
        return LevelTable(self.n[lo:hi], self.l[lo:hi], self.eps[lo:hi])


def level_energy(params: WaveguideParams, n, l):
    n = np.asarray(n, dtype=float)
    l = np.asarray(l, dtype=float)
    if params.boundary is Boundary.BOX:
        return params.lam * n + 0.25 * math.pi**2 * l**2
    return params.lam * n + math.pi**2 * (l - params.l0) ** 2


def level_table(params: WaveguideParams, eps_max: float, eps_min: float = -np.inf) -> LevelTable:
    ns, ls = [], []
    n_top = int(math.floor(eps_max / params.lam)) if eps_max >= 0 else -1
    for n in range(n_top + 1):
        room = eps_max - params.lam * n
        if room < 0:
            break
        radius = math.sqrt(room) / math.pi
        if params.boundary is Boundary.BOX:
            l = np.arange(1, int(math.floor(2 * radius)) + 2)
        else:
            l = np.arange(int(math.ceil(params.l0 - radius)) - 1,
                          int(math.floor(params.l0 + radius)) + 2)
        ns.append(np.full(l.size, n))
        ls.append(l)
    if not ns:
        empty = np.zeros(0, dtype=np.int64)
        return LevelTable(empty, empty, np.zeros(0))
    n = np.concatenate(ns).astype(np.int64)
    l = np.concatenate(ls).astype(np.int64)
    eps = level_energy(params, n, l)
    keep = (eps <= eps_max) & (eps >= eps_min)
    n, l, eps = n[keep], l[keep], eps[keep]
    order = np.lexsort((l, n, eps))
    return LevelTable(n[order], l[order], eps[order])


def integrable_levels(params: WaveguideParams, eps_max: float) -> list[IntegrableLevel]:
    if not eps_max > 0:
        raise ValueError("eps_max must be positive")
    table = level_table(params, eps_max)
    return [IntegrableLevel(int(a), int(b), float(c)) for a, b, c in zip(table.n, table.l, table.eps)]


def level_count(params: WaveguideParams, eps: float) -> int:
    """Number of integrable levels with energy <= eps."""
    total = 0
    n = 0
    while params.lam * n <= eps:
        room = eps - params.lam * n
        radius = math.sqrt(room) / math.pi
        if params.boundary is Boundary.BOX:
            total += int(math.floor(2 * radius))
        else:
            total += int(math.floor(params.l0 + radius)) - int(math.ceil(params.l0 - radius)) + 1
        n += 1
    return total


def mean_level_spacing(params: WaveguideParams | None, eps_window, levels=None) -> float:
    """Mean spacing of the integrable levels inside `eps_window`.

    `levels` may supply an explicit sorted energy list instead of the
    waveguide spectrum.
    """
    lo, hi = float(eps_window[0]), float(eps_window[1])
    if levels is None:
        energies = level_table(params, hi, lo).eps
    else:
        energies = np.asarray(levels, dtype=float)
        energies = energies[(energies >= lo) & (energies <= hi)]
    if energies.size < 100:
        raise ValueError(f"window [{lo}, {hi}] holds only {energies.size} levels (need 100)")
    return float((energies[-1] - energies[0]) / (energies.size - 1))


def manifest_json(params: WaveguideParams, scatterers: ScattererSet) -> str:
    record = params.to_dict() | scatterers.to_dict()
    return json.dumps(record, sort_keys=True)
