"""Unperturbed Dirichlet spectrum of a rectangular billiard.

Energies follow ``E = ((m pi / lx)^2 + (n pi / ly)^2) / (2 M)`` with
normalized eigenfunctions ``sqrt(4 / (lx ly)) sin(m pi x / lx) sin(n pi y / ly)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "RectangleBilliard",
    "Mode",
    "ModeTable",
    "mode_energy",
    "eigenfunction_value",
    "enumerate_modes",
    "mode_table",
    "lowest_modes",
    "mean_level_density",
    "degenerate_clusters",
    "DEGENERACY_RTOL",
]

DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class RectangleBilliard:
    """Rectangle ``[0, lx] x [0, ly]`` holding a particle of mass ``mass``."""

    lx: float
    ly: float
    mass: float

    def __post_init__(self):
        for name in ("lx", "ly", "mass"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @classmethod
    def reference(cls) -> "RectangleBilliard":
        """The reference geometry (pi/3, 3/pi) with M = 2 pi, giving unit level density."""
        return cls(math.pi / 3, 3 / math.pi, 2 * math.pi)

    def contains(self, x, y, closed=True) -> bool:
        if closed:
            return 0.0 <= x <= self.lx and 0.0 <= y <= self.ly
        return 0.0 < x < self.lx and 0.0 < y < self.ly


@dataclass(frozen=True)
class Mode:
    m: int
    n: int
    energy: float
    index: int

    @property
    def label(self) -> tuple[int, int]:
        return (self.m, self.n)


def _energy(billiard: RectangleBilliard, m, n):
    # shared by the scalar and vectorized paths so both give identical bits
    kx = m * math.pi / billiard.lx
    ky = n * math.pi / billiard.ly
    return (kx * kx + ky * ky) / (2.0 * billiard.mass)


def mode_energy(billiard: RectangleBilliard, m: int, n: int) -> float:
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise ValueError(f"Dirichlet modes need integer m, n >= 1, got ({m}, {n})")
    return float(_energy(billiard, int(m), int(n)))


def eigenfunction_value(billiard: RectangleBilliard, mode, x: float, y: float) -> float:
    """Amplitude of the normalized unperturbed eigenfunction ``mode`` at ``(x, y)``.

    ``mode`` may be a :class:`Mode` or an ``(m, n)`` pair.
    """
    m, n = (mode.m, mode.n) if isinstance(mode, Mode) else mode
    if not billiard.contains(x, y):
        raise ValueError(f"point ({x}, {y}) lies outside the rectangle")
    norm = math.sqrt(4.0 / billiard.area)
    return norm * math.sin(m * math.pi * x / billiard.lx) * math.sin(n * math.pi * y / billiard.ly)


def mean_level_density(billiard: RectangleBilliard) -> float:
    return billiard.mass * billiard.area / (2.0 * math.pi)


def degenerate_clusters(energies, rtol=DEGENERACY_RTOL):
    """Group sorted energies into runs whose consecutive relative gaps are below ``rtol``.

    Returns a list of ``(start, stop)`` index pairs (``stop`` exclusive) covering
    every entry; singletons are clusters of length one.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.size == 0:
        return []
    gaps = np.diff(energies)
    scale = np.maximum(np.abs(energies[1:]), np.abs(energies[:-1]))
    breaks = np.flatnonzero(gaps > rtol * scale) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [energies.size]))
    return list(zip(starts.tolist(), stops.tolist()))


class ModeTable:
    """Energy-sorted block of unperturbed modes held as read-only arrays.

    This is the vectorized counterpart of a ``list[Mode]``; element access
    returns :class:`Mode` instances with 1-based ``index``.
    """

    def __init__(self, billiard: RectangleBilliard, m, n, energy):
        self.billiard = billiard
        self.m = np.asarray(m, dtype=np.int64)
        self.n = np.asarray(n, dtype=np.int64)
        self.energy = np.asarray(energy, dtype=float)
        for arr in (self.m, self.n, self.energy):
            arr.setflags(write=False)

    def __len__(self):
        return self.energy.size

    def __getitem__(self, i) -> Mode:
        if isinstance(i, slice):
            return ModeTable(self.billiard, self.m[i], self.n[i], self.energy[i])
        i = range(len(self))[i]
        return Mode(int(self.m[i]), int(self.n[i]), float(self.energy[i]), i + 1)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def labels(self):
        return list(zip(self.m.tolist(), self.n.tolist()))

    def position(self, m: int, n: int) -> int:
        """0-based position of mode ``(m, n)`` in the table."""
        hit = np.flatnonzero((self.m == m) & (self.n == n))
        if hit.size == 0:
            raise KeyError((m, n))
        return int(hit[0])

    def values_at(self, x: float, y: float) -> np.ndarray:
        """All eigenfunction amplitudes at one point, in table order."""
        b = self.billiard
        if not b.contains(x, y):
            raise ValueError(f"point ({x}, {y}) lies outside the rectangle")
        mmax = int(self.m.max()) if len(self) else 0
        nmax = int(self.n.max()) if len(self) else 0
        sx = np.sin(np.arange(mmax + 1) * math.pi * x / b.lx)
        sy = np.sin(np.arange(nmax + 1) * math.pi * y / b.ly)
        return math.sqrt(4.0 / b.area) * sx[self.m] * sy[self.n]

    def values_on_grid(self, xs, ys) -> np.ndarray:
        """Amplitudes on a tensor grid, shape ``(len(self), len(ys), len(xs))``."""
        b = self.billiard
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        sx = np.sin(np.outer(self.m, xs) * (math.pi / b.lx))
        sy = np.sin(np.outer(self.n, ys) * (math.pi / b.ly))
        return math.sqrt(4.0 / b.area) * sy[:, :, None] * sx[:, None, :]

    def clusters(self, rtol=DEGENERACY_RTOL):
        return degenerate_clusters(self.energy, rtol)


def _axis_bound(length, mass, e_max):
    # largest quantum number whose single-axis energy alone stays within e_max
    return int(math.floor(length * math.sqrt(2.0 * mass * e_max) / math.pi)) + 1


@lru_cache(maxsize=32)
def mode_table(billiard: RectangleBilliard, e_max: float) -> ModeTable:
    """Every mode with ``E <= e_max``, sorted by energy then ``(m, n)``."""
    if not e_max > 0:
        return ModeTable(billiard, [], [], [])
    mmax = _axis_bound(billiard.lx, billiard.mass, e_max)
    nmax = _axis_bound(billiard.ly, billiard.mass, e_max)
    m, n = np.meshgrid(np.arange(1, mmax + 1), np.arange(1, nmax + 1), indexing="ij")
    m, n = m.ravel(), n.ravel()
    energy = _energy(billiard, m.astype(float), n.astype(float))
    keep = energy <= e_max
    m, n, energy = m[keep], n[keep], energy[keep]
    order = np.lexsort((n, m, energy))
    return ModeTable(billiard, m[order], n[order], energy[order])


def enumerate_modes(billiard: RectangleBilliard, e_max: float) -> list[Mode]:
    return list(mode_table(billiard, float(e_max)))


@lru_cache(maxsize=32)
def lowest_modes(billiard: RectangleBilliard, count: int) -> ModeTable:
    """The ``count`` lowest modes in sorted order."""
    if count < 1:
        raise ValueError("count must be positive")
    area = billiard.area
    perimeter = 2.0 * (billiard.lx + billiard.ly)
    # two-term Weyl law count = (S k^2 - L k) / (4 pi), solved for k as a first guess
    k = (perimeter + math.sqrt(perimeter**2 + 16 * math.pi * area * count)) / (2 * area)
    e_max = 1.05 * k * k / (2 * billiard.mass) + 2.0 / mean_level_density(billiard)
    while True:
        table = mode_table(billiard, e_max)
        if len(table) >= count:
            return table[:count]
        e_max *= 1.25
