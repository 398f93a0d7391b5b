"""Small rectangular impurity treated as a delta scatterer in a truncated basis.

A patch of area ``W`` and height ``U1`` acts on low-energy states like a
delta potential of strength ``v1 = U1 W`` provided the basis is cut off at
the energy where the wavelength reaches the patch size, ``E_N ~ 1 / (M W)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._roots import check_off_poles
from .basis import RectangleBilliard, mode_table
from .pointscatterer import PointSpectrum, SeriesConfig, _series, solve_secular

__all__ = [
    "RectImpurity",
    "v1_from_potential",
    "cutoff_energy",
    "cutoff_index",
    "geometric_mean_distance",
    "matched_cutoff_energy",
    "truncated_basis",
    "truncated_secular_solve",
    "vbar_from_v",
    "vbar_from_v_approx",
]

AREA_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class RectImpurity:
    """Constant potential ``u1`` on an axis-parallel rectangle centred at ``center``."""

    center: tuple[float, float]
    dlx: float
    dly: float
    u1: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (self.dlx > 0 and self.dly > 0):
            raise ValueError(f"impurity side lengths must be positive, got ({self.dlx}, {self.dly})")
        if not math.isfinite(self.u1):
            raise ValueError(f"potential height must be finite, got {self.u1!r}")

    @classmethod
    def reference(cls, v1: float) -> "RectImpurity":
        """The reference patch (area 1/900) with strength ``v1 = u1 * area``."""
        dlx, dly = 3.53830e-2, 3.14023e-2
        return cls((0.622482, 0.275835), dlx, dly, v1 / (dlx * dly))

    @property
    def area(self) -> float:
        return self.dlx * self.dly

    @property
    def v1(self) -> float:
        return v1_from_potential(self.u1, self.area)

    @property
    def size(self) -> float:
        return math.sqrt(self.area)

    @property
    def x_extent(self) -> tuple[float, float]:
        return (self.center[0] - 0.5 * self.dlx, self.center[0] + 0.5 * self.dlx)

    @property
    def y_extent(self) -> tuple[float, float]:
        return (self.center[1] - 0.5 * self.dly, self.center[1] + 0.5 * self.dly)

    def with_potential(self, u1: float) -> "RectImpurity":
        return RectImpurity(self.center, self.dlx, self.dly, u1)

    def scaled(self, factor: float) -> "RectImpurity":
        """Same centre and strength ``v1``, area multiplied by ``factor``."""
        s = math.sqrt(factor)
        return RectImpurity(self.center, self.dlx * s, self.dly * s, self.u1 / factor)

    def validate(self, billiard: RectangleBilliard, allow_full=False):
        (x0, x1), (y0, y1) = self.x_extent, self.y_extent
        if allow_full:
            ok = 0 <= x0 and x1 <= billiard.lx and 0 <= y0 and y1 <= billiard.ly
        else:
            ok = 0 < x0 and x1 < billiard.lx and 0 < y0 and y1 < billiard.ly
        if not ok:
            raise ValueError("impurity rectangle is not inside the billiard")
        if self.area / billiard.area > AREA_WARN_FRACTION:
            warnings.warn(f"impurity covers {self.area / billiard.area:.1%} of the billiard; "
                          "the pointlike picture needs a much smaller patch", stacklevel=2)


def v1_from_potential(u1: float, omega_area: float) -> float:
    if not omega_area > 0:
        raise ValueError(f"impurity area must be positive, got {omega_area!r}")
    return u1 * omega_area


def cutoff_energy(billiard: RectangleBilliard, omega_area: float, scale: float = 1.0) -> float:
    """``scale / (M W)``: the energy where the patch stops looking pointlike."""
    if not omega_area > 0:
        raise ValueError(f"impurity area must be positive, got {omega_area!r}")
    return scale / (billiard.mass * omega_area)


def cutoff_index(billiard: RectangleBilliard, omega_area: float, scale: float = 1.0) -> int:
    """Number of unperturbed modes with ``E_n <= scale / (M W)``."""
    count = len(mode_table(billiard, cutoff_energy(billiard, omega_area, scale)))
    if count < 2:
        raise ValueError(f"cutoff admits only {count} mode(s); the impurity is too large to be pointlike")
    return count


def geometric_mean_distance(a: float, b: float) -> float:
    """Geometric mean distance between two uniform random points of an ``a x b`` rectangle."""
    d = math.hypot(a, b)
    log_gmd = (
        math.log(d)
        - (a * a / (6 * b * b)) * math.log(math.sqrt(1 + b * b / (a * a)))
        - (b * b / (6 * a * a)) * math.log(math.sqrt(1 + a * a / (b * b)))
        + (2 * a / (3 * b)) * math.atan(b / a)
        + (2 * b / (3 * a)) * math.atan(a / b)
        - 25.0 / 12.0
    )
    return math.exp(log_gmd)


def matched_cutoff_energy(billiard: RectangleBilliard, impurity: RectImpurity) -> float:
    """Sharp basis cutoff whose delta-model log term equals the patch's own.

    A sharp momentum cutoff ``K`` gives the coincident-point kernel
    ``(M / pi) ln(K / q)``; averaging the exact kernel over the patch gives
    ``(M / pi) ln(2 exp(-gamma) / (q r))`` with ``r`` the geometric mean
    distance.  Equating the two fixes ``K = 2 exp(-gamma) / r``.  For a square
    this is ``E ~ 3.15 / (M W)``.
    """
    r = geometric_mean_distance(impurity.dlx, impurity.dly)
    k_cut = 2.0 * math.exp(-np.euler_gamma) / r
    return k_cut * k_cut / (2.0 * billiard.mass)


def _resolve_cutoff(billiard, impurity, cutoff) -> float:
    if cutoff == "matched":
        return matched_cutoff_energy(billiard, impurity)
    if cutoff == "simple":
        return cutoff_energy(billiard, impurity.area)
    scale = float(cutoff)
    if not scale > 0:
        raise ValueError(f"cutoff scale must be positive, got {cutoff!r}")
    return cutoff_energy(billiard, impurity.area, scale)


def truncated_basis(billiard: RectangleBilliard, impurity: RectImpurity, cutoff="matched"):
    """Modes kept by the delta model: ``E_n`` up to the chosen cutoff energy.

    ``cutoff`` is ``"matched"`` (see :func:`matched_cutoff_energy`),
    ``"simple"`` (``1 / (M W)``) or a positive multiplier of ``1 / (M W)``.
    """
    table = mode_table(billiard, _resolve_cutoff(billiard, impurity, cutoff))
    if len(table) < 2:
        raise ValueError("cutoff admits fewer than 2 modes")
    return table


def truncated_secular_solve(billiard: RectangleBilliard, impurity: RectImpurity, window, *,
                            cutoff="matched", tol: float = 1e-12, validity: float = 0.5,
                            threads: int = 1) -> PointSpectrum:
    """Roots of ``sum_{n <= N} phi_n(x1)^2 / (w - E_n) = 1 / v1`` inside ``window``.

    Energies at or above ``validity * E_N`` are refused because the pointlike
    picture needs ``w << E_N``.  An attractive patch also gets its single
    bound root below the ground level when the window reaches there.
    """
    impurity.validate(billiard)
    v1 = impurity.v1
    if v1 == 0:
        raise ValueError("v1 = 0: the impurity does not perturb the spectrum")
    table = truncated_basis(billiard, impurity, cutoff)
    e_lo, e_hi = float(window[0]), float(window[1])
    top = float(table.energy[-1])
    if e_hi >= validity * top:
        raise ValueError(f"window top {e_hi} exceeds the pointlike range "
                         f"({validity} x E_N = {validity * top:.6g})")
    phi = table.values_at(*impurity.center)
    weight = phi * phi
    keep = weight >= 1e-12 * 4.0 / billiard.area
    energy, w = table.energy[keep], weight[keep]
    target = 1.0 / v1

    def f(omega):
        return float(np.sum(w / (omega - energy))) - target

    def expansion(omega):
        c = np.zeros(len(table))
        c[keep] = phi[keep] / (omega - energy)
        return c / np.linalg.norm(c)

    # |sum| <= sum(w) / (E_1 - w) below the ground level, which bounds any bound root
    floor = energy[0] - abs(v1) * float(w.sum()) - 1.0
    lines, unresolved = solve_secular(
        energy, f, (e_lo, e_hi), tol,
        below_ground=(1.0, floor), expansion=expansion, modes=table, threads=threads,
    )
    persistent = [float(e) for e in table.energy[~keep] if e_lo <= e <= e_hi]
    return PointSpectrum(lines, persistent, unresolved, target)


def vbar_from_v(billiard: RectangleBilliard, x1, v1: float, lam: float, n_cutoff: int, omega: float,
                config: SeriesConfig | None = None) -> float:
    """Inverse formal strength ``1 / vbar`` equivalent to a truncated delta of strength ``v1``.

    The modes above ``n_cutoff`` up to ``config.n_max`` are summed explicitly,
    the rest by the mean-density tail when ``config.tail_correction`` is set.
    """
    config = config or SeriesConfig()
    if v1 == 0:
        raise ValueError("v1 must be nonzero")
    series = _series(billiard, x1, config)
    n_cutoff = int(n_cutoff)
    if not 1 <= n_cutoff < config.n_max:
        raise ValueError(f"n_cutoff must lie in [1, n_max), got {n_cutoff}")
    e_cut = float(series.modes.energy[n_cutoff - 1])
    if not omega < e_cut:
        raise ValueError(f"omega {omega} must lie below E_N = {e_cut}")
    low = series.keep.copy()
    low[n_cutoff:] = False
    high = series.keep.copy()
    high[:n_cutoff] = False
    e_all = series.modes.energy
    w_all = np.zeros(len(series.modes))
    w_all[series.keep] = series.weight
    check_off_poles(omega, e_all[high], config.tol)
    e_lo, w_lo = e_all[low], w_all[low]
    e_hi, w_hi = e_all[high], w_all[high]
    total = 1.0 / v1
    total += float(np.sum(w_lo * e_lo / (e_lo**2 + lam**2)))
    total += float(np.sum(w_hi * (1.0 / (omega - e_hi) + e_hi / (e_hi**2 + lam**2))))
    if config.tail_correction:
        ec = series.cutoff
        total += series.alpha * math.log((ec - omega) / math.hypot(ec, lam))
    return total


def vbar_from_v_approx(mass: float, v1: float, lam: float, e_cut: float, omega: float) -> float:
    """Mean-density estimate ``1 / v1 + (M / 2 pi) ln((E_N - w) / lam)`` of :func:`vbar_from_v`."""
    if v1 == 0:
        raise ValueError("v1 must be nonzero")
    if not omega < e_cut:
        raise ValueError("omega must lie below the cutoff energy")
    return 1.0 / v1 + mass / (2 * math.pi) * math.log((e_cut - omega) / lam)
