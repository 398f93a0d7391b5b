"""Point scatterer in the billiard via the self-adjoint extension family.

The perturbed levels solve ``G(w) = 1 / vbar`` where

    G(w) = sum_n phi_n(x1)^2 (1 / (w - E_n) + E_n / (E_n^2 + L^2))

and ``L`` is the scale mass.  Each summand decays like ``w / E_n^2`` so the
series converges; the remainder past the truncation energy ``Ec`` is replaced
by its mean-density integral ``(M / 2 pi) ln((Ec - w) / sqrt(Ec^2 + L^2))``
when ``SeriesConfig.tail_correction`` is set.  The same mean-density tail is
applied to every other infinite sum in this module so the transition matrix,
the angle map and the secular function stay mutually consistent.
"""
from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._roots import PoleError, bisect_below, bisect_between_poles, check_off_poles
from .basis import DEGENERACY_RTOL, ModeTable, RectangleBilliard, degenerate_clusters, lowest_modes, mean_level_density

__all__ = [
    "PoleError",
    "PointScatterer",
    "SeriesConfig",
    "SpectralLine",
    "PointSpectrum",
    "bare_green",
    "regularized_g",
    "theta_to_vbar",
    "theta_to_vbar_inv",
    "vbar_to_theta",
    "c_overlap",
    "transition_matrix",
    "solve_point_spectrum",
    "eigenfunction_coefficients",
    "delta_divergence_profile",
]

_CHUNK = 1 << 22  # max elements in one (omega x mode) block


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation and root-finding controls for the mode sums.

    ``drop_threshold`` is relative to ``4 / S``; modes with a weight
    ``phi_n(x1)^2`` below it are left out of the sums.  ``below_ground_span``
    is measured in mean level spacings.
    """

    n_max: int = 100_000
    tail_correction: bool = True
    tol: float = 1e-12
    drop_threshold: float = 1e-12
    below_ground_span: float = 50.0

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 100:
            raise ValueError(f"n_max must be an integer >= 100, got {self.n_max!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol!r}")
        if self.drop_threshold < 0 or self.below_ground_span < 0:
            raise ValueError("drop_threshold and below_ground_span must be nonnegative")


@dataclass(frozen=True)
class PointScatterer:
    """Zero-range impurity at ``x1`` with coupling given by ``theta`` or ``vbar``.

    ``vbar`` is an extended real: ``0`` means decoupled, ``inf`` means
    ``1 / vbar = 0``.
    """

    x1: tuple[float, float]
    theta: float | None = None
    vbar: float | None = None
    lam: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x1", (float(self.x1[0]), float(self.x1[1])))
        if (self.theta is None) == (self.vbar is None):
            raise ValueError("give exactly one of theta or vbar")
        if self.theta is not None and not 0.0 <= self.theta < 2 * math.pi:
            raise ValueError(f"theta must lie in [0, 2 pi), got {self.theta!r}")
        if not self.lam > 0:
            raise ValueError(f"scale mass must be positive, got {self.lam!r}")

    @classmethod
    def from_vbar_inv(cls, x1, vbar_inv: float, lam: float = 1.0) -> "PointScatterer":
        vbar = math.inf if vbar_inv == 0 else (0.0 if math.isinf(vbar_inv) else 1.0 / vbar_inv)
        return cls(x1, vbar=vbar, lam=lam)

    def validate(self, billiard: RectangleBilliard):
        if not billiard.contains(*self.x1, closed=False):
            raise ValueError(f"scatterer position {self.x1} is not strictly inside the rectangle")

    def vbar_inv(self, billiard: RectangleBilliard, config: SeriesConfig | None = None) -> float:
        if self.vbar is not None:
            if self.vbar == 0:
                return math.inf
            return 0.0 if math.isinf(self.vbar) else 1.0 / self.vbar
        return theta_to_vbar_inv(billiard, self.x1, self.theta, self.lam, config)

    def theta_value(self, billiard: RectangleBilliard, config: SeriesConfig | None = None) -> float:
        if self.theta is not None:
            return self.theta
        return vbar_to_theta(billiard, self.x1, self.vbar_inv(billiard), self.lam, config)


@dataclass
class SpectralLine:
    """One perturbed level with its bracketing interval and expansion coefficients.

    ``coefficients`` are aligned with ``modes`` (energy order); dropped modes
    carry zero.  ``residual`` is the Newton step ``|f / f'|`` at ``omega``,
    an estimate of the remaining error in the energy.
    """

    omega: float
    bracket: tuple[float, float]
    coefficients: np.ndarray = field(repr=False)
    residual: float
    modes: ModeTable | None = field(default=None, repr=False, compare=False)

    def top_components(self, k=5):
        """The ``k`` largest components as ``(m, n, coefficient)`` triples."""
        order = np.argsort(-np.abs(self.coefficients), kind="stable")[:k]
        if self.modes is None:
            return [(None, None, float(self.coefficients[i])) for i in order]
        return [(int(self.modes.m[i]), int(self.modes.n[i]), float(self.coefficients[i])) for i in order]


@dataclass
class PointSpectrum:
    """Result of a secular solve over an energy window.

    ``persistent`` lists unperturbed levels decoupled from the impurity
    (nodal placement); ``unresolved`` lists ``(low, high)`` ranges of
    near-degenerate clusters whose inner roots are not resolved.
    """

    lines: list[SpectralLine]
    persistent: list[float]
    unresolved: list[tuple[float, float]]
    vbar_inv: float

    def __iter__(self):
        return iter(self.lines)

    def __len__(self):
        return len(self.lines)

    def __getitem__(self, i):
        return self.lines[i]

    @property
    def omegas(self) -> np.ndarray:
        return np.array([line.omega for line in self.lines])


class _Series:
    """Cached per-(billiard, x1, n_max) data for the mode sums."""

    def __init__(self, billiard, x1, n_max, drop_threshold):
        table = lowest_modes(billiard, n_max + 1)
        self.billiard = billiard
        self.modes = table[:n_max]
        weights = table.values_at(*x1) ** 2
        self.cutoff = 0.5 * (table.energy[n_max - 1] + table.energy[n_max])
        self.alpha = billiard.mass / (2.0 * math.pi)
        keep = weights[:n_max] >= drop_threshold * 4.0 / billiard.area
        self.keep = keep
        self.energy = self.modes.energy[keep]
        self.weight = weights[:n_max][keep]
        self.dropped = self.modes.energy[~keep]


@lru_cache(maxsize=16)
def _series_cached(billiard, x1, n_max, drop_threshold):
    return _Series(billiard, x1, n_max, drop_threshold)


def _series(billiard, x1, config) -> _Series:
    x1 = (float(x1[0]), float(x1[1]))
    if not billiard.contains(*x1, closed=False):
        raise ValueError(f"position {x1} is not strictly inside the rectangle")
    return _series_cached(billiard, x1, int(config.n_max), float(config.drop_threshold))


def _chunked(omegas, n_modes):
    step = max(1, _CHUNK // max(n_modes, 1))
    for start in range(0, omegas.size, step):
        yield slice(start, start + step)


def _g_values(series: _Series, omegas: np.ndarray, lam: float, tail: bool) -> np.ndarray:
    e, w = series.energy, series.weight
    const = np.sum(w * e / (e * e + lam * lam))
    out = np.empty(omegas.shape)
    for sl in _chunked(omegas, e.size):
        out[sl] = (w / (omegas[sl, None] - e)).sum(axis=1)
    out += const
    if tail:
        ec = series.cutoff
        out += series.alpha * np.log((ec - omegas) / math.hypot(ec, lam))
    return out


def _prefactor_sum(series: _Series, lam: float, tail: bool) -> float:
    e, w = series.energy, series.weight
    total = float(np.sum(w / (e * e + lam * lam)))
    if tail:
        total += series.alpha / lam * math.atan(lam / series.cutoff)
    return total


def _scalar_or_array(values, like):
    return float(values[0]) if np.ndim(like) == 0 else values


def bare_green(billiard: RectangleBilliard, x, y, omega, config: SeriesConfig | None = None):
    """Truncated kinetic Green's function ``sum phi_n(x) phi_n(y) / (omega - E_n)``."""
    config = config or SeriesConfig()
    for p in (x, y):
        if not billiard.contains(*p):
            raise ValueError(f"point {tuple(p)} lies outside the rectangle")
    table = lowest_modes(billiard, int(config.n_max))
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    check_off_poles(om, table.energy, config.tol)
    product = table.values_at(*x) * table.values_at(*y)
    out = np.empty(om.shape)
    for sl in _chunked(om, len(table)):
        out[sl] = (product / (om[sl, None] - table.energy)).sum(axis=1)
    return _scalar_or_array(out, omega)


def regularized_g(billiard: RectangleBilliard, x1, omega, lam: float = 1.0, config: SeriesConfig | None = None):
    """Regularized secular function ``G(omega)``; accepts a scalar or an array of energies."""
    config = config or SeriesConfig()
    series = _series(billiard, x1, config)
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    check_off_poles(om, series.energy, config.tol)
    if config.tail_correction and np.any(om >= series.cutoff):
        raise ValueError("energy lies above the truncation energy of the series")
    return _scalar_or_array(_g_values(series, om, lam, config.tail_correction), omega)


def theta_to_vbar_inv(billiard: RectangleBilliard, x1, theta: float, lam: float = 1.0,
                      config: SeriesConfig | None = None) -> float:
    """``1 / vbar = lam cot(theta / 2) sum phi_n(x1)^2 / (E_n^2 + lam^2)``.

    ``theta = 0`` is the decoupled extension and returns ``inf``.
    """
    if not 0.0 <= theta < 2 * math.pi:
        raise ValueError(f"theta must lie in [0, 2 pi), got {theta!r}")
    if theta == 0.0:
        return math.inf
    config = config or SeriesConfig()
    series = _series(billiard, x1, config)
    half = 0.5 * theta
    cot = math.cos(half) / math.sin(half)
    return lam * cot * _prefactor_sum(series, lam, config.tail_correction)


def theta_to_vbar(billiard: RectangleBilliard, x1, theta: float, lam: float = 1.0,
                  config: SeriesConfig | None = None) -> float:
    """Formal strength ``vbar``; ``0`` for the decoupled angle, ``inf`` at ``theta = pi``."""
    inv = theta_to_vbar_inv(billiard, x1, theta, lam, config)
    if math.isinf(inv):
        return 0.0
    return math.inf if inv == 0 else 1.0 / inv


def vbar_to_theta(billiard: RectangleBilliard, x1, vbar_inv: float, lam: float = 1.0,
                  config: SeriesConfig | None = None) -> float:
    """Inverse of :func:`theta_to_vbar_inv`, returning ``theta`` in ``[0, 2 pi)``."""
    if math.isinf(vbar_inv):
        return 0.0
    config = config or SeriesConfig()
    series = _series(billiard, x1, config)
    cot = vbar_inv / (lam * _prefactor_sum(series, lam, config.tail_correction))
    return 2.0 * math.atan2(1.0, cot)


def c_overlap(billiard: RectangleBilliard, x1, omega: float, sign: int, lam: float = 1.0,
              config: SeriesConfig | None = None) -> complex:
    """Overlap ``sum phi_n(x1)^2 / ((omega - E_n)(sign i lam - E_n))`` of two Green's functions."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    config = config or SeriesConfig()
    series = _series(billiard, x1, config)
    check_off_poles(omega, series.energy, config.tol)
    e, w = series.energy, series.weight
    z = sign * 1j * lam
    total = complex(np.sum(w / ((omega - e) * (z - e))))
    if config.tail_correction:
        ec = series.cutoff
        total += series.alpha * (cmath.log(ec - z) - math.log(ec - omega)) / (omega - z)
    return total


def transition_matrix(billiard: RectangleBilliard, scatterer: PointScatterer, omega: float,
                      config: SeriesConfig | None = None) -> complex:
    """Transition matrix of the extension ``theta``; exactly ``0`` for the decoupled case."""
    config = config or SeriesConfig()
    theta = scatterer.theta_value(billiard, config)
    if theta == 0.0:
        return 0j
    lam = scatterer.lam
    phase = cmath.exp(1j * theta)
    c_plus = c_overlap(billiard, scatterer.x1, omega, +1, lam, config)
    c_minus = c_overlap(billiard, scatterer.x1, omega, -1, lam, config)
    denominator = (omega - 1j * lam) * c_plus - phase * (omega + 1j * lam) * c_minus
    if denominator == 0:
        return complex(math.inf, 0.0)
    return (1 - phase) / denominator


def eigenfunction_coefficients(billiard: RectangleBilliard, x1, omega_m: float,
                               config: SeriesConfig | None = None) -> np.ndarray:
    """Normalized expansion ``c_n ~ phi_n(x1) / (omega_m - E_n)`` over the first ``n_max`` modes.

    Dropped (nodal) modes get a zero coefficient.
    """
    config = config or SeriesConfig()
    series = _series(billiard, x1, config)
    check_off_poles(omega_m, series.energy, config.tol)
    return _expansion(series, x1, omega_m)


def _expansion(series: _Series, x1, omega: float) -> np.ndarray:
    phi = series.modes.values_at(*x1)
    coeffs = np.zeros(len(series.modes))
    coeffs[series.keep] = phi[series.keep] / (omega - series.energy)
    return coeffs / np.linalg.norm(coeffs)


def _pole_groups(energies, rtol):
    """Distinct pole positions: lowest and highest member of each near-degenerate cluster."""
    clusters = degenerate_clusters(energies, rtol)
    lows = np.array([energies[a] for a, _ in clusters])
    highs = np.array([energies[b - 1] for _, b in clusters])
    sizes = np.array([b - a for a, b in clusters])
    return lows, highs, sizes


def _newton_step(f, root, lo, hi):
    """``|f / f'|`` at ``root``: the remaining error in ``omega`` to first order."""
    h = 1e-7 * max(1.0, abs(root))
    h = min(h, 0.25 * (root - lo), 0.25 * (hi - root)) if lo is not None else min(h, 0.25 * (hi - root))
    value = f(root)
    if value == 0 or h <= 0:
        return 0.0
    slope = (f(root + h) - f(root - h)) / (2 * h)
    return abs(value / slope) if slope != 0 else math.inf


def solve_secular(energies, f, window, tol, *, below_ground=None, expansion=None,
                  residual=None, modes=None, threads=1, rtol=DEGENERACY_RTOL):
    """Solve a pole-interlaced secular equation over ``window``.

    ``f(omega)`` is the secular function minus its target value.  Roots are
    returned as :class:`SpectralLine` objects in ascending order together with
    the unresolved cluster ranges.  ``below_ground`` is ``(step, floor)`` for the
    search under the lowest pole, or ``None`` to skip it.
    """
    e_lo, e_hi = window
    if not e_lo < e_hi:
        raise ValueError(f"empty energy window {window!r}")
    lows, highs, sizes = _pole_groups(energies, rtol)
    unresolved = [(float(lo), float(hi)) for lo, hi, k in zip(lows, highs, sizes)
                  if k > 1 and hi >= e_lo and lo <= e_hi]
    brackets = []
    if below_ground is not None and lows.size and e_lo < lows[0]:
        brackets.append((None, float(lows[0])))
    for i in range(lows.size - 1):
        lo, hi = float(highs[i]), float(lows[i + 1])
        if hi > e_lo and lo < e_hi:
            brackets.append((lo, hi))

    def solve(bracket):
        lo, hi = bracket
        if lo is None:
            step, floor = below_ground
            floor = max(floor, e_lo)
            root = bisect_below(f, hi, step, floor, tol)
            if root is None:
                return None
            lo = floor
        else:
            root = bisect_between_poles(f, lo, hi, tol)
        coeffs = expansion(root) if expansion is not None else np.empty(0)
        res = abs(residual(root)) if residual is not None else _newton_step(f, root, lo, hi)
        return SpectralLine(root, (lo, hi), coeffs, float(res), modes)

    if threads and threads > 1 and len(brackets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            found = list(pool.map(solve, brackets))
    else:
        found = [solve(b) for b in brackets]
    lines = [line for line in found if line is not None and e_lo <= line.omega <= e_hi]
    return lines, unresolved


def solve_point_spectrum(billiard: RectangleBilliard, scatterer: PointScatterer, window,
                         config: SeriesConfig | None = None, threads: int = 1) -> PointSpectrum:
    """Perturbed levels of the point scatterer inside ``window = (e_min, e_max)``.

    One root per gap between consecutive retained levels, found by bisection
    to ``config.tol``.  Levels of modes that vanish at ``x1`` are reported in
    ``persistent``.  Below the ground level the search reaches down to
    ``config.below_ground_span`` mean spacings.
    """
    config = config or SeriesConfig()
    scatterer.validate(billiard)
    series = _series(billiard, scatterer.x1, config)
    target = scatterer.vbar_inv(billiard, config)
    if math.isnan(target):
        raise ValueError("coupling is undefined")
    e_lo, e_hi = float(window[0]), float(window[1])
    if config.tail_correction and e_hi >= series.cutoff:
        raise ValueError(f"window top {e_hi} reaches the series truncation energy {series.cutoff}")
    lam, tail = scatterer.lam, config.tail_correction

    if math.isinf(target):
        # decoupled: every retained level is unshifted
        persistent = [float(e) for e in series.modes.energy if e_lo <= e <= e_hi]
        return PointSpectrum([], persistent, [], target)

    def f(omega):
        return float(_g_values(series, np.array([omega]), lam, tail)[0]) - target

    spacing = 1.0 / mean_level_density(billiard)
    lines, unresolved = solve_secular(
        series.energy, f, (e_lo, e_hi), config.tol,
        below_ground=(spacing, series.energy[0] - config.below_ground_span * spacing),
        expansion=lambda w: _expansion(series, scatterer.x1, w),
        modes=series.modes, threads=threads,
    )
    persistent = [float(e) for e in series.dropped if e_lo <= e <= e_hi]
    return PointSpectrum(lines, persistent, unresolved, target)


def delta_divergence_profile(billiard: RectangleBilliard, x1, omega: float, n_list,
                             counterterm: bool = False, lam: float = 1.0) -> list[float]:
    """Partial sums of the unregularized series ``sum_{n <= N} phi_n(x1)^2 / (omega - E_n)``.

    With ``counterterm`` each term also gets ``E_n / (E_n^2 + lam^2)``, which
    turns the logarithmically divergent sums into convergent ones.
    """
    n_list = [int(n) for n in n_list]
    if not n_list or min(n_list) < 1:
        raise ValueError("n_list must hold positive integers")
    table = lowest_modes(billiard, max(n_list))
    e = table.energy
    if np.any(e == omega):
        raise PoleError(f"energy {omega!r} lies on an unperturbed level")
    terms = table.values_at(*x1) ** 2 / (omega - e)
    if counterterm:
        terms = terms + table.values_at(*x1) ** 2 * e / (e * e + lam * lam)
    partial = np.cumsum(terms)
    return [float(partial[n - 1]) for n in n_list]
