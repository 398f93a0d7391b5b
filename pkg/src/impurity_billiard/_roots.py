"""Bisection for secular functions that decrease between simple poles.

A function ``f`` with positive-residue poles at sorted energies tends to
``+inf`` just above each pole and to ``-inf`` just below the next one, so each
gap between poles holds exactly one sign change.  The endpoint signs are known
analytically and never evaluated.
"""
from __future__ import annotations

import math

import numpy as np


class PoleError(ValueError):
    """Raised when an energy sits on a retained unperturbed level."""


def bisect_between_poles(f, lo, hi, tol, max_iter=400):
    """Root of ``f`` in ``(lo, hi)`` given ``f(lo+) > 0`` and ``f(hi-) < 0``."""
    if not lo < hi:
        raise ValueError(f"empty bracket ({lo}, {hi})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        value = f(mid)
        if value > 0:
            lo = mid
        elif value < 0:
            hi = mid
        else:
            return mid
        if hi - lo <= tol:
            break
    root = 0.5 * (lo + hi)
    if root <= lo:
        root = np.nextafter(lo, hi)
    return float(root)


def bisect_below(f, top, step, floor, tol):
    """Root of a decreasing ``f`` on ``(floor, top)`` with ``f(top-) = -inf``.

    The lower bracket is found by doubling ``step`` away from ``top``; returns
    ``None`` when ``f`` stays negative down to ``floor``.
    """
    lo = top - step
    while True:
        lo = max(lo, floor)
        value = f(lo)
        if value > 0:
            break
        if value == 0:
            return float(lo)
        if lo <= floor:
            return None
        step *= 2.0
        lo = top - step
    return bisect_between_poles(f, lo, top, tol)


def check_off_poles(omega, energies, tol):
    """Raise :class:`PoleError` if any ``omega`` lies within ``tol`` of ``energies``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if energies.size == 0:
        return
    idx = np.searchsorted(energies, omega)
    near = np.full(omega.shape, math.inf)
    left = idx > 0
    near[left] = np.abs(omega[left] - energies[idx[left] - 1])
    right = idx < energies.size
    near[right] = np.minimum(near[right], np.abs(energies[idx[right]] - omega[right]))
    bad = near <= tol
    if np.any(bad):
        raise PoleError(f"energy {omega[bad][0]!r} lies on an unperturbed level (within {tol})")
