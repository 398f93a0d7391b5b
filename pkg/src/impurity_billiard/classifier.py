"""Strong-coupling tests for point and finite-size impurities.

A state at energy ``w`` is strongly mixed by the impurity when

    point:   | 1/vbar - (M / 2 pi) ln(w / L) |        <~ pi M / 4
    finite:  | 1/(U1 M W) - ln(w M W) / (2 pi) |      <~ pi / 4

The bounds are order-of-magnitude estimates, so labels use a soft band:
``strong`` at or below half the threshold, ``weak`` at or above 1.5 times it,
``borderline`` in between.  The raw metric is always kept.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClassificationReport",
    "StripMap",
    "label_for",
    "point_metric",
    "finite_metric",
    "width_delta",
    "strip_center",
    "strip_map",
    "STRONG_FRACTION",
    "WEAK_FRACTION",
]

STRONG_FRACTION = 0.5
WEAK_FRACTION = 1.5


def label_for(metric: float, threshold: float) -> str:
    if metric <= STRONG_FRACTION * threshold:
        return "strong"
    if metric >= WEAK_FRACTION * threshold:
        return "weak"
    return "borderline"


@dataclass(frozen=True)
class ClassificationReport:
    metric: float
    threshold: float
    label: str
    inputs_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "threshold": self.threshold, "label": self.label,
                "inputs": dict(self.inputs_echo)}


def point_metric(vbar: float, omega: float, mass: float, lam: float = 1.0) -> ClassificationReport:
    """Distance of ``1/vbar`` from the strip centre ``(M / 2 pi) ln(w / L)``."""
    if vbar == 0:
        raise ValueError("vbar = 0 is the decoupled extension; the metric is undefined")
    if not (omega > 0 and lam > 0 and mass > 0):
        raise ValueError("omega, mass and the scale mass must be positive")
    inv = 0.0 if math.isinf(vbar) else 1.0 / vbar
    metric = abs(inv - mass / (2 * math.pi) * math.log(omega / lam))
    threshold = math.pi * mass / 4
    return ClassificationReport(metric, threshold, label_for(metric, threshold),
                                {"vbar": vbar, "omega": omega, "mass": mass, "lambda": lam})


def finite_metric(u1: float, mass: float, omega_area: float, omega: float) -> ClassificationReport:
    """Scale-free test for a patch of height ``u1`` and area ``omega_area``."""
    if u1 == 0:
        raise ValueError("u1 = 0: no impurity, the metric is undefined")
    if not (omega > 0 and mass > 0 and omega_area > 0):
        raise ValueError("omega, mass and the impurity area must be positive")
    x = omega * mass * omega_area
    if x >= 1:
        warnings.warn(f"w M W = {x:.3g} >= 1: the impurity is not pointlike at this energy", stacklevel=2)
    inv = 0.0 if math.isinf(u1) else 1.0 / (u1 * mass * omega_area)
    metric = abs(inv - math.log(x) / (2 * math.pi))
    threshold = math.pi / 4
    return ClassificationReport(metric, threshold, label_for(metric, threshold),
                                {"u1": u1, "mass": mass, "omega_area": omega_area, "omega": omega})


def width_delta(mass: float) -> float:
    """Energy-independent width ``pi M / 2`` of the strong-coupling band in ``1/vbar``."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    return math.pi * mass / 2


def strip_center(mass: float, omega_area: float, omega) -> np.ndarray:
    """Potential height ``U1*(w)`` at the centre of the strip, ``2 pi / (M W ln(w M W))``."""
    omega = np.asarray(omega, dtype=float)
    return 2 * math.pi / (mass * omega_area * np.log(omega * mass * omega_area))


@dataclass
class StripMap:
    """Labels over an ``(omega, 1/U1)`` grid; ``metric[i, j]`` belongs to ``omegas[i]``, ``u1_inv[j]``."""

    omegas: np.ndarray
    u1_inv: np.ndarray
    metric: np.ndarray
    labels: np.ndarray
    center_u1: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    half_width: float

    def rows(self):
        """Row-major ``(omega, u1_inv, metric, label)`` tuples."""
        for i, om in enumerate(self.omegas):
            for j, u in enumerate(self.u1_inv):
                yield float(om), float(u), float(self.metric[i, j]), str(self.labels[i, j])


def _axis(spec, name):
    lo, hi, count = spec
    count = int(count)
    if count < 1:
        raise ValueError(f"{name} needs a positive count")
    if count > 1 and not lo < hi:
        raise ValueError(f"{name} needs lo < hi")
    return np.linspace(lo, hi, count)


def strip_map(mass: float, omega_area: float, omega_range, u1inv_range) -> StripMap:
    """Finite-impurity labels on a grid; ranges are ``(lo, hi, count)``.

    The strip boundaries are returned in the ``1/(U1 M W)`` coordinate, where
    the half-width is ``pi / 4`` at every energy.
    """
    if not (mass > 0 and omega_area > 0):
        raise ValueError("mass and impurity area must be positive")
    omegas = _axis(omega_range, "omega range")
    u1_inv = _axis(u1inv_range, "1/U1 range")
    x = omegas * mass * omega_area
    if np.any(omegas <= 0) or np.any(x >= 1):
        raise ValueError("every omega must satisfy 0 < w M W < 1")
    center = np.log(x) / (2 * math.pi)
    metric = np.abs(u1_inv[None, :] / (mass * omega_area) - center[:, None])
    threshold = math.pi / 4
    labels = np.where(metric <= STRONG_FRACTION * threshold, "strong",
                      np.where(metric >= WEAK_FRACTION * threshold, "weak", "borderline"))
    return StripMap(omegas, u1_inv, metric, labels, strip_center(mass, omega_area, omegas),
                    center - threshold, center + threshold, threshold)
