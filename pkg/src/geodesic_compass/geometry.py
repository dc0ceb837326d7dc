"""Exact primitives on the Poincare upper half-plane and on the unit sphere.

Distances are returned as hyperbolic cosines (or cosines on the sphere), the
quantity every product formula of the motion works with.  :func:`arccosh1`
turns them back into lengths.

The polar chart is centred at the origin ``O = (0, 1)``.  ``eta`` is the
hyperbolic distance from ``O`` and ``alpha`` the direction angle of the
geodesic at ``O``, measured from the positive x direction.  Angles are kept in
``(-pi, pi]`` so every point of the half-plane has coordinates: ``x > 0`` maps
to ``|alpha| < pi/2``, ``x < 0`` to ``|alpha| > pi/2`` and the positive y axis
to ``alpha = +-pi/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "HyperbolicPoint",
    "HyperbolicPolar",
    "GeodesicCircle",
    "ORIGIN",
    "polar_to_cartesian",
    "cartesian_to_polar",
    "cosh_distance_origin",
    "cosh_distance_pair",
    "carnot_cosh",
    "spherical_pythagoras",
    "geodesic_circle",
    "arccosh1",
    "distance",
    "normalize_angle",
]


@dataclass(frozen=True)
class HyperbolicPoint:
    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"point must lie in the upper half-plane, got y={self.y!r}")


@dataclass(frozen=True)
class HyperbolicPolar:
    eta: float
    alpha: float

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta!r}")
        if not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha!r}")


@dataclass(frozen=True)
class GeodesicCircle:
    """Half-circle through ``O`` centred at ``(center_x, 0)``."""

    center_x: float
    radius: float


ORIGIN = HyperbolicPoint(0.0, 1.0)


def normalize_angle(a: float) -> float:
    """Reduce ``a`` into ``(-pi, pi]``."""
    r = math.remainder(a, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


def polar_to_cartesian(p: HyperbolicPolar) -> HyperbolicPoint:
    ch, sh = math.cosh(p.eta), math.sinh(p.eta)
    sa, ca = math.sin(p.alpha), math.cos(p.alpha)
    # cosh - sinh sin(alpha), rewritten to avoid cancellation when sin(alpha) -> 1
    s = math.sin(0.25 * math.pi - 0.5 * p.alpha)
    den = 2.0 * ch * s * s + math.exp(-p.eta) * sa
    return HyperbolicPoint(sh * ca / den, 1.0 / den)


def cartesian_to_polar(q: HyperbolicPoint) -> HyperbolicPolar:
    x, y = q.x, q.y
    # cosh(eta) - 1 = (x^2 + (y-1)^2) / (2y); half-angle form keeps small eta exact
    eta = 2.0 * math.asinh(math.sqrt((x * x + (y - 1.0) ** 2) / (4.0 * y)))
    if eta == 0.0:
        return HyperbolicPolar(0.0, 0.0)
    # tan(alpha) = (x^2 + y^2 - 1) / (2x); quadrant fixed by the signs of
    # sinh(eta) sin(alpha) = (x^2+y^2-1)/(2y) and sinh(eta) cos(alpha) = x/y
    alpha = math.atan2(x * x + (y - 1.0) * (y + 1.0), 2.0 * x)
    return HyperbolicPolar(eta, alpha)


def cosh_distance_origin(q: HyperbolicPoint) -> float:
    return (q.x * q.x + q.y * q.y + 1.0) / (2.0 * q.y)


def cosh_distance_pair(q1: HyperbolicPoint, q2: HyperbolicPoint) -> float:
    dx, dy = q1.x - q2.x, q1.y - q2.y
    # == ((x1-x2)^2 + y1^2 + y2^2) / (2 y1 y2), without the cancellation near 1
    return 1.0 + (dx * dx + dy * dy) / (2.0 * q1.y * q2.y)


def carnot_cosh(eta1: float, eta2: float, dalpha: float) -> float:
    """Hyperbolic law of cosines for two sides from ``O`` enclosing ``dalpha``."""
    if eta1 < 0 or eta2 < 0:
        raise ValueError("side lengths must be non-negative")
    d = abs(normalize_angle(dalpha))
    # cosh a cosh b - sinh a sinh b cos d == cosh(a-b) + 2 sinh a sinh b sin^2(d/2)
    s = math.sin(0.5 * d)
    return math.cosh(eta1 - eta2) + 2.0 * math.sinh(eta1) * math.sinh(eta2) * s * s


def spherical_pythagoras(d1: float, d2: float) -> float:
    """Cosine of the hypotenuse of a right spherical triangle with legs ``d1, d2``."""
    return math.cos(d1) * math.cos(d2)


def geodesic_circle(alpha: float) -> GeodesicCircle:
    """Euclidean description of the geodesic leaving ``O`` at angle ``alpha``.

    Undefined for ``alpha = +-pi/2`` where the geodesic is the y axis.
    """
    ca = math.cos(alpha)
    if abs(ca) < 1e-15:
        raise ValueError("alpha = +-pi/2 is the vertical geodesic (no finite centre)")
    return GeodesicCircle(math.tan(alpha), 1.0 / abs(ca))


def arccosh1(v: float) -> float:
    """``arccosh`` clamped to ``[1, inf)`` so one-ulp undershoot gives 0, not NaN."""
    return math.acosh(max(v, 1.0))


def distance(q1: HyperbolicPoint, q2: HyperbolicPoint) -> float:
    """Hyperbolic distance, stable for nearby points."""
    dx, dy = q1.x - q2.x, q1.y - q2.y
    return 2.0 * math.asinh(0.5 * math.sqrt((dx * dx + dy * dy) / (q1.y * q2.y)))
