"""Vessel centerline geometry.

A vessel is a straight segment with an arclength-dependent radius and wall
permeability.  The cross-section at arclength ``s`` is the disk of radius
``R(s)`` in the plane spanned by the frame vectors ``(e1, e2)``; coupling
integrals are evaluated on its boundary circle through a uniform angular
quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError

_TOL = 1e-12
_VALIDATION_SAMPLES = 10_000


@dataclass(frozen=True)
class ConstantRadius:
    """Cylinder with fixed radius."""

    value: float

    def __call__(self, s, length):
        return np.broadcast_to(np.float64(self.value), np.shape(s)).copy() if np.ndim(s) else float(self.value)


@dataclass(frozen=True)
class TanhRadius:
    """Smoothly widening radius r_min -> r_max with a tanh ramp of steepness beta."""

    r_min: float
    r_max: float
    beta: float

    def __call__(self, s, length):
        s = np.asarray(s, dtype=float)
        r = self.r_min + 0.5 * (self.r_max - self.r_min) * (
            1.0 + np.tanh(self.beta * (s / length - 0.5))
        )
        return r if r.ndim else float(r)


@dataclass(frozen=True)
class ConstantPermeability:
    value: float

    def __call__(self, s):
        return np.broadcast_to(np.float64(self.value), np.shape(s)).copy() if np.ndim(s) else float(self.value)


@dataclass(frozen=True)
class PiecewisePermeability:
    """Piecewise-constant wall permeability.

    ``breakpoints`` are the interior jump locations (increasing); ``values``
    has one more entry than ``breakpoints``.  The value on ``[b_i, b_{i+1})``
    is ``values[i + 1]``; segments may be exactly zero (impermeable wall).
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise GeometryError("need one more permeability value than breakpoints")
        if any(b >= a for a, b in zip(self.breakpoints[1:], self.breakpoints[:-1])):
            raise GeometryError("permeability breakpoints must be increasing")

    def __call__(self, s):
        idx = np.searchsorted(np.asarray(self.breakpoints), s, side="right")
        out = np.asarray(self.values, dtype=float)[idx]
        return out if np.ndim(s) else float(out)


class VesselGeometry:
    """Straight centerline from p0 to p1 with radius and permeability profiles.

    The orthonormal frame (e1, e2, tangent) is built once by Gram-Schmidt,
    seeding with the coordinate axis least aligned with the tangent.  The
    section area ``pi R(s)^2`` must be nondecreasing in s; this is required
    by the upwind advection form and is validated on a dense sample grid at
    construction time.
    """

    def __init__(self, p0, p1, radius, permeability):
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        if p0.shape != (3,) or p1.shape != (3,):
            raise GeometryError("endpoints must be 3D points")
        length = float(np.linalg.norm(p1 - p0))
        if length <= 0.0:
            raise GeometryError("centerline endpoints coincide")
        tangent = (p1 - p0) / length

        # frame seed: coordinate axis with smallest |component along tangent|
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(tangent)))] = 1.0
        e1 = axis - np.dot(axis, tangent) * tangent
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(tangent, e1)

        self.p0 = p0
        self.p1 = p1
        self.length = length
        self.tangent = tangent
        self.e1 = e1
        self.e2 = e2
        self.radius = radius
        self.permeability = permeability
        for v in (self.p0, self.p1, self.tangent, self.e1, self.e2):
            v.setflags(write=False)

        gram = np.abs(
            [np.dot(tangent, e1), np.dot(tangent, e2), np.dot(e1, e2)]
        )
        norms = np.abs([np.linalg.norm(v) - 1.0 for v in (tangent, e1, e2)])
        if gram.max() > _TOL or norms.max() > _TOL:
            raise GeometryError("frame is not orthonormal")

        self._validate_profiles()

    def _validate_profiles(self):
        s = np.linspace(0.0, self.length, _VALIDATION_SAMPLES)
        r = np.asarray(self.radius(s, self.length), dtype=float)
        if np.any(r <= 0.0):
            raise GeometryError("radius profile is not strictly positive")
        area = np.pi * r * r
        if np.any(np.diff(area) < -_TOL):
            raise GeometryError("section area must be nondecreasing along the vessel")
        circ = 2.0 * np.pi * r
        self.section_lower = float(min(area.min(), circ.min()))
        self.section_upper = float(max(area.max(), circ.max()))
        self.max_radius = float(r.max())
        gam = np.asarray(self.permeability(s), dtype=float)
        if np.any(gam < 0.0):
            raise GeometryError("permeability must be nonnegative")
        self.permeability_upper = float(gam.max())

    def _check_arclength(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -_TOL) or np.any(s > self.length + _TOL):
            raise DomainError(f"arclength outside [0, {self.length}]")

    def point_at(self, s):
        """Centerline point at arclength s (scalar or array)."""
        self._check_arclength(s)
        s = np.asarray(s, dtype=float)
        pts = self.p0 + np.multiply.outer(s, self.tangent)
        return pts

    def radius_at(self, s):
        self._check_arclength(s)
        return self.radius(s, self.length)

    def section_area(self, s):
        """Cross-section area pi R(s)^2."""
        r = self.radius_at(s)
        return np.pi * r * r

    def section_circumference(self, s):
        """Cross-section boundary length 2 pi R(s)."""
        return 2.0 * np.pi * self.radius_at(s)

    def gamma_at(self, s):
        self._check_arclength(s)
        return self.permeability(s)

    def circle_points(self, s, n):
        """Uniform quadrature on the section circle at arclength s.

        Returns ``(points, weights)`` with n points on the circle of radius
        R(s) around the centerline; each weight is ``|circumference| / n`` so
        the weights sum to the circumference exactly.  The uniform rule is the
        periodic trapezoid rule, spectrally accurate for smooth integrands.
        """
        if n < 4:
            raise ValueError("need at least 4 circle points")
        self._check_arclength(s)
        center = self.p0 + float(s) * self.tangent
        r = float(self.radius(s, self.length))
        theta = 2.0 * np.pi * np.arange(n) / n
        pts = (
            center
            + r * np.outer(np.cos(theta), self.e1)
            + r * np.outer(np.sin(theta), self.e2)
        )
        weights = np.full(n, 2.0 * np.pi * r / n)
        return pts, weights

    def check_inside_box(self, lo, hi, tol=_TOL):
        """Require the vessel tube to stay inside the closed box [lo, hi].

        Sampled densely along s; the tube may touch the box faces (the
        vertical-line setup ends exactly on two faces) but must not cross
        them by more than tol.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        s = np.linspace(0.0, self.length, _VALIDATION_SAMPLES)
        centers = self.point_at(s)
        r = np.asarray(self.radius(s, self.length), dtype=float)
        # extent of the circle at s along coordinate axis k: r * |e1_k, e2_k| envelope
        reach = np.sqrt(self.e1**2 + self.e2**2)  # per-axis amplitude of the circle
        mins = centers - np.outer(r, reach)
        maxs = centers + np.outer(r, reach)
        if np.any(mins < lo - tol) or np.any(maxs > hi + tol):
            raise GeometryError("vessel tube leaves the computational box")
