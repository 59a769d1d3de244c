"""Box domain, damping collar and observation region.

The domain is the box ``[-m1, m1] x [-m2, m2] x [-rho, rho]`` (3-D) or the
rectangle ``[-m1, m1] x [-rho, rho]`` (2-D analog, where the middle factor
is dropped).  The last coordinate is always the vertical one: the two
horizontal faces ``x_last = +rho`` (``gamma1``) and ``x_last = -rho``
(``gamma2``) trap vertical rays, the remaining faces form the lateral
boundary ``upsilon``.

The damping region ``omega`` is the lateral collar of width ``collar``;
the observation region ``omega0`` is the centered box shrunk by ``r_o``
laterally and of vertical half-height ``rho / 4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

INTERIOR = "interior"
OMEGA = "omega"
OMEGA0 = "omega0"
GAMMA1 = "gamma1"
GAMMA2 = "gamma2"
UPSILON = "upsilon"

Profile = Literal["indicator", "smooth-bump"]
Support = Literal["lateral", "boundary", "everywhere"]


class GeometryError(ValueError):
    """Invalid domain parameters or a point outside the closed box."""


@dataclass(frozen=True)
class DomainSpec:
    dim: int
    m1: float
    m2: float
    rho: float
    r_o: float
    collar: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GeometryError(f"dim must be 2 or 3, got {self.dim}")
        lengths = {"m1": self.m1, "rho": self.rho, "r_o": self.r_o, "collar": self.collar}
        if self.dim == 3:
            lengths["m2"] = self.m2
        for name, value in lengths.items():
            if not (value > 0 and math.isfinite(value)):
                raise GeometryError(f"{name} must be a positive length, got {value}")
        bound = min(self.half_sizes) / 2
        if not self.r_o < bound:
            raise GeometryError(
                f"r_o >= min(m1, m2, rho)/2: r_o={self.r_o}, bound={bound}"
            )
        if self.collar > self.r_o:
            raise GeometryError(f"collar > r_o: collar={self.collar}, r_o={self.r_o}")

    @property
    def h_o(self) -> float:
        return min(1.0, (self.r_o / 8) ** 2)

    @property
    def half_sizes(self) -> tuple[float, ...]:
        if self.dim == 2:
            return (self.m1, self.rho)
        return (self.m1, self.m2, self.rho)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(2 * m for m in self.half_sizes)

    @property
    def lateral_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim - 1))

    @property
    def vertical_axis(self) -> int:
        return self.dim - 1

    @property
    def diameter(self) -> float:
        return math.hypot(*self.sides)

    @property
    def volume(self) -> float:
        return math.prod(self.sides)

    def omega0_box(self) -> tuple[tuple[float, float], ...]:
        """Open box ``omega0`` as per-axis ``(lo, hi)`` intervals."""
        lateral = [(-m + self.r_o, m - self.r_o) for m in self.half_sizes[:-1]]
        return tuple(lateral + [(-self.rho / 4, self.rho / 4)])

    def omega_boxes(self) -> list[tuple[tuple[float, float], ...]]:
        """The lateral collar as a union of open slabs, one per lateral face."""
        boxes = []
        full = [(-m, m) for m in self.half_sizes]
        for axis in self.lateral_axes:
            m = self.half_sizes[axis]
            for lo, hi in ((m - self.collar, m), (-m, -m + self.collar)):
                box = list(full)
                box[axis] = (lo, hi)
                boxes.append(tuple(box))
        return boxes

    def region_boxes(self, region: str) -> list[tuple[tuple[float, float], ...]]:
        """Union-of-open-boxes description of ``omega``, ``omega0`` or both.

        ``region`` is one of ``"omega"``, ``"omega0"``, ``"omega+omega0"``
        (also accepted: ``"omega|omega0"``) or ``"box"`` for the whole of the
        interior.
        """
        if region == OMEGA:
            return self.omega_boxes()
        if region == OMEGA0:
            return [self.omega0_box()]
        if region in ("omega+omega0", "omega|omega0", "union"):
            return self.omega_boxes() + [self.omega0_box()]
        if region == "box":
            return [tuple((-m, m) for m in self.half_sizes)]
        raise GeometryError(f"unknown region {region!r}")

    def in_omega(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.all(np.abs(x) < np.asarray(self.half_sizes), axis=-1)
        collar = np.zeros(x.shape[:-1], dtype=bool)
        for axis in self.lateral_axes:
            collar |= np.abs(x[..., axis]) > self.half_sizes[axis] - self.collar
        return inside & collar

    def in_omega0(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        result = np.ones(x.shape[:-1], dtype=bool)
        for axis, (lo, hi) in enumerate(self.omega0_box()):
            result &= (x[..., axis] > lo) & (x[..., axis] < hi)
        return result

    def in_region(self, x, region: str) -> np.ndarray:
        if region == OMEGA:
            return self.in_omega(x)
        if region == OMEGA0:
            return self.in_omega0(x)
        if region in ("omega+omega0", "omega|omega0", "union"):
            return self.in_omega(x) | self.in_omega0(x)
        raise GeometryError(f"unknown region {region!r}")


def make_domain(dim: int, m1: float, m2: float | None, rho: float, r_o: float,
                collar: float | None = None) -> DomainSpec:
    """Build a validated domain; ``collar`` defaults to ``r_o``.

    For ``dim == 2`` the value of ``m2`` is ignored and stored as ``m1``.
    """
    if collar is None:
        collar = r_o
    if dim == 2 or m2 is None:
        m2 = m1
    return DomainSpec(int(dim), float(m1), float(m2), float(rho), float(r_o), float(collar))


def classify_point(spec: DomainSpec, x) -> frozenset[str]:
    """Regions and faces containing ``x``.

    Interior points may belong to ``omega`` and/or ``omega0`` (open-set
    semantics); points on the boundary only carry face labels.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise GeometryError(f"expected a point of dimension {spec.dim}, got shape {x.shape}")
    half = np.asarray(spec.half_sizes)
    if np.any(np.abs(x) > half) or not np.all(np.isfinite(x)):
        raise GeometryError(f"point {x.tolist()} lies outside the closed box")
    labels = set()
    on_face = np.abs(x) == half
    if on_face.any():
        v = spec.vertical_axis
        if x[v] == spec.rho:
            labels.add(GAMMA1)
        if x[v] == -spec.rho:
            labels.add(GAMMA2)
        if any(on_face[a] for a in spec.lateral_axes):
            labels.add(UPSILON)
        return frozenset(labels)
    labels.add(INTERIOR)
    if spec.in_omega(x):
        labels.add(OMEGA)
    if spec.in_omega0(x):
        labels.add(OMEGA0)
    return frozenset(labels)


@dataclass(frozen=True)
class DampingField:
    """Damping coefficient ``alpha`` supported in a collar near the boundary.

    ``support="lateral"`` damps the collar of the lateral faces (the set
    ``omega``); ``"boundary"`` damps a collar of every face, including the two
    trapping faces; ``"everywhere"`` is the constant field ``alpha_max``.

    With ``ramp_d`` a one-dimensional profile that vanishes inside the collar
    boundary, the field is ``alpha_max * (1 - prod_d (1 - ramp_d(x_d)))`` over
    the damped axes.  The indicator ramp is a step, the smooth ramp rises as
    ``sin^2`` from 0 at the collar boundary to 1 at the face, so ``alpha`` is
    continuous across the boundary of its support.
    """

    profile: Profile = "indicator"
    alpha_max: float = 1.0
    support: Support = "lateral"

    def __post_init__(self):
        if self.profile not in ("indicator", "smooth-bump"):
            raise GeometryError(f"unknown damping profile {self.profile!r}")
        if self.support not in ("lateral", "boundary", "everywhere"):
            raise GeometryError(f"unknown damping support {self.support!r}")
        if not (self.alpha_max >= 0 and math.isfinite(self.alpha_max)):
            raise GeometryError(f"alpha_max must be finite and >= 0, got {self.alpha_max}")

    def damped_axes(self, spec: DomainSpec) -> tuple[int, ...]:
        if self.support == "lateral":
            return spec.lateral_axes
        return tuple(range(spec.dim))

    def ramp(self, spec: DomainSpec, axis: int, xa) -> np.ndarray:
        """One-dimensional collar profile in ``[0, 1]`` along ``axis``."""
        xa = np.asarray(xa, dtype=float)
        if self.support == "everywhere":
            return np.ones_like(xa)
        m = spec.half_sizes[axis]
        depth = (np.abs(xa) - (m - spec.collar)) / spec.collar
        if self.profile == "indicator":
            return (depth > 0).astype(float)
        depth = np.clip(depth, 0.0, 1.0)
        return np.sin(0.5 * np.pi * depth) ** 2

    def breakpoints(self, spec: DomainSpec, axis: int) -> list[float]:
        """Points along ``axis`` where the profile is not smooth."""
        m = spec.half_sizes[axis]
        if self.support == "everywhere" or axis not in self.damped_axes(spec):
            return [-m, m]
        return [-m, -m + spec.collar, m - spec.collar, m]

    def __call__(self, spec: DomainSpec, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.support == "everywhere":
            return np.full(x.shape[:-1], self.alpha_max)
        keep = np.ones(x.shape[:-1])
        for axis in self.damped_axes(spec):
            keep = keep * (1.0 - self.ramp(spec, axis, x[..., axis]))
        return self.alpha_max * (1.0 - keep)


def alpha_at(field: DampingField, spec: DomainSpec, x) -> float:
    """Damping rate at a single point of the closed box."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise GeometryError(f"expected a point of dimension {spec.dim}, got shape {x.shape}")
    if np.any(np.abs(x) > np.asarray(spec.half_sizes)):
        raise GeometryError(f"point {x.tolist()} lies outside the closed box")
    return float(field(spec, x))
