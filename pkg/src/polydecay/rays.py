"""Billiard flow in the box: specular rays, trapped orbits and sampled GCC checks.

Rays move at unit speed and reflect specularly off the faces.  Hitting an
edge or corner (two faces reached at the same parameter, up to 1e-12) ends
the trace with :class:`CornerHit`, since no reflection rule applies there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .geometry import GAMMA1, GAMMA2, UPSILON, DomainSpec

CORNER_TOL = 1e-12


class RayError(ValueError):
    pass


class CornerHit(RuntimeError):
    """Trace reached an edge or corner; ``ray`` is the last valid state."""

    def __init__(self, ray: "Ray", faces):
        super().__init__(f"ray hit an edge/corner (axes {sorted(faces)}) at clock {ray.clock}")
        self.ray = ray
        self.faces = tuple(faces)


@dataclass(frozen=True)
class Ray:
    position: tuple
    direction: tuple
    clock: float = 0.0
    reflections: int = 0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        d = tuple(float(v) for v in self.direction)
        if len(pos) != len(d):
            raise RayError("position and direction dimensions differ")
        if abs(math.hypot(*d) - 1.0) > 1e-12:
            raise RayError(f"direction must be a unit vector, |d| = {math.hypot(*d)}")
        if self.clock < 0:
            raise RayError("clock must be >= 0")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "direction", d)

    def reversed(self) -> "Ray":
        return replace(self, direction=tuple(-v for v in self.direction))


def make_ray(position, direction, clock: float = 0.0) -> Ray:
    """Ray with ``direction`` normalized to unit length."""
    d = np.asarray(direction, dtype=float)
    n = float(np.linalg.norm(d))
    if n == 0:
        raise RayError("zero direction")
    return Ray(tuple(position), tuple(d / n), clock)


def _check_inside(spec: DomainSpec, ray: Ray):
    if len(ray.position) != spec.dim:
        raise RayError(f"ray dimension {len(ray.position)} != domain dimension {spec.dim}")
    for x, m in zip(ray.position, spec.half_sizes):
        if abs(x) > m * (1 + 1e-12):
            raise RayError(f"ray position {ray.position} outside the closed box")


def _exit_parameters(spec: DomainSpec, pos, d):
    out = []
    for x, v, m in zip(pos, d, spec.half_sizes):
        if v > 0:
            out.append((m - x) / v)
        elif v < 0:
            out.append((-m - x) / v)
        else:
            out.append(math.inf)
    return out


def _face_label(spec: DomainSpec, axis: int, sign: float) -> str:
    if axis != spec.vertical_axis:
        return UPSILON
    return GAMMA1 if sign > 0 else GAMMA2


def advance_to_boundary(spec: DomainSpec, ray: Ray):
    """Move to the first face hit and reflect; returns ``(ray', face, length)``."""
    _check_inside(spec, ray)
    params = _exit_parameters(spec, ray.position, ray.direction)
    axis = min(range(spec.dim), key=params.__getitem__)
    t = max(params[axis], 0.0)
    close = [a for a in range(spec.dim)
             if abs(params[a] - params[axis]) <= CORNER_TOL * max(1.0, abs(t))]
    if len(close) > 1:
        raise CornerHit(ray, close)
    sign = math.copysign(1.0, ray.direction[axis])
    pos = []
    for a, (x, v, m) in enumerate(zip(ray.position, ray.direction, spec.half_sizes)):
        if a == axis:
            pos.append(sign * m)
        else:
            pos.append(min(m, max(-m, x + t * v)))
    d = list(ray.direction)
    d[axis] = -d[axis]
    new = Ray(tuple(pos), tuple(d), ray.clock + t, ray.reflections + 1)
    return new, _face_label(spec, axis, sign), t


def ray_at(spec: DomainSpec, ray: Ray, duration: float) -> Ray:
    """State of the billiard flow after travelling ``duration``."""
    if duration < 0:
        raise RayError("duration must be >= 0")
    target = ray.clock + duration
    while True:
        params = _exit_parameters(spec, ray.position, ray.direction)
        left = target - ray.clock
        if min(params) > left:
            pos = tuple(x + left * v for x, v in zip(ray.position, ray.direction))
            return Ray(pos, ray.direction, target, ray.reflections)
        ray, _, _ = advance_to_boundary(spec, ray)


def _box_entry(pos, d, box, length):
    """Smallest parameter in ``[0, length]`` where the segment is inside the open box."""
    lo_t, hi_t = -math.inf, math.inf
    for x, v, (lo, hi) in zip(pos, d, box):
        if v == 0:
            if not lo < x < hi:
                return None
            continue
        a, b = (lo - x) / v, (hi - x) / v
        if a > b:
            a, b = b, a
        lo_t, hi_t = max(lo_t, a), min(hi_t, b)
    start = max(lo_t, 0.0)
    if start < hi_t and start <= length:
        return start
    return None


def _first_hit(spec: DomainSpec, ray: Ray, boxes, T_max: float, detect_cycles: bool):
    """``(hit clock or None, reflections at that moment)``."""
    seen = set()
    start_clock = ray.clock
    while True:
        params = _exit_parameters(spec, ray.position, ray.direction)
        seg = min(params)
        remaining = start_clock + T_max - ray.clock
        hits = [h for h in (_box_entry(ray.position, ray.direction, b, min(seg, remaining))
                            for b in boxes) if h is not None]
        if hits:
            return ray.clock + min(hits), ray.reflections
        if seg >= remaining:
            return None, ray.reflections
        ray, _, _ = advance_to_boundary(spec, ray)
        if detect_cycles:
            # an exactly repeated state means a periodic orbit that has
            # already been checked in full
            key = (ray.position, ray.direction)
            if key in seen:
                return None, ray.reflections
            seen.add(key)


def _region_boxes(spec: DomainSpec, region):
    if isinstance(region, str):
        return spec.region_boxes(region)
    return list(region)


def first_hit_time(spec: DomainSpec, ray: Ray, region, T_max: float,
                   detect_cycles: bool = True):
    """Clock at which the ray first enters the open ``region``, or ``None``.

    ``region`` is a region name understood by :meth:`DomainSpec.region_boxes`
    or an explicit list of boxes.  With ``detect_cycles`` an exactly periodic
    orbit (for instance a vertical ray) is recognised after one period.
    """
    if not T_max > 0:
        raise RayError("T_max must be positive")
    _check_inside(spec, ray)
    hit, _ = _first_hit(spec, ray, _region_boxes(spec, region), T_max, detect_cycles)
    return hit


def vertical_unfolding(rho: float, x0: float, v: float, t: float) -> float:
    """Vertical billiard coordinate via the triangle-wave unfolding of free motion."""
    y = (x0 + v * t + rho) % (4 * rho)
    return y - rho if y <= 2 * rho else 3 * rho - y


# ---------------------------------------------------------------------------
# sampled geometric control
# ---------------------------------------------------------------------------


@dataclass
class GccReport:
    sample_count: int
    controlled_fraction: float
    max_first_hit_time: float | None
    witnesses: list = field(default_factory=list)
    corner_terminated: int = 0
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "controlled_fraction": self.controlled_fraction,
            "max_first_hit_time": self.max_first_hit_time,
            "corner_terminated": self.corner_terminated,
            "witness_count": len(self.witnesses),
            "witnesses": [{"position": list(w.position), "direction": list(w.direction)}
                          for w in self.witnesses[:20]],
        }


def sample_directions(dim: int, n: int, seed: int, include_axis: bool = True) -> np.ndarray:
    """Low-discrepancy unit directions plus, optionally, the two vertical ones."""
    out = []
    if n > 0:
        if dim == 2:
            shift = np.random.default_rng(seed).random()
            ang = 2 * np.pi * (np.arange(n) + shift) / n
            out.append(np.column_stack([np.cos(ang), np.sin(ang)]))
        else:
            u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
            z = 2 * u[:, 0] - 1
            r = np.sqrt(np.clip(1 - z * z, 0, None))
            phi = 2 * np.pi * u[:, 1]
            out.append(np.column_stack([r * np.cos(phi), r * np.sin(phi), z]))
    if include_axis:
        e = np.zeros((2, dim))
        e[0, -1], e[1, -1] = 1.0, -1.0
        out.append(e)
    if not out:
        return np.zeros((0, dim))
    d = np.vstack(out)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_positions(spec: DomainSpec, n: int, seed: int, within: str = "box") -> np.ndarray:
    """Scrambled Halton points in the open box or in ``omega0``."""
    if n <= 0:
        return np.zeros((0, spec.dim))
    if within == "box":
        box = [(-m, m) for m in spec.half_sizes]
    elif within == "omega0":
        box = list(spec.omega0_box())
    else:
        raise RayError(f"unknown sampling region {within!r}")
    u = qmc.Halton(d=spec.dim, scramble=True, seed=seed).random(n)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + u * (hi - lo)


def gcc_check(spec: DomainSpec, region, T_max: float, n_pos: int, n_dir: int,
              seed: int = 0, *, within: str = "box", include_axis: bool = True,
              detect_cycles: bool = True) -> GccReport:
    """Trace every (position, direction) pair of a quasi-random sample.

    The sample is the product of ``n_pos`` positions (in ``within``) and
    ``n_dir`` directions plus the vertical pair when ``include_axis``.  With
    no positions the verdict is vacuous (fraction 1.0).
    """
    boxes = _region_boxes(spec, region)
    positions = sample_positions(spec, n_pos, seed, within)
    directions = sample_directions(spec.dim, n_dir, seed + 1, include_axis)
    controlled = 0
    corners = 0
    max_hit = None
    witnesses, records = [], []
    for p in positions:
        for d in directions:
            ray = Ray(tuple(p), tuple(d))
            try:
                hit, refl = _first_hit(spec, ray, boxes, T_max, detect_cycles)
            except CornerHit as exc:
                corners += 1
                hit, refl = None, exc.ray.reflections
            if hit is None:
                witnesses.append(ray)
            else:
                controlled += 1
                max_hit = hit if max_hit is None else max(max_hit, hit)
            records.append((ray.position, ray.direction, hit, refl))
    count = len(records)
    fraction = controlled / count if count else 1.0
    return GccReport(count, fraction, max_hit, witnesses, corners, records)
