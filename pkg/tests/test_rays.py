from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from polydecay.geometry import GAMMA1, UPSILON, make_domain
from polydecay.rays import (
    CornerHit,
    Ray,
    RayError,
    advance_to_boundary,
    first_hit_time,
    gcc_check,
    make_ray,
    ray_at,
    sample_directions,
    vertical_unfolding,
)

CUBE = make_domain(3, 1, 1, 1, 0.2, 0.2)


def test_vertical_reflection():
    new, face, length = advance_to_boundary(CUBE, Ray((0, 0, 0), (0, 0, 1)))
    assert face == GAMMA1 and length == 1.0
    assert new.position == (0, 0, 1) and new.direction == (0, 0, -1)
    assert new.clock == 1.0 and new.reflections == 1


def test_lateral_reflection():
    new, face, length = advance_to_boundary(CUBE, Ray((0, 0, 0), (1, 0, 0)))
    assert face == UPSILON and length == 1.0
    assert new.position == (1, 0, 0) and new.direction == (-1, 0, 0)


def test_oblique_first_face():
    new, face, length = advance_to_boundary(CUBE, Ray((0.5, 0, 0), (0.6, 0, 0.8)))
    assert face == UPSILON
    assert length == pytest.approx(5 / 6, abs=1e-15)
    assert np.allclose(new.position, (1, 0, 2 / 3), atol=1e-15)
    assert np.allclose(new.direction, (-0.6, 0, 0.8))


def test_corner_is_reported():
    with pytest.raises(CornerHit) as info:
        advance_to_boundary(CUBE, make_ray((0, 0, 0), (1, 1, 0)))
    assert set(info.value.faces) == {0, 1}


def test_invalid_rays():
    with pytest.raises(RayError):
        Ray((0, 0, 0), (1, 1, 0))
    with pytest.raises(RayError):
        make_ray((0, 0, 0), (0, 0, 0))
    with pytest.raises(RayError):
        advance_to_boundary(CUBE, Ray((1.5, 0, 0), (1, 0, 0)))


def test_first_hit_examples():
    vertical = Ray((0, 0, 0), (0, 0, 1))
    assert first_hit_time(CUBE, vertical, "omega", 1e4) is None
    assert first_hit_time(CUBE, vertical, "omega", 50.0, detect_cycles=False) is None
    assert first_hit_time(CUBE, vertical, "omega+omega0", 1.0) == 0.0
    assert first_hit_time(CUBE, Ray((0, 0, 0), (1, 0, 0)), "omega", 10.0) == pytest.approx(0.8)
    with pytest.raises(RayError):
        first_hit_time(CUBE, vertical, "omega", 0.0)


def test_gcc_examples():
    rep = gcc_check(CUBE, "omega+omega0", 20.0, 30, 30, seed=3)
    assert rep.sample_count == 30 * 32
    assert rep.controlled_fraction == 1.0
    assert rep.max_first_hit_time is not None and rep.max_first_hit_time <= 20.0
    trapped = gcc_check(CUBE, "omega", 20.0, 25, 0, within="omega0")
    assert trapped.sample_count == 50 and trapped.controlled_fraction == 0.0
    assert len(trapped.witnesses) == 50
    empty = gcc_check(CUBE, "omega", 20.0, 0, 10)
    assert empty.sample_count == 0 and empty.controlled_fraction == 1.0


def test_gcc_is_seed_deterministic():
    a = gcc_check(CUBE, "omega", 5.0, 10, 10, seed=7)
    b = gcc_check(CUBE, "omega", 5.0, 10, 10, seed=7)
    assert a.records == b.records
    c = gcc_check(CUBE, "omega", 5.0, 10, 10, seed=8)
    assert a.records != c.records


@pytest.mark.parametrize("dim", [2, 3])
def test_sampled_directions_are_unit_and_include_axis(dim):
    d = sample_directions(dim, 64, 0)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert any(np.allclose(v, np.eye(dim)[-1]) for v in d)
    assert any(np.allclose(v, -np.eye(dim)[-1]) for v in d)


def test_unit_speed_over_many_reflections():
    spec = make_domain(3, 1.0, 1.3, 0.7, 0.2)
    ray = make_ray((0.1, -0.2, 0.3), (0.3141, 0.2718, 0.91))
    for _ in range(10_000):
        ray, _, _ = advance_to_boundary(spec, ray)
    assert ray.reflections == 10_000
    assert abs(math.hypot(*ray.direction) - 1.0) <= 1e-12


directions = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: math.hypot(*v) > 0.1)
positions = st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))


@settings(max_examples=100, deadline=None)
@given(positions, directions, st.integers(1, 100))
def test_time_reversal(pos, d, k):
    spec = make_domain(3, 1.0, 1.2, 0.8, 0.2)
    pos = (pos[0], pos[1] * 1.2, pos[2] * 0.8)
    start = make_ray(pos, d)
    try:
        ray = start
        for _ in range(k):
            ray, _, _ = advance_to_boundary(spec, ray)
        back = ray_at(spec, ray.reversed(), ray.clock)
    except CornerHit:
        assume(False)
    assert np.allclose(back.position, start.position, atol=1e-9)
    assert np.allclose(back.direction, np.negative(start.direction), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(positions, directions, st.floats(0, 60))
def test_vertical_coordinate_matches_unfolding(pos, d, t):
    spec = make_domain(3, 1.0, 1.0, 0.7, 0.2)
    pos = (pos[0], pos[1], pos[2] * 0.7)
    ray = make_ray(pos, d)
    try:
        end = ray_at(spec, ray, t)
    except CornerHit:
        assume(False)
    assert end.position[2] == pytest.approx(
        vertical_unfolding(0.7, ray.position[2], ray.direction[2], t), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(positions, directions)
def test_union_hits_no_later_than_collar(pos, d):
    ray = make_ray(pos, d)
    try:
        t_union = first_hit_time(CUBE, ray, "omega+omega0", 30.0)
        t_collar = first_hit_time(CUBE, ray, "omega", 30.0)
    except CornerHit:
        assume(False)
    if t_collar is not None:
        assert t_union is not None and t_union <= t_collar
