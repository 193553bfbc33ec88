import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnvsr.terrain import Terrain, bump_statistics, generate_terrain, ground_heights, terrain_height_at


def test_same_seed_is_bit_identical():
    a = generate_terrain(1, 1000, 1, 10, 10)
    b = generate_terrain(1, 1000, 1, 10, 10)
    assert a.control_points == b.control_points


def test_different_seeds_differ():
    assert generate_terrain(1).control_points != generate_terrain(2).control_points


def test_bump_statistics_match_requested_averages():
    t = generate_terrain(1, span=1000, avg_bump_height=1, avg_bump_distance=10, start_plateau=10)
    height, spacing = bump_statistics(t)
    assert 0.8 <= height <= 1.2
    assert 8 <= spacing <= 12


@given(seed=st.integers(0, 2**63 - 1), x=st.floats(0, 10))
def test_plateau_is_flat(seed, x):
    t = generate_terrain(seed, span=200, start_plateau=10)
    assert terrain_height_at(t, x) == 0.0


@given(seed=st.integers(0, 2**63 - 1))
def test_covers_span_and_bounded(seed):
    t = generate_terrain(seed, span=300, avg_bump_height=0.5)
    lo, hi = t.span
    assert lo == 0 and hi >= 300
    assert np.all(np.diff(t.xs) > 0)
    assert np.all((t.ys >= 0) & (t.ys <= 1.0))


def test_linear_interpolation():
    t = Terrain.from_points([(0, 0), (10, 2)])
    assert terrain_height_at(t, 5) == 1.0
    assert terrain_height_at(t, 0) == 0.0
    assert terrain_height_at(t, 10) == 2.0


def test_out_of_span_query_raises():
    t = Terrain.from_points([(0, 0), (10, 2)])
    with pytest.raises(IndexError):
        terrain_height_at(t, -1)
    with pytest.raises(IndexError):
        terrain_height_at(t, 10.5)


def test_physics_lookup_extends_flat_beyond_ends():
    t = Terrain.from_points([(0, 0.5), (10, 2)])
    np.testing.assert_array_equal(ground_heights(t, np.array([-3.0, 12.0])), [0.5, 2.0])


@pytest.mark.parametrize("kwargs", [dict(span=0), dict(avg_bump_height=0), dict(avg_bump_distance=-1)])
def test_non_positive_arguments_rejected(kwargs):
    with pytest.raises(ValueError):
        generate_terrain(1, **kwargs)


def test_non_increasing_points_rejected():
    with pytest.raises(ValueError):
        Terrain.from_points([(0, 0), (0, 1)])
