import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iotopt.core import (BoxSet, DimensionError, RngStream, ShrunkSet, as_decision, project_box,
                         sample_unit_sphere, shrink_box)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def box_and_point(draw, max_dim=6):
    d = draw(st.integers(1, max_dim))
    lo = draw(arrays(float, d, elements=finite))
    width = draw(arrays(float, d, elements=st.floats(0, 100)))
    x = draw(arrays(float, d, elements=st.floats(-2e3, 2e3)))
    return BoxSet(lo, lo + width), x


def test_project_clamps():
    box = BoxSet.uniform(2, 0, 1)
    assert np.array_equal(project_box([2, -1], box), [1, 0])


def test_project_inside_is_identity():
    box = BoxSet.uniform(3, 0, 1)
    x = np.array([0.1, 0.5, 0.9])
    assert np.array_equal(project_box(x, box), x)


def test_project_matches_grid_search():
    grid = np.linspace(0, 1, 1001)
    best = grid[np.argmin(np.abs(0.5 - grid))]
    assert project_box([0.5], BoxSet.uniform(1, 0, 1))[0] == pytest.approx(best, abs=1e-12)


def test_project_dimension_mismatch():
    with pytest.raises(DimensionError):
        project_box([1.0, 2.0], BoxSet.uniform(3, 0, 1))


def test_box_validation():
    with pytest.raises(ValueError):
        BoxSet([1.0], [0.0])
    with pytest.raises(ValueError):
        BoxSet([0.0], [np.inf])
    with pytest.raises(DimensionError):
        BoxSet([0.0, 0.0], [1.0])


def test_as_decision_checks():
    with pytest.raises(DimensionError):
        as_decision([1, 2], d=3)
    with pytest.raises(ValueError):
        as_decision([np.nan])


def test_shrink_about_center():
    s = shrink_box(BoxSet([0.0], [4.0]), 0.5).box
    assert np.array_equal(s.lower, [1.0]) and np.array_equal(s.upper, [3.0])


def test_shrink_zero_is_base():
    box = BoxSet.uniform(2, 0, 4)
    assert shrink_box(box, 0.0).box is box


@pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
def test_shrink_rejects_gamma(gamma):
    with pytest.raises(ValueError):
        shrink_box(BoxSet.uniform(1, 0, 1), gamma)


def test_shrunk_perturbations_stay_inside():
    box = BoxSet.uniform(2, 0, 4)
    sh = shrink_box(box, 0.25)
    assert sh.margin == pytest.approx(0.5)
    gen = np.random.default_rng(0)
    lo, hi = sh.box.lower, sh.box.upper
    pts = lo + (hi - lo) * gen.random((10_000, 2))
    u = sample_unit_sphere(2, gen, size=10_000)
    moved = pts + 0.4 * u
    assert np.all(moved >= box.lower) and np.all(moved <= box.upper)


def test_sphere_one_dimensional():
    u = sample_unit_sphere(1, RngStream(3, 0), size=10_000)
    assert set(np.unique(u)) <= {-1.0, 1.0}
    assert abs((u > 0).mean() - 0.5) <= 0.02


def test_sphere_norm_and_symmetry():
    u = sample_unit_sphere(3, RngStream(4, 0), size=100_000)
    assert np.max(np.abs(np.linalg.norm(u, axis=1) - 1)) <= 1e-12
    assert np.all(np.abs(u.mean(0)) <= 0.02)


def test_sphere_rejects_dim_zero():
    with pytest.raises(ValueError):
        sample_unit_sphere(0, RngStream(0))


def test_rng_streams_are_keyed():
    a, b, c = RngStream(5, 1), RngStream(5, 1), RngStream(5, 2)
    x, y, z = a.random(100), b.random(100), c.random(100)
    assert np.array_equal(x, y)
    assert not np.array_equal(x, z)
    assert np.array_equal(RngStream(5, 0).spawn(1).random(100), x)


@given(box_and_point())
def test_projection_idempotent(bp):
    box, x = bp
    p = project_box(x, box)
    assert np.array_equal(project_box(p, box), p)
    assert box.contains(p)


@given(box_and_point(), st.integers(0, 2**32 - 1))
def test_projection_optimal(bp, seed):
    box, x = bp
    p = project_box(x, box)
    gen = np.random.default_rng(seed)
    ys = box.lower + (box.upper - box.lower) * gen.random((1000, box.dim))
    assert np.all(np.linalg.norm(x - p) <= np.linalg.norm(x - ys, axis=1) + 1e-9)


@given(box_and_point(), st.floats(0, 0.999), st.floats(0, 0.999))
def test_shrink_monotone(bp, g1, g2):
    box, _ = bp
    g1, g2 = min(g1, g2), max(g1, g2)
    s1, s2 = shrink_box(box, g1).box, shrink_box(box, g2).box
    assert s2.subset_of(s1, tol=1e-9)
    assert s1.subset_of(box, tol=1e-9)


@given(st.integers(0, 2**63), st.integers(0, 1000))
def test_rng_determinism(seed, sid):
    assert np.array_equal(RngStream(seed, sid).random(8), RngStream(seed, sid).random(8))


def test_shrunk_set_is_value_object():
    sh = ShrunkSet(BoxSet.uniform(1, 0, 2), 0.5)
    with pytest.raises(Exception):
        sh.gamma = 0.1
