import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from pilir import autodiff as ad
from pilir import grid as g

from oracles import interp_oracle


def test_corner_patterns_binary_order():
    assert_array_equal(g.corner_patterns(2), [[0, 0], [0, 1], [1, 0], [1, 1]])
    assert g.corner_patterns(3).shape == (8, 3)


def test_normalize_maps_bounds_and_rejects_outside():
    b = [(-1.0, 1.0), (0.0, 2 * np.pi)]
    u = g.normalize(np.array([[-1.0, 0.0], [1.0, 2 * np.pi], [0.0, np.pi]]), b)
    assert_allclose(u, [[0, 0], [1, 1], [0.5, 0.5]])
    with pytest.raises(ValueError):
        g.normalize(np.array([[1.1, 0.0]]), b)
    with pytest.raises(ValueError):
        g.normalize(np.array([[0.0, 0.0]]), [(1.0, 1.0), (0.0, 1.0)])


def test_upper_face_uses_last_cell():
    q = g.locate(np.array([[1.0, 0.0]]), (5, 5))
    assert_array_equal(q.anchor, [[3, 0]])
    assert_allclose(q.local, [[1.0, 0.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(2, 9), st.integers(0, 2 ** 31 - 1),
       st.sampled_from(["multilinear", "cosine"]))
def test_weights_partition_of_unity(d, n, seed, weighting):
    u = np.random.default_rng(seed).uniform(size=(64, d))
    q = g.query(u, (n,) * d, weighting)
    assert q.weights.shape == (64, 2 ** d)
    assert np.all(q.weights >= 0)
    assert_allclose(q.weights.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
def test_corners_enclose_point(d, n, seed):
    u = np.random.default_rng(seed).uniform(size=(32, d))
    q = g.query(u, (n,) * d)
    verts = np.stack(np.unravel_index(q.corners, (n,) * d), axis=-1) / (n - 1)
    assert np.all(verts.min(axis=1) <= u + 1e-15)
    assert np.all(verts.max(axis=1) >= u - 1e-15)
    assert_allclose(q.offsets, (u * (n - 1) - q.anchor)[:, None, :] - g.corner_patterns(d))


@pytest.mark.parametrize("weighting", ["multilinear", "cosine"])
def test_gather_and_blend_match_oracle(weighting):
    rng = np.random.default_rng(5)
    fg = g.FeatureGrid((4, 6), 3, 2, rng=rng)
    u = rng.uniform(size=(50, 2))
    q = g.query(u, fg.resolution, weighting)
    t = ad.Tape()
    for m in range(2):
        z = g.gather(fg, q, m, t).value
        blended = np.einsum("bk,bkc->bc", q.weights, z)
        assert_allclose(blended, interp_oracle(fg.params[m].value, u, weighting), atol=1e-14)


def test_multilinear_reproduces_linear_functions():
    n = 7
    xs = np.linspace(0, 1, n)
    values = (2 * xs[:, None] - 3 * xs[None, :] + 0.5)[..., None]
    u = np.random.default_rng(2).uniform(size=(100, 2))
    assert_allclose(interp_oracle(values, u, "multilinear")[:, 0], 2 * u[:, 0] - 3 * u[:, 1] + 0.5, atol=1e-13)
    fg = g.FeatureGrid((n, n), 1, values=[values])
    q = g.query(u, (n, n), "multilinear")
    z = g.gather(fg, q, 0, ad.Tape()).value[..., 0]
    assert_allclose((q.weights * z).sum(1), 2 * u[:, 0] - 3 * u[:, 1] + 0.5, atol=1e-13)


def test_cosine_weights_have_zero_slope_at_vertices():
    j = ad.jet_eval(lambda t: g.weights_cosine(t, 1), np.array([[0.0], [1.0], [0.5]]), 0)
    assert_allclose(j.d1.value[:2], 0.0, atol=1e-15)
    assert_allclose(j.d1.value[2], [-np.pi / 2, np.pi / 2])


def test_gather_gradient_touches_only_cell_corners():
    fg = g.FeatureGrid((5, 5, 5), 2, 3, rng=np.random.default_rng(0))
    q = g.query(np.array([[0.3, 0.6, 0.9]]), fg.resolution, "cosine")
    t = ad.Tape()
    total = None
    for m in range(3):
        s = ad.sum(g.gather(fg, q, m, t) * q.weights[..., None])
        total = s if total is None else total + s
    grads = ad.backward(total)
    for m in range(3):
        touched = np.any(grads[f"grid.{m}.values"] != 0, axis=-1)
        assert touched.sum() == 8


def test_feature_grid_validation():
    with pytest.raises(ValueError):
        g.FeatureGrid((1, 4), 2)
    with pytest.raises(ValueError):
        g.FeatureGrid((3, 3), 2, values=[np.zeros((3, 2, 2))])
    with pytest.raises(ValueError):
        g.query(np.zeros((1, 2)), (3, 3), "spline")
