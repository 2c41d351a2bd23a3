import numpy as np
import pytest
from numpy.testing import assert_allclose

from pilir import autodiff as ad
from pilir import networks as nw
from pilir import problems as pb
from pilir import sampling


def _interior(problem, n=500, seed=0):
    return sampling.sample(problem, (n, 1 if problem.ic else 0, 10), seed).interior


@pytest.mark.parametrize("name,kw", [
    ("helmholtz2d", {}), ("helmholtz2d", {"a": (4, 4), "k": 2.0}), ("helmholtz3d", {}),
    ("convection", {}), ("convection_ms", {}), ("convection", {"beta": 5.0}),
])
def test_exact_solutions_have_tiny_residual(name, kw):
    p = pb.get_problem(name, **kw)
    r = p.residual_of_exact(_interior(p))
    scale = max(1.0, float(np.max(np.abs(p.exact(_interior(p))))))
    assert np.max(np.abs(r)) <= 1e-8 * scale


def test_exact_model_matches_closed_form():
    p = pb.get_problem("convection_ms")
    x = _interior(p)
    assert_allclose(nw.predict(pb.ExactModel(p), x), p.exact(x), atol=1e-12)
    assert pb.ExactModel(p).parameters() == []


def test_wrong_solution_has_large_residual():
    p = pb.get_problem("helmholtz2d", a=(2, 3))
    q = pb.get_problem("helmholtz2d", a=(3, 2))
    x = _interior(p)
    res = p.operator(p.jets(pb.ExactModel(q), ad.Tape(), x), x).value
    assert np.max(np.abs(res)) > 1.0


def test_helmholtz_source_formula():
    x = np.array([[0.1, -0.3]])
    want = (1 - (np.pi * 2) ** 2 - (np.pi * 3) ** 2) * np.sin(2 * np.pi * 0.1) * np.sin(3 * np.pi * -0.3)
    assert_allclose(pb.helmholtz_source(x, (2, 3), 1.0), [want])


def test_initial_conditions():
    ac = pb.get_problem("allen_cahn")
    x = np.array([[0.5, 0.0], [-1.0, 0.0]])
    assert_allclose(ac.ic.target(x)[:, 0], [0.25 * np.cos(np.pi / 2), -1.0], atol=1e-15)
    rd = pb.get_problem("reaction_diffusion")
    assert_allclose(rd.ic.target(np.array([[np.pi, 0.0]])), [[1.0]])
    cms = pb.get_problem("convection_ms")
    xs = np.array([[0.7, 0.0]])
    assert_allclose(cms.ic.target(xs)[0, 0],
                    np.sin(0.7) + 0.5 * np.sin(2.8) + 0.1 * np.sin(5.6) + 0.1 * np.sin(11.2))


def test_problem_metadata():
    ac = pb.get_problem("allen_cahn")
    assert ac.time_dependent and ac.spatial_dims == 1
    assert ac.params == {"nu": 1e-4, "lambda": 5.0}
    assert {type(b) for b in ac.bcs} == {pb.PeriodicPair}
    h3 = pb.get_problem("helmholtz3d")
    assert h3.dim == 3 and not h3.time_dependent and h3.ic is None
    with pytest.raises(ValueError):
        pb.get_problem("burgers")
    with pytest.raises(ValueError):
        pb.get_problem("helmholtz2d", a=(1, 2, 3))


def test_sampling_is_deterministic_and_in_bounds():
    p = pb.get_problem("allen_cahn")
    a = sampling.sample(p, (200, 50, 40), seed=7)
    b = sampling.sample(p, (200, 50, 40), seed=7)
    c = sampling.sample(p, (200, 50, 40), seed=8)
    assert np.array_equal(a.interior, b.interior)
    assert not np.array_equal(a.interior, c.interior)
    lo, hi = p.bounds[:, 0], p.bounds[:, 1]
    assert np.all((a.interior >= lo) & (a.interior <= hi))
    assert np.all(a.initial[:, 1] == 0.0)


def test_periodic_pairs_share_points():
    p = pb.get_problem("allen_cahn")
    s = sampling.sample(p, (10, 10, 30), seed=1)
    assert len(s.boundary) == 2
    v, d = s.boundary
    assert v.left is d.left
    assert np.all(v.left[:, 0] == -1.0) and np.all(v.right[:, 0] == 1.0)
    assert_allclose(v.left[:, 1], v.right[:, 1])


def test_dirichlet_points_on_faces():
    p = pb.get_problem("helmholtz3d")
    pts = sampling.sample(p, (10, 0, 300), seed=2).boundary[0].points
    on_face = np.isclose(np.abs(pts), 1.0)
    assert np.all(on_face.sum(axis=1) >= 1)


def test_sampling_errors():
    with pytest.raises(ValueError):
        sampling.sample(pb.get_problem("helmholtz2d"), (10, 5, 5))
    with pytest.raises(ValueError):
        sampling.sample(pb.get_problem("convection"), (0, 5, 5))
    assert sampling.default_counts(pb.get_problem("helmholtz3d")) == (50_000, 5_000, 5_000)


def test_make_rng_accepts_sequences():
    a = sampling.make_rng([3, 1]).random(4)
    assert np.array_equal(a, sampling.make_rng([3, 1]).random(4))
    assert not np.array_equal(a, sampling.make_rng([3, 2]).random(4))
