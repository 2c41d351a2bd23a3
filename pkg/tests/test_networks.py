import numpy as np
import pytest
from numpy.testing import assert_allclose

from pilir import autodiff as ad
from pilir import grid as gridlib
from pilir import networks as nw


def identity_pilir(interp: nw.InterpGridModel) -> nw.PilirModel:
    """PILIR whose synthesis net returns the latent unchanged and ignores the offset."""
    c, d = interp.grid.channels, interp.dim
    synth = nw.Mlp([c + d, c], "identity", "synth")
    synth.layers[0][0].value[...] = np.hstack([np.eye(c), np.zeros((c, d))])
    return nw.PilirModel(interp.bounds, interp.grid, synth, interp.head, interp.weighting)


@pytest.mark.parametrize("weighting", ["multilinear", "cosine"])
def test_identity_synth_reduces_to_interpolation(weighting):
    interp = nw.InterpGridModel.create([(-1, 1), (0, 2)], (6, 9), channels=3, num_grids=2,
                                       weighting=weighting, seed=4)
    x = np.random.default_rng(0).uniform([-1, 0], [1, 2], size=(500, 2))
    assert np.max(np.abs(nw.predict(identity_pilir(interp), x) - nw.predict(interp, x))) <= 1e-14


def test_pilir_shapes_and_parameter_names():
    m = nw.PilirModel.create([(0, 1)] * 3, (4, 5, 6), channels=2, num_grids=3, hidden=7,
                             synth_layers=2, feature_dim=5, seed=1)
    names = [p.name for p in m.parameters()]
    assert names[:3] == ["grid.0.values", "grid.1.values", "grid.2.values"]
    assert m.parameters()[0].shape == (4, 5, 6, 2)
    assert "synth.2.w" in names and "head.1.b" in names
    t = ad.Tape()
    h = m.synthesize(t, np.full((10, 3), 0.5))
    assert h.shape == (10, 15)
    assert m(t, np.full((10, 3), 0.5)).shape == (10, 1)


def test_pilir_output_depends_on_offset():
    m = nw.PilirModel.create([(0, 1)], (2,), channels=1, num_grids=1, seed=0)
    for p in m.grid.parameters():
        p.value[...] = 0.3
    y = nw.predict(m, np.linspace(0, 1, 11)[:, None])
    # constant latents: interpolation would give a constant, the offset input does not
    assert np.ptp(y) > 1e-3


def test_predict_batches_agree():
    m = nw.PilirModel.create([(0, 1), (0, 1)], (5, 5), seed=2)
    x = np.random.default_rng(1).uniform(size=(300, 2))
    # BLAS blocking may differ with the batch size, so compare to roundoff
    assert_allclose(nw.predict(m, x), nw.predict(m, x, batch=37), rtol=0, atol=1e-15)


def test_cosine_model_is_smooth_across_faces():
    m = nw.PilirModel.create([(0, 1), (0, 1)], (5, 5), num_grids=2, seed=3, weighting="cosine")
    eps = 1e-9
    face = 0.5
    y = np.random.default_rng(0).uniform(size=40)
    lo = np.stack([np.full(40, face - eps), y], axis=1)
    hi = np.stack([np.full(40, face + eps), y], axis=1)
    assert np.max(np.abs(nw.predict(m, lo) - nw.predict(m, hi))) <= 1e-8
    t = ad.Tape()
    d_lo = ad.jets(lambda z: m(t, z), lo, {0: 1}, t).d1(0).value
    d_hi = ad.jets(lambda z: m(t, z), hi, {0: 1}, t).d1(0).value
    assert np.max(np.abs(d_lo - d_hi) / np.maximum(np.abs(d_hi), 1e-3)) <= 1e-3


def test_multilinear_model_has_slope_jump():
    m = nw.PilirModel.create([(0, 1)], (3,), seed=0, weighting="multilinear")
    t = ad.Tape()
    d = ad.jets(lambda z: m(t, z), np.array([[0.5 - 1e-9], [0.5 + 1e-9]]), {0: 1}, t).d1(0).value
    assert abs(d[0, 0] - d[1, 0]) > 1e-6


def test_mlp_pinn_rescales_inputs():
    m = nw.MlpPinn.create([(0, 10)], (4,), seed=0)
    ref = nw.Mlp([1, 4, 1], "tanh", "net", np.random.default_rng(0))
    out = nw.predict(m, np.array([[0.0], [5.0], [10.0]]))
    assert_allclose(out, ref(ad.Tape(), np.array([[-1.0], [0.0], [1.0]])).value, rtol=1e-15)
    assert nw.MlpPinn.create([(0, 1)], (3,), activation="gaussian_wavelet").kind == "wavelet_pinn"


@pytest.mark.parametrize("make", [
    lambda: nw.PilirModel.create([(0, 1), (0, 2)], (4, 4), num_grids=2, seed=9),
    lambda: nw.InterpGridModel.create([(0, 1), (0, 2)], (4, 4), num_grids=2, seed=9),
    lambda: nw.MlpPinn.create([(0, 1), (0, 2)], (5, 5), seed=9),
])
def test_from_config_rebuilds_same_architecture(make):
    m = make()
    r = nw.from_config(m.config(), seed=123)
    assert [(p.name, p.shape) for p in r.parameters()] == [(p.name, p.shape) for p in m.parameters()]
    assert r.config() == m.config()


def test_model_validation():
    grid = gridlib.FeatureGrid((3, 3), 2)
    with pytest.raises(ValueError):
        nw.PilirModel([(0, 1), (0, 1)], grid, nw.Mlp([3, 4]), nw.Mlp([4, 1]))
    with pytest.raises(ValueError):
        nw.Mlp([3], "tanh")
    with pytest.raises(ValueError):
        nw.Mlp([3, 1], "relu6")
