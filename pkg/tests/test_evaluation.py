import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from pilir import evaluation as ev
from pilir import problems as pb

from oracles import allen_cahn_mol, heat_exact_mode, naive_dft_amplitude


def test_rel_l2_basic():
    assert ev.rel_l2([3.0, 4.0], [3.0, 4.0]) == 0.0
    assert_allclose(ev.rel_l2([3.0, 4.0], [0.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        ev.rel_l2([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        ev.rel_l2([1.0], [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([8, 16, 64, 128]), st.integers(0, 2 ** 31 - 1))
def test_spectrum_matches_naive_dft_and_parseval(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    amp = ev.amplitude_spectrum(x)
    assert_allclose(amp, naive_dft_amplitude(x), atol=1e-12)
    assert_allclose(ev.parseval_energy(amp, n), np.mean(x ** 2), rtol=1e-13)


def test_pure_sine_peak():
    n = 256
    x = 2 * np.pi * np.arange(n) / n
    amp = ev.amplitude_spectrum(np.sin(4 * x) + 0.25)
    assert abs(amp[4] - 1.0) <= 1e-10
    assert abs(amp[0] - 0.25) <= 1e-12
    assert ev.top_k(amp, 2) == [(4, pytest.approx(1.0)), (0, pytest.approx(0.25))]


def test_non_power_of_two_is_resampled():
    n = 100
    x = 2 * np.pi * np.arange(n) / n
    amp = ev.amplitude_spectrum(3 * np.cos(5 * x))
    assert len(amp) == 65
    assert_allclose(amp[5], 3.0, rtol=1e-12)


def test_multiscale_top_four():
    p = pb.get_problem("convection_ms")
    rep = ev.spectrum_report(p, lambda c: p.exact(c), n=512, k=4)
    assert {k for k, _ in rep.top_truth[0]} == {1, 4, 8, 16}
    assert_allclose(rep.amp_truth, rep.amp_pred)


def test_spectrum_csv(tmp_path):
    p = pb.get_problem("convection")
    rep = ev.spectrum_report(p, lambda c: p.exact(c), n=64, times=(0.0, 0.5))
    ev.write_spectrum_csv(rep, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,k,amp_truth,amp_pred"
    assert len(lines) == 1 + 2 * 33


def test_convection_reference_matches_characteristics():
    p = pb.get_problem("convection_ms")
    ref = ev.reference_solve(p, modes=256, dt=1e-3)
    xs, ts = np.meshgrid(ref.x, ref.times, indexing="xy")
    truth = p.exact(np.stack([xs.ravel(), ts.ravel()], axis=1)).reshape(xs.shape)
    assert ev.rel_l2(truth, ref.values) <= 1e-10


def test_heat_reference_matches_closed_form_and_conserves_mean():
    p = pb.get_problem("reaction_diffusion", nu=0.3, rho=0.0)
    ref = ev.reference_solve(p, modes=128, dt=1e-3)
    v = ref.values
    assert np.max(np.abs(v.mean(axis=1) - v[0].mean())) <= 1e-10
    # the Gaussian's third Fourier mode decays like exp(-nu k^2 t)
    c0 = np.fft.rfft(v[0])[3]
    assert_allclose(np.fft.rfft(v[-1])[3], c0 * np.exp(-0.3 * 9 * 1.0), rtol=1e-10)
    x = ref.x
    assert_allclose(heat_exact_mode(3, 0.3, x, 0.0), np.sin(3 * x))


def test_allen_cahn_reference_agrees_with_method_of_lines():
    p = pb.get_problem("allen_cahn", nu=1e-2, lam=5.0)
    ref = ev.reference_solve(p, modes=256, dt=1e-3, times=[0.25, 0.5, 1.0])
    x, t, u = allen_cahn_mol(1e-2, 5.0, n=256)
    # second-order differences against a spectral solve
    assert ev.rel_l2(u, ref.values) <= 5e-3


def test_reference_interpolation_at_off_grid_points():
    p = pb.get_problem("convection")
    ref = ev.reference_solve(p, modes=64, dt=1e-2, times=[0.0, 0.5])
    xq = np.random.default_rng(0).uniform(0, 2 * np.pi, 20)
    got = ref.at(xq, np.full(20, 0.5))
    assert_allclose(got, np.sin(xq - 15.0), atol=1e-12)
    with pytest.raises(ValueError):
        ref.at(xq, np.full(20, 0.3))


def test_reference_errors():
    with pytest.raises(ValueError):
        ev.reference_solve(pb.get_problem("helmholtz2d"))
    with pytest.raises(ValueError):
        ev.reference_solve(pb.get_problem("convection"), dt=0.3, times=[0.5])


def test_eval_grid_sizes_and_truth():
    p = pb.get_problem("helmholtz2d")
    g = ev.eval_grid(p, (5, 7))
    assert g.coords.shape == (35, 2) and g.truth.shape == (35, 1)
    assert_allclose(g.coords[[0, -1]], [[-1, -1], [1, 1]])
    assert ev.default_sizes(p) == (256, 256)
    assert ev.default_sizes(pb.get_problem("helmholtz3d")) == (64, 64, 64)
    assert ev.default_sizes(pb.get_problem("allen_cahn")) == (512, 101)
    err, pred = ev.evaluate(lambda c: p.exact(c), g)
    assert err == 0.0 and pred.shape == g.truth.shape


def test_field_csv(tmp_path):
    ev.write_field_csv(tmp_path / "f.csv", ("x", "t"), np.array([[0.0, 0.5]]), [1.0], [0.5])
    assert (tmp_path / "f.csv").read_text() == "x,t,truth,pred\n0.0,0.5,1.0,0.5\n"


def test_pgm_round_trip(tmp_path):
    v = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 6.0]])
    ev.render_field(v, tmp_path / "a.pgm", tmp_path / "a.csv")
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n3 2\n65535\n")
    px = ev.read_pgm(tmp_path / "a.pgm")
    assert px[0, 0] == 0 and px[1, 2] == 65535
    assert px[0, 2] == round(2 / 6 * 65535)
    assert (tmp_path / "a.csv").read_text().splitlines()[1] == "0,0,0.0"
    ev.render_field(np.full((2, 2), 7.0), tmp_path / "c.pgm")
    assert np.all(ev.read_pgm(tmp_path / "c.pgm") == 32768)
    with pytest.raises(ValueError):
        ev.pgm_bytes(np.array([[np.nan, 1.0]]))
