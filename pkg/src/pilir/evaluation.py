"""Accuracy metrics, spectra, pseudo-spectral reference solutions and field rendering."""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problems import PdeProblem

# ---------------------------------------------------------------------------
# error metric


def rel_l2(u, u_hat) -> float:
    """``||u - u_hat||_2 / ||u||_2`` over all entries."""
    u = np.asarray(u, dtype=np.float64).ravel()
    u_hat = np.asarray(u_hat, dtype=np.float64).ravel()
    if u.shape != u_hat.shape:
        raise ValueError(f"length mismatch: {u.size} vs {u_hat.size}")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("relative error undefined for an all-zero truth")
    return float(np.linalg.norm(u - u_hat) / norm)


# ---------------------------------------------------------------------------
# spectra


def _resample_pow2(field_):
    n = len(field_)
    if n & (n - 1) == 0:
        return field_
    m = 1 << int(np.ceil(np.log2(n)))
    # Fourier interpolation keeps every resolved mode's amplitude
    spec = np.fft.rfft(field_)
    out = np.zeros(m // 2 + 1, dtype=complex)
    keep = min(len(spec), len(out))
    out[:keep] = spec[:keep]
    if n % 2 == 0 and keep == n // 2 + 1:
        out[n // 2] *= 0.5
    return np.fft.irfft(out, m) * (m / n)


def amplitude_spectrum(field_) -> np.ndarray:
    """One-sided amplitudes for wavenumbers ``0..n/2`` of ``n`` uniform periodic samples.

    ``|X_k| * 2 / n`` for ``0 < k < n/2``; the mean and the Nyquist bin use
    ``|X_k| / n`` since they have no mirrored partner.
    """
    f = np.asarray(field_, dtype=np.float64)
    if f.ndim != 1 or len(f) < 2:
        raise ValueError("spectrum needs a 1-D array of at least two samples")
    f = _resample_pow2(f)
    n = len(f)
    amp = np.abs(np.fft.rfft(f)) / n
    amp[1:n // 2] *= 2.0
    return amp


def parseval_energy(amp, n):
    """Mean square of the samples, rebuilt from one-sided amplitudes."""
    amp = np.asarray(amp)
    inner = amp[1:n // 2]
    return amp[0] ** 2 + 0.5 * np.sum(inner ** 2) + amp[n // 2] ** 2


def top_k(amp, k: int = 10):
    """``(wavenumber, amplitude)`` pairs, largest first; ties resolved by lower wavenumber."""
    order = np.lexsort((np.arange(len(amp)), -np.asarray(amp)))
    return [(int(i), float(amp[i])) for i in order[:k]]


@dataclass
class SpectrumReport:
    times: list
    wavenumbers: np.ndarray
    amp_truth: np.ndarray
    amp_pred: np.ndarray
    top_truth: list = field(default_factory=list)
    top_pred: list = field(default_factory=list)

    def rows(self):
        for i, t in enumerate(self.times):
            for k in self.wavenumbers:
                yield t, int(k), float(self.amp_truth[i, k]), float(self.amp_pred[i, k])


def spectrum(truth_slices, pred_slices, times, k: int = 10) -> SpectrumReport:
    """Spectra of matching truth/prediction slices, one per time."""
    at = np.array([amplitude_spectrum(s) for s in truth_slices])
    ap = np.array([amplitude_spectrum(s) for s in pred_slices])
    return SpectrumReport(list(times), np.arange(at.shape[1]), at, ap,
                          [top_k(a, k) for a in at], [top_k(a, k) for a in ap])


SPECTRUM_TIMES = (0.0, 0.5, 0.9, 1.0)


def spectrum_report(problem: PdeProblem, predict, n: int = 512, times=SPECTRUM_TIMES, k: int = 10):
    """Spectra of truth and ``predict(coords)`` on ``n`` periodic points per time slice.

    Each entry of ``times`` is a fraction of the remaining axes' extent, which
    on the unit time interval is the time itself. Steady problems are thus
    sliced along the first axis at that fraction of the other axes.
    """
    lo, hi = problem.bounds[0]
    xs = lo + (hi - lo) * np.arange(n) / n
    rest = problem.bounds[1:]
    truth_slices, pred_slices = [], []
    for t in times:
        coords = np.zeros((n, problem.dim))
        coords[:, 0] = xs
        coords[:, 1:] = rest[:, 0] + t * (rest[:, 1] - rest[:, 0])
        truth_slices.append(truth_at(problem, coords).ravel())
        pred_slices.append(np.asarray(predict(coords)).ravel())
    return spectrum(truth_slices, pred_slices, times, k)


def write_spectrum_csv(report: SpectrumReport, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "k", "amp_truth", "amp_pred"])
        for t, kk, a, b in report.rows():
            w.writerow([repr(float(t)), kk, repr(a), repr(b)])


# ---------------------------------------------------------------------------
# reference solver


@dataclass
class ReferenceSolution:
    """Fourier states at saved times on a periodic interval ``[x0, x0 + period)``."""

    x0: float
    period: float
    times: np.ndarray
    coeffs: np.ndarray  # (nt, modes // 2 + 1) rfft coefficients
    modes: int

    @property
    def x(self):
        return self.x0 + self.period * np.arange(self.modes) / self.modes

    @property
    def values(self):
        return np.fft.irfft(self.coeffs, self.modes, axis=-1)

    def at(self, x, t) -> np.ndarray:
        """Spectral interpolation in ``x`` at saved times ``t`` (each must match a saved time)."""
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t - 1e-9)
        idx = np.clip(idx, 0, len(self.times) - 1)
        if np.any(np.abs(self.times[idx] - t) > 1e-9):
            raise ValueError("reference was not saved at the requested times")
        n = self.modes
        c = self.coeffs / n
        kk = np.arange(c.shape[1])
        w = np.full(c.shape[1], 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        phase = 2.0 * np.pi * (x - self.x0) / self.period
        out = np.empty(len(x))
        for j in np.unique(idx):
            sel = idx == j
            e = np.exp(1j * np.outer(phase[sel], kk))
            out[sel] = (e * (w * c[j])).real.sum(axis=1)
        return out


def _etdrk4_coefficients(L, h, contour=32):
    """ETDRK4 weights by contour-integral evaluation of the phi functions."""
    r = np.exp(1j * np.pi * (np.arange(1, contour + 1) - 0.5) / contour)
    LR = h * L[:, None] + r[None, :]
    Q = h * np.mean((np.exp(LR / 2) - 1) / LR, axis=1)
    f1 = h * np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR ** 2)) / LR ** 3, axis=1)
    f2 = h * np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR ** 3, axis=1)
    f3 = h * np.mean((-4 - 3 * LR - LR ** 2 + np.exp(LR) * (4 - LR)) / LR ** 3, axis=1)
    if np.isrealobj(L):
        Q, f1, f2, f3 = Q.real, f1.real, f2.real, f3.real
    return Q, f1, f2, f3


def reference_solve(problem: PdeProblem, modes: int = 512, dt: float = 1e-4,
                    times=None, t_end: float | None = None) -> ReferenceSolution:
    """Integrate ``u_t = L u + N(u)`` pseudo-spectrally with exponential time differencing (ETDRK4).

    The linear part is propagated exactly in Fourier space and the pointwise
    nonlinearity explicitly, so purely linear problems are solved to
    round-off. ``times`` default to the 101 evaluation slices of ``[0, t_end]``.
    """
    form = problem.spectral
    if form is None:
        raise ValueError(f"{problem.name} has no periodic spectral form")
    x0, x1 = problem.bounds[0]
    t0, t1 = problem.bounds[-1]
    t_end = t1 if t_end is None else t_end
    period = x1 - x0
    times = np.linspace(t0, t_end, 101) if times is None else np.asarray(times, dtype=np.float64)
    steps = np.rint((times - t0) / dt).astype(np.int64)
    if np.any(np.abs(steps * dt + t0 - times) > 1e-9):
        raise ValueError("save times must be multiples of dt")
    x = x0 + period * np.arange(modes) / modes
    kk = 2.0 * np.pi / period * np.arange(modes // 2 + 1)
    L = form.linear(kk)
    v = np.fft.rfft(form.initial(x))
    E = np.exp(dt * L)
    E2 = np.exp(dt * L / 2)
    nonlin = form.nonlinear
    if nonlin is not None:
        Q, f1, f2, f3 = _etdrk4_coefficients(L, dt)

        def N(vh):
            return np.fft.rfft(nonlin(np.fft.irfft(vh, modes)))

    out = np.empty((len(times), len(v)), dtype=complex)
    step = 0
    for i, target in enumerate(steps):
        while step < target:
            if nonlin is None:
                v = E * v
            else:
                Nv = N(v)
                a = E2 * v + Q * Nv
                Na = N(a)
                b = E2 * v + Q * Na
                Nb = N(b)
                c = E2 * a + Q * (2 * Nb - Nv)
                Nc = N(c)
                v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
            step += 1
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("reference solver diverged; try a smaller dt")
        out[i] = v
    return ReferenceSolution(float(x0), float(period), times, out, modes)


@functools.lru_cache(maxsize=8)
def _cached_reference(name, params, modes, dt):
    from .problems import get_problem
    kw = {k: v for k, v in params}
    return reference_solve(get_problem(name, **kw), modes, dt)


def _problem_key(problem):
    from .problems import PROBLEMS
    if problem.name not in PROBLEMS:
        return None
    params = dict(problem.params)
    if problem.name in ("allen_cahn",):
        params = {"nu": params["nu"], "lam": params["lambda"]}
    return problem.name, tuple(sorted(params.items()))


def reference_for(problem: PdeProblem, modes: int = 512, dt: float = 1e-4) -> ReferenceSolution:
    key = _problem_key(problem)
    if key is None:
        return reference_solve(problem, modes, dt)
    return _cached_reference(key[0], key[1], modes, dt)


# ---------------------------------------------------------------------------
# evaluation grids


DEFAULT_SIZES = {2: (256, 256), 3: (64, 64, 64)}
TIME_SIZES = (512, 101)


def default_sizes(problem: PdeProblem):
    if problem.time_dependent:
        return TIME_SIZES
    return DEFAULT_SIZES[problem.dim]


def truth_at(problem: PdeProblem, coords) -> np.ndarray:
    """Closed-form solution where known, otherwise the spectral reference."""
    coords = np.asarray(coords, dtype=np.float64)
    if problem.exact is not None:
        return problem.exact(coords).reshape(len(coords), -1)
    if problem.spectral is None:
        raise ValueError(f"{problem.name} has no ground truth")
    ref = reference_for(problem)
    return ref.at(coords[:, 0], coords[:, -1])[:, None]


@dataclass
class EvalGrid:
    sizes: tuple
    axes: list
    coords: np.ndarray
    truth: np.ndarray

    @property
    def shape(self):
        return tuple(self.sizes)


def eval_grid(problem: PdeProblem, sizes=None) -> EvalGrid:
    """Tensor grid (endpoints included, ``ij`` order) with ground truth attached."""
    sizes = tuple(int(s) for s in (sizes or default_sizes(problem)))
    if len(sizes) != problem.dim or min(sizes) < 2:
        raise ValueError("need one size >= 2 per dimension")
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(problem.bounds, sizes)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    return EvalGrid(sizes, axes, coords, truth_at(problem, coords))


def evaluate(predict, grid: EvalGrid) -> tuple[float, np.ndarray]:
    pred = np.asarray(predict(grid.coords)).reshape(grid.truth.shape)
    return rel_l2(grid.truth, pred), pred


COORD_NAMES = {2: ("x", "y"), 3: ("x", "y", "z")}


def coord_names(problem: PdeProblem):
    if problem.time_dependent:
        return ("x", "t")
    return COORD_NAMES[problem.dim]


def write_field_csv(path, names, coords, truth, pred):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["truth", "pred"])
        for c, a, b in zip(coords, np.ravel(truth), np.ravel(pred)):
            w.writerow([repr(float(v)) for v in c] + [repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------------------
# rendering

PGM_MAX = 65535


def pgm_bytes(values) -> bytes:
    """Binary 16-bit graymap; min maps to 0 and max to 65535, constant fields to mid-gray."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("rendering needs a 2-D field")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot render non-finite values")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        levels = np.full(v.shape, (PGM_MAX + 1) // 2, dtype=np.int64)
    else:
        levels = np.rint((v - lo) / (hi - lo) * PGM_MAX).astype(np.int64)
    rows, cols = v.shape
    header = f"P5\n{cols} {rows}\n{PGM_MAX}\n".encode("ascii")
    return header + levels.astype(">u2").tobytes()


def render_field(values, path, csv_path=None, names=("row", "col")):
    """Write ``values`` (row ``i`` = ``values[i]``) as a PGM and optionally the raw grid as CSV."""
    data = pgm_bytes(values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    if csv_path is not None:
        v = np.asarray(values, dtype=np.float64)
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([names[0], names[1], "value"])
            for i in range(v.shape[0]):
                for j in range(v.shape[1]):
                    w.writerow([i, j, repr(float(v[i, j]))])
    return path


def read_pgm(path) -> np.ndarray:
    """Parse a 16-bit binary PGM written by :func:`render_field`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary graymap")
    cols, rows = (int(s) for s in parts[1].split())
    if int(parts[2]) != PGM_MAX:
        raise ValueError("expected a 16-bit graymap")
    return np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols).astype(np.int64)
