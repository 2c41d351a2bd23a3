"""Models: the grid-plus-local-decoder solver and the three baselines.

Every model is called as ``model(tape, x)`` with ``x`` a ``(B, d)`` array,
node or jet of physical coordinates and returns a ``(B, D_out)`` node (or
jet). Parameters are plain :class:`~pilir.autodiff.Parameter` objects so the
optimizer and checkpoint code can treat all models alike.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import grid as gridlib

MODEL_KINDS = ("pilir", "mlp_pinn", "wavelet_pinn", "interp_grid")


def gaussian_wavelet(x):
    """-x * exp(-x**2 / 2)"""
    return ad.wavelet(x)


def _identity(x):
    return x


ACTIVATIONS = {"tanh": ad.tanh, "gaussian_wavelet": gaussian_wavelet, "identity": _identity}


def xavier_normal(rng, fan_out, fan_in, gain=1.0):
    std = gain * np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_out, fan_in))


class Mlp:
    """Fully connected network; activation on hidden layers only.

    Layer ``k`` owns parameters ``{prefix}.{k}.w`` of shape ``(out, in)`` and
    ``{prefix}.{k}.b``.
    """

    def __init__(self, sizes: Sequence[int], activation: str = "tanh", prefix: str = "mlp", rng=None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.prefix = prefix
        rng = np.random.default_rng() if rng is None else rng
        self.layers = []
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            w = ad.Parameter(f"{prefix}.{k}.w", xavier_normal(rng, n_out, n_in))
            b = ad.Parameter(f"{prefix}.{k}.b", np.zeros(n_out))
            self.layers.append((w, b))

    def parameters(self):
        return [p for layer in self.layers for p in layer]

    def __call__(self, tape: ad.Tape, x):
        """Apply the network. ``x`` may be a list of blocks that together form the input
        (concatenated along the last axis); the first layer then splits its weight
        instead of materializing the concatenation.
        """
        act = ACTIVATIONS[self.activation]
        h = self._first(tape, x)
        for k in range(1, len(self.layers)):
            h = act(h)
            W, b = self.layers[k]
            h = ad.affine(tape.param(W), h, tape.param(b))
        return h

    def _first(self, tape, x):
        W, b = self.layers[0]
        Wn, bn = tape.param(W), tape.param(b)
        if not isinstance(x, (list, tuple)):
            return ad.affine(Wn, x, bn)
        widths = [gridlib._value(p).shape[-1] for p in x]
        if sum(widths) != self.sizes[0]:
            raise ValueError(f"input width {sum(widths)} does not match layer width {self.sizes[0]}")
        out = None
        start = 0
        for part, w in zip(x, widths):
            block = ad.index(Wn, (slice(None), slice(start, start + w)))
            term = ad.linear(part, block) if isinstance(part, (ad.Node, ad.Jet)) else _linear_const(part, block)
            out = term if out is None else out + term
            start += w
        return out + bn


def _linear_const(x, W):
    return ad.linear(np.asarray(x, dtype=np.float64), W)


def _coords(tape, x):
    if isinstance(x, (ad.Node, ad.Jet)):
        return x
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


class PilirModel:
    """Feature grid + shared local synthesis network + decoding head.

    For each parallel grid the ``2**d`` corner latents are concatenated with
    the query's cell-unit offset, pushed through ``synth``, blended with the
    spatial weights and the per-grid features are concatenated for ``head``.
    """

    kind = "pilir"

    def __init__(self, bounds, grid: gridlib.FeatureGrid, synth: Mlp, head: Mlp, weighting: str = "cosine"):
        self.bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
        self.grid = grid
        self.synth = synth
        self.head = head
        if weighting not in gridlib.WEIGHTINGS:
            raise ValueError(f"unknown weighting {weighting!r}")
        self.weighting = weighting
        d = len(self.bounds)
        if grid.dim != d:
            raise ValueError("grid dimension does not match the domain")
        if synth.sizes[0] != grid.channels + d:
            raise ValueError(f"synthesis input must be C + d = {grid.channels + d}")
        if head.sizes[0] != grid.num_grids * synth.sizes[-1]:
            raise ValueError(f"head input must be M * H = {grid.num_grids * synth.sizes[-1]}")

    @classmethod
    def create(cls, bounds, resolution, channels=4, num_grids=1, hidden=16, synth_layers=2,
               feature_dim=16, head_hidden=(16,), out_dim=1, weighting="cosine",
               activation="tanh", seed=0, init_range=0.1):
        rng = np.random.default_rng(seed)
        d = len(resolution)
        grid = gridlib.FeatureGrid(resolution, channels, num_grids, rng=rng, init_range=init_range)
        synth = Mlp([channels + d] + [hidden] * synth_layers + [feature_dim], activation, "synth", rng)
        head = Mlp([num_grids * feature_dim, *head_hidden, out_dim], "tanh", "head", rng)
        return cls(bounds, grid, synth, head, weighting)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def out_dim(self):
        return self.head.sizes[-1]

    def parameters(self):
        return self.grid.parameters() + self.synth.parameters() + self.head.parameters()

    def config(self):
        return {
            "kind": self.kind,
            "bounds": self.bounds.tolist(),
            "resolution": list(self.grid.resolution),
            "channels": self.grid.channels,
            "num_grids": self.grid.num_grids,
            "synth_sizes": self.synth.sizes,
            "synth_activation": self.synth.activation,
            "head_sizes": self.head.sizes,
            "weighting": self.weighting,
        }

    def lookup(self, x) -> gridlib.CellQuery:
        u = gridlib.normalize(x, self.bounds)
        return gridlib.query(u, self.grid.resolution, self.weighting)

    def contributions(self, tape, q: gridlib.CellQuery):
        """Per-corner synthesized features, ``(B, M, 2**d, H)``."""
        b = q.anchor.shape[0]
        k = 2 ** self.dim
        m = self.grid.num_grids
        zs = [ad.reshape(gridlib.gather(self.grid, q, i, tape), (b, 1, k, self.grid.channels))
              for i in range(m)]
        z = zs[0] if m == 1 else ad.concat(zs, axis=1)
        off = q.offsets
        off = ad.reshape(off, (b, 1, k, self.dim)) if isinstance(off, (ad.Node, ad.Jet)) \
            else off.reshape(b, 1, k, self.dim)
        return self.synth(tape, [z, off])

    def synthesize(self, tape, x):
        """Blended feature ``h(x)`` of width ``M * H``."""
        x = _coords(tape, x)
        q = self.lookup(x)
        h = self.contributions(tape, q)
        b = q.anchor.shape[0]
        k = 2 ** self.dim
        w = q.weights
        w = ad.reshape(w, (b, 1, k, 1)) if isinstance(w, (ad.Node, ad.Jet)) else w.reshape(b, 1, k, 1)
        fused = ad.sum(h * w, axis=2)
        return ad.reshape(fused, (b, self.grid.num_grids * self.synth.sizes[-1]))

    def decode(self, tape, h):
        return self.head(tape, h)

    def __call__(self, tape, x):
        return self.decode(tape, self.synthesize(tape, x))


def _shape(x):
    return gridlib._value(x).shape


class InterpGridModel:
    """Deterministic interpolation baseline: ``sum_i w_i z_i`` per grid, then the head."""

    kind = "interp_grid"

    def __init__(self, bounds, grid: gridlib.FeatureGrid, head: Mlp, weighting: str = "cosine"):
        self.bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
        self.grid = grid
        self.head = head
        if weighting not in gridlib.WEIGHTINGS:
            raise ValueError(f"unknown weighting {weighting!r}")
        self.weighting = weighting
        if head.sizes[0] != grid.num_grids * grid.channels:
            raise ValueError(f"head input must be M * C = {grid.num_grids * grid.channels}")

    @classmethod
    def create(cls, bounds, resolution, channels=4, num_grids=1, head_hidden=(16,), out_dim=1,
               weighting="cosine", seed=0, init_range=0.1):
        rng = np.random.default_rng(seed)
        grid = gridlib.FeatureGrid(resolution, channels, num_grids, rng=rng, init_range=init_range)
        head = Mlp([num_grids * channels, *head_hidden, out_dim], "tanh", "head", rng)
        return cls(bounds, grid, head, weighting)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def out_dim(self):
        return self.head.sizes[-1]

    def parameters(self):
        return self.grid.parameters() + self.head.parameters()

    def config(self):
        return {
            "kind": self.kind,
            "bounds": self.bounds.tolist(),
            "resolution": list(self.grid.resolution),
            "channels": self.grid.channels,
            "num_grids": self.grid.num_grids,
            "head_sizes": self.head.sizes,
            "weighting": self.weighting,
        }

    def synthesize(self, tape, x):
        x = _coords(tape, x)
        u = gridlib.normalize(x, self.bounds)
        q = gridlib.query(u, self.grid.resolution, self.weighting)
        b = q.anchor.shape[0]
        k = 2 ** self.dim
        w = q.weights
        w = ad.reshape(w, (b, 1, k, 1)) if isinstance(w, (ad.Node, ad.Jet)) else w.reshape(b, 1, k, 1)
        m = self.grid.num_grids
        zs = [ad.reshape(gridlib.gather(self.grid, q, i, tape), (b, 1, k, self.grid.channels))
              for i in range(m)]
        z = zs[0] if m == 1 else ad.concat(zs, axis=1)
        fused = ad.sum(z * w, axis=2)
        return ad.reshape(fused, (b, m * self.grid.channels))

    def decode(self, tape, h):
        return self.head(tape, h)

    def __call__(self, tape, x):
        return self.decode(tape, self.synthesize(tape, x))


class MlpPinn:
    """Coordinate MLP on inputs rescaled to ``[-1, 1]``; tanh or Gaussian-wavelet hidden units."""

    def __init__(self, bounds, net: Mlp):
        self.bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
        self.net = net
        if net.sizes[0] != len(self.bounds):
            raise ValueError("network input width must equal the domain dimension")

    @property
    def kind(self):
        return "wavelet_pinn" if self.net.activation == "gaussian_wavelet" else "mlp_pinn"

    @classmethod
    def create(cls, bounds, hidden_layers=(50, 50, 50), out_dim=1, activation="tanh", seed=0):
        rng = np.random.default_rng(seed)
        d = len(np.asarray(bounds).reshape(-1, 2))
        net = Mlp([d, *hidden_layers, out_dim], activation, "net", rng)
        return cls(bounds, net)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def out_dim(self):
        return self.net.sizes[-1]

    def parameters(self):
        return self.net.parameters()

    def config(self):
        return {
            "kind": self.kind,
            "bounds": self.bounds.tolist(),
            "net_sizes": self.net.sizes,
            "activation": self.net.activation,
        }

    def __call__(self, tape, x):
        x = _coords(tape, x)
        u = gridlib.normalize(x, self.bounds)
        return self.net(tape, 2.0 * u - 1.0)


def from_config(cfg: dict, seed: int = 0):
    """Rebuild a model skeleton (random init) from :meth:`config` output."""
    kind = cfg["kind"]
    bounds = cfg["bounds"]
    rng = np.random.default_rng(seed)
    if kind == "pilir":
        grid = gridlib.FeatureGrid(cfg["resolution"], cfg["channels"], cfg["num_grids"], rng=rng)
        synth = Mlp(cfg["synth_sizes"], cfg.get("synth_activation", "tanh"), "synth", rng)
        head = Mlp(cfg["head_sizes"], "tanh", "head", rng)
        return PilirModel(bounds, grid, synth, head, cfg["weighting"])
    if kind == "interp_grid":
        grid = gridlib.FeatureGrid(cfg["resolution"], cfg["channels"], cfg["num_grids"], rng=rng)
        head = Mlp(cfg["head_sizes"], "tanh", "head", rng)
        return InterpGridModel(bounds, grid, head, cfg["weighting"])
    if kind in ("mlp_pinn", "wavelet_pinn"):
        return MlpPinn(bounds, Mlp(cfg["net_sizes"], cfg["activation"], "net", rng))
    raise ValueError(f"unknown model kind {kind!r}")


def predict(model, x, batch: int = 8192) -> np.ndarray:
    """Plain numpy evaluation in chunks; each chunk gets its own throwaway tape."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = []
    for i in range(0, len(x), batch):
        tape = ad.Tape()
        out.append(model(tape, x[i:i + batch]).value)
        tape.clear()
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.out_dim))
