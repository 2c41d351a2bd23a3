"""Learnable feature grid and the cell lookup that feeds the grid models.

A grid with ``N`` vertices along a dimension has ``N - 1`` cells. A point in
the closed unit cube always gets ``2**d`` true corners: the anchor index is
``floor(u * (N - 1))`` clamped to ``N - 2``.

Corner ``i`` of a cell carries the binary pattern of ``i`` with the first
dimension as the most significant bit, so in 2-D the order is 00, 01, 10, 11.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad

BOUNDS_TOL = 1e-12


def corner_patterns(d: int) -> np.ndarray:
    """``(2**d, d)`` array of 0/1 corner patterns in binary order."""
    i = np.arange(2 ** d)[:, None]
    shifts = np.arange(d - 1, -1, -1)[None, :]
    return ((i >> shifts) & 1).astype(np.int64)


def _value(x):
    if isinstance(x, ad.Jet):
        return x.value
    if isinstance(x, ad.Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def normalize(x, bounds):
    """Affine map of physical coordinates onto ``[0, 1]**d``.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs, one per trailing-axis
    component of ``x``. Points up to ``1e-12`` outside are tolerated (raw
    arrays are clamped); anything further out raises ``ValueError``.
    """
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    lo, hi = b[:, 0], b[:, 1]
    if np.any(hi <= lo):
        raise ValueError(f"degenerate bounds {bounds}")
    xv = _value(x)
    if xv.shape[-1] != len(lo):
        raise ValueError(f"coordinate dimension {xv.shape[-1]} does not match bounds {len(lo)}")
    slack = BOUNDS_TOL * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    if np.any(xv < lo - slack) or np.any(xv > hi + slack):
        raise ValueError("coordinate outside the domain")
    scale = 1.0 / (hi - lo)
    if isinstance(x, (ad.Node, ad.Jet)):
        return (x - lo) * scale
    return np.clip((xv - lo) * scale, 0.0, 1.0)


@dataclass
class CellQuery:
    """Enclosing cell of a batch of points.

    ``anchor`` is ``(B, d)`` integer, ``local`` is the ``(B, d)`` position
    inside the cell (array, node or jet). ``corners``, ``offsets`` and
    ``weights`` are filled by :func:`query`.
    """

    anchor: np.ndarray
    local: object
    resolution: tuple
    corners: np.ndarray | None = None
    offsets: object = None
    weights: object = None

    @property
    def dim(self):
        return len(self.resolution)


def locate(u, resolution: Sequence[int]) -> CellQuery:
    """Anchor vertex and in-cell position for unit coordinates ``u``.

    The anchor is detached (floor carries no derivative); ``local`` keeps the
    derivative of ``u`` scaled by ``N - 1``.
    """
    n = np.asarray(resolution, dtype=np.int64)
    if np.any(n < 2):
        raise ValueError("each grid dimension needs at least 2 vertices")
    uv = _value(u)
    if uv.shape[-1] != len(n):
        raise ValueError("resolution length must equal the coordinate dimension")
    cells = (n - 1).astype(np.float64)
    scaled_v = uv * cells
    anchor = np.clip(np.floor(scaled_v).astype(np.int64), 0, n - 2)
    if isinstance(u, (ad.Node, ad.Jet)):
        local = u * cells - anchor.astype(np.float64)
    else:
        local = scaled_v - anchor
    return CellQuery(anchor=anchor, local=local, resolution=tuple(int(k) for k in n))


def corner_offsets(q: CellQuery):
    """Offset of the query point from each corner, in cell units: ``local - pattern``.

    Shape ``(B, 2**d, d)``; differentiable through ``local``.
    """
    pat = corner_patterns(q.dim).astype(np.float64)
    local = q.local
    if isinstance(local, (ad.Node, ad.Jet)):
        b = local.shape[0]
        return ad.reshape(local, (b, 1, q.dim)) - pat[None]
    return local[:, None, :] - pat[None]


def corner_indices(q: CellQuery) -> np.ndarray:
    """Flat vertex index of every corner, ``(B, 2**d)``."""
    pat = corner_patterns(q.dim)
    idx = q.anchor[:, None, :] + pat[None]
    return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), q.resolution)


def _axis_factors(local, cosine: bool):
    if cosine:
        # 0.5 * (1 - cos(pi t)); each axis blends to 1 before the product
        if isinstance(local, (ad.Node, ad.Jet)):
            return 0.5 - 0.5 * ad.cos(np.pi * local)
        return 0.5 - 0.5 * np.cos(np.pi * local)
    return local


def _weights(local, d, cosine):
    pat = corner_patterns(d).astype(np.float64)
    f1 = _axis_factors(local, cosine)
    traced = isinstance(f1, (ad.Node, ad.Jet))
    w = None
    for a in range(d):
        col = f1[:, a:a + 1]
        # (1 - t) on the 0 side, t on the 1 side
        bits = pat[None, :, a]
        factor = (1.0 - bits) + col * (2.0 * bits - 1.0)
        w = factor if w is None else (w * factor)
    if not traced:
        return np.asarray(w)
    return w


def weights_multilinear(local, d: int | None = None):
    """Volume weights ``prod_a (b_a ? t_a : 1 - t_a)``; shape ``(B, 2**d)``."""
    d = _value(local).shape[-1] if d is None else d
    return _weights(local, d, cosine=False)


def weights_cosine(local, d: int | None = None):
    """Same product, with every axis factor passed through ``t -> (1 - cos(pi t)) / 2``."""
    d = _value(local).shape[-1] if d is None else d
    return _weights(local, d, cosine=True)


WEIGHTINGS = {"multilinear": weights_multilinear, "cosine": weights_cosine}


def query(u, resolution, weighting: str = "multilinear") -> CellQuery:
    """Full lookup of the cell and its corner offsets with blend weights."""
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    q = locate(u, resolution)
    q.corners = corner_indices(q)
    q.offsets = corner_offsets(q)
    q.weights = WEIGHTINGS[weighting](q.local, q.dim)
    return q


class FeatureGrid:
    """``num_grids`` parallel lattices of ``channels``-wide latent vectors.

    Each parallel grid is its own parameter named ``grid.{m}.values`` with
    shape ``resolution + (channels,)``.
    """

    def __init__(self, resolution: Sequence[int], channels: int, num_grids: int = 1,
                 values: Sequence[np.ndarray] | None = None, rng=None, init_range: float = 0.1):
        self.resolution = tuple(int(n) for n in resolution)
        self.channels = int(channels)
        self.num_grids = int(num_grids)
        if self.num_grids < 1 or self.channels < 1:
            raise ValueError("num_grids and channels must be >= 1")
        if any(n < 2 for n in self.resolution):
            raise ValueError("each grid dimension needs at least 2 vertices")
        shape = self.resolution + (self.channels,)
        if values is None:
            rng = np.random.default_rng() if rng is None else rng
            values = [rng.uniform(-init_range, init_range, size=shape) for _ in range(self.num_grids)]
        if len(values) != self.num_grids:
            raise ValueError("need one value array per parallel grid")
        self.params = []
        for m, v in enumerate(values):
            v = np.asarray(v, dtype=np.float64)
            if v.shape != shape:
                raise ValueError(f"grid {m} has shape {v.shape}, expected {shape}")
            self.params.append(ad.Parameter(f"grid.{m}.values", v))

    @property
    def dim(self):
        return len(self.resolution)

    @property
    def num_vertices(self):
        return int(np.prod(self.resolution))

    def parameters(self):
        return list(self.params)


def gather(grid: FeatureGrid, q: CellQuery, m: int, tape: ad.Tape):
    """Latent vectors at the ``2**d`` corners of each query cell for parallel grid ``m``.

    Returns a ``(B, 2**d, C)`` node wired to ``grid.{m}.values``.
    """
    if not 0 <= m < grid.num_grids:
        raise IndexError(f"grid index {m} out of range")
    if q.resolution != grid.resolution:
        raise ValueError("query was located on a different resolution")
    corners = q.corners if q.corners is not None else corner_indices(q)
    table = ad.reshape(tape.param(grid.params[m]), (grid.num_vertices, grid.channels))
    return ad.take(table, corners)
