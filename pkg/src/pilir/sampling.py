"""Seeded point sets for the residual and the boundary terms.

All randomness comes from numpy's ``Philox`` counter-based bit generator
(Philox4x64-10) keyed by the run seed, so point sets are reproducible from
the seed alone on any platform with the same numpy ``Generator`` algorithms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problems import Dirichlet, PdeProblem, PeriodicPair

DEFAULT_COUNTS = (10_000, 1_000, 1_000)
COUNT_SCALE_3D = 5


def make_rng(seed) -> np.random.Generator:
    """The package-wide generator: Philox keyed by ``seed`` (an int or a sequence of ints)."""
    key = int(seed) if np.ndim(seed) == 0 else [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(key))


@dataclass
class BoundarySet:
    """Points for one boundary spec. Dirichlet sets fill ``points``; periodic sets fill ``left``/``right``."""

    spec: object
    points: np.ndarray | None = None
    left: np.ndarray | None = None
    right: np.ndarray | None = None


@dataclass
class PointSets:
    interior: np.ndarray
    initial: np.ndarray | None = None
    boundary: list = field(default_factory=list)


def default_counts(problem: PdeProblem):
    """10k/1k/1k, scaled by five for three-dimensional domains."""
    scale = COUNT_SCALE_3D if problem.dim >= 3 else 1
    return tuple(c * scale for c in DEFAULT_COUNTS)


def _uniform(rng, bounds, n):
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + (hi - lo) * rng.random((n, len(bounds)))


def _dirichlet_points(rng, problem, n):
    """Uniform over the spatial faces; each point picks a face then a position on it."""
    b = problem.bounds
    pts = _uniform(rng, b, n)
    nsp = problem.spatial_dims
    face = rng.integers(0, 2 * nsp, size=n)
    dim, side = face // 2, face % 2
    pts[np.arange(n), dim] = b[dim, side]
    return pts


def _periodic_pairs(rng, problem, spec: PeriodicPair, n):
    b = problem.bounds
    left = _uniform(rng, b, n)
    left[:, spec.dim] = b[spec.dim, 0]
    right = left.copy()
    right[:, spec.dim] = b[spec.dim, 1]
    return left, right


def sample(problem: PdeProblem, counts=None, seed: int = 0) -> PointSets:
    """Draw interior, initial and boundary points for ``problem``.

    ``counts`` is ``(N_r, N_ic, N_bc)``; the boundary count is split evenly
    over the boundary specs. Periodic value and slope specs on the same
    dimension share one set of pairs.
    """
    n_r, n_ic, n_bc = default_counts(problem) if counts is None else (int(c) for c in counts)
    if n_r < 1:
        raise ValueError("need at least one interior point")
    if n_ic > 0 and problem.ic is None:
        raise ValueError(f"{problem.name} has no initial condition to sample")
    rng = make_rng(seed)
    interior = _uniform(rng, problem.bounds, n_r)
    initial = None
    if problem.ic is not None:
        if n_ic < 1:
            raise ValueError("time-dependent problems need at least one initial point")
        initial = _uniform(rng, problem.bounds, n_ic)
        initial[:, -1] = problem.bounds[-1, 0]
    sets = []
    if problem.bcs:
        if n_bc < 1:
            raise ValueError("need at least one boundary point")
        pairs_by_dim = {}
        groups = []
        for spec in problem.bcs:
            if isinstance(spec, PeriodicPair):
                if spec.dim not in pairs_by_dim:
                    pairs_by_dim[spec.dim] = None
                    groups.append(("periodic", spec.dim))
            elif isinstance(spec, Dirichlet):
                groups.append(("dirichlet", spec))
            else:
                raise TypeError(f"unknown boundary spec {spec!r}")
        per = max(1, n_bc // len(groups))
        for kind, key in groups:
            if kind == "periodic":
                pairs_by_dim[key] = _periodic_pairs(rng, problem, PeriodicPair(key), per)
            else:
                sets.append(BoundarySet(key, points=_dirichlet_points(rng, problem, per)))
        for spec in problem.bcs:
            if isinstance(spec, PeriodicPair):
                left, right = pairs_by_dim[spec.dim]
                sets.append(BoundarySet(spec, left=left, right=right))
    return PointSets(interior=interior, initial=initial, boundary=sets)
