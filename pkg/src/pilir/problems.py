"""PDE problem definitions: residual operators on jets plus boundary data and exact solutions.

Coordinates are ``(B, d)`` arrays with time, when present, as the last column.
A residual is computed from a model handle ``u(tape, x)`` by pushing a jet
through it along the axes the operator needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class Dirichlet:
    """``u = target(x)`` on every face of the spatial boundary."""

    target: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PeriodicPair:
    """Paired points on opposite faces of ``dim``; ``order`` 0 matches values, 1 matches ``du/dx_dim``."""

    dim: int
    order: int = 0


@dataclass(frozen=True)
class InitialCondition:
    """``u(x, t0) = target(x)`` on the first time slice; ``target`` gets the full coordinate."""

    target: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SpectralForm:
    """Description used by the pseudo-spectral reference solver.

    ``u_t = L u + N(u)`` on a periodic interval, with ``L`` diagonal in Fourier
    space (``linear(k)`` returns its symbol for integer-scaled wavenumbers)
    and ``N`` applied pointwise.
    """

    linear: Callable[[np.ndarray], np.ndarray]
    nonlinear: Callable[[np.ndarray], np.ndarray] | None
    initial: Callable[[np.ndarray], np.ndarray]


@dataclass
class PdeProblem:
    name: str
    bounds: np.ndarray
    orders: dict
    operator: Callable
    params: dict = field(default_factory=dict)
    bcs: tuple = ()
    ic: InitialCondition | None = None
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    exact_graph: Callable | None = None
    spectral: SpectralForm | None = None
    time_dependent: bool = False
    out_dim: int = 1

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def spatial_dims(self):
        return self.dim - 1 if self.time_dependent else self.dim

    @property
    def has_truth(self):
        return self.exact is not None or self.spectral is not None

    def jets(self, model, tape, x):
        return ad.jets(lambda z: model(tape, z), x, self.orders, tape)

    def residual(self, model, tape, x):
        """Residual node ``(B, D_out)`` of ``model`` at coordinates ``x``."""
        x = np.asarray(x, dtype=np.float64)
        return self.operator(self.jets(model, tape, x), x)

    def residual_of_exact(self, x):
        """Residual of the closed-form solution, evaluated through the same jet operator."""
        if self.exact_graph is None:
            raise ValueError(f"{self.name} has no closed-form solution")
        tape = ad.Tape()
        x = np.asarray(x, dtype=np.float64)
        j = ad.jets(self.exact_graph, x, self.orders, tape)
        return self.operator(j, x).value


def _domain(bounds):
    return np.asarray(bounds, dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Helmholtz


def helmholtz(dim: int = 2, a=None, k: float = 1.0) -> PdeProblem:
    """``lap u + k^2 u = q`` on ``[-1, 1]^dim`` with zero Dirichlet data."""
    a = tuple(float(v) for v in (a if a is not None else (10.0,) * dim))
    if len(a) != dim:
        raise ValueError("need one frequency per dimension")
    if dim not in (2, 3):
        raise ValueError("Helmholtz is defined for dim 2 or 3")
    freqs = np.pi * np.asarray(a)
    k2 = float(k) ** 2

    def exact(x):
        return np.prod(np.sin(freqs * np.asarray(x)), axis=-1, keepdims=True)

    def source(x):
        return (k2 - float(np.sum(freqs ** 2))) * exact(x)

    def exact_graph(xj):
        u = None
        for i in range(dim):
            f = ad.sin(xj[:, i:i + 1] * freqs[i])
            u = f if u is None else u * f
        return u

    def operator(j, x):
        lap = j.d2(0)
        for i in range(1, dim):
            lap = lap + j.d2(i)
        return lap + k2 * j.v - source(x)

    params = {"k": float(k)} | {f"a{i + 1}": v for i, v in enumerate(a)}
    return PdeProblem(
        name=f"helmholtz{dim}d", bounds=_domain([(-1.0, 1.0)] * dim),
        orders={i: 2 for i in range(dim)}, operator=operator, params=params,
        bcs=(Dirichlet(lambda x: np.zeros((len(x), 1))),),
        exact=exact, exact_graph=exact_graph)


def helmholtz_source(x, a, k):
    """Source term ``q`` for the given frequencies and wavenumber."""
    freqs = np.pi * np.asarray(a, dtype=np.float64)
    u = np.prod(np.sin(freqs * np.asarray(x, dtype=np.float64)), axis=-1)
    return (k * k - np.sum(freqs ** 2)) * u


# ---------------------------------------------------------------------------
# Convection

MULTISCALE = ((1, 1.0), (4, 0.5), (8, 0.1), (16, 0.1))
SINGLE_SINE = ((1, 1.0),)
CONVECTION_ICS = {"single_sine": SINGLE_SINE, "multiscale": MULTISCALE}


def _sine_sum(terms, x):
    out = np.zeros_like(x)
    for n, amp in terms:
        out = out + amp * np.sin(n * x)
    return out


def convection(beta: float = 30.0, ic: str = "single_sine") -> PdeProblem:
    """``u_t + beta u_x = 0`` on ``[0, 2pi] x [0, 1]``, periodic in x."""
    if ic not in CONVECTION_ICS:
        raise ValueError(f"unknown convection initial condition {ic!r}")
    terms = CONVECTION_ICS[ic]
    beta = float(beta)
    period = 2.0 * np.pi

    def exact(x):
        x = np.asarray(x)
        xi = np.mod(x[:, 0] - beta * x[:, 1], period)
        return _sine_sum(terms, xi)[:, None]

    def exact_graph(xj):
        xi = xj[:, 0:1] - xj[:, 1:2] * beta
        u = None
        for n, amp in terms:
            f = ad.sin(xi * float(n)) * amp
            u = f if u is None else u + f
        return u

    def operator(j, x):
        return j.d1(1) + beta * j.d1(0)

    return PdeProblem(
        name="convection" if ic == "single_sine" else "convection_ms",
        bounds=_domain([(0.0, period), (0.0, 1.0)]), orders={0: 1, 1: 1},
        operator=operator, params={"beta": beta},
        bcs=(PeriodicPair(0, 0),),
        ic=InitialCondition(lambda x: _sine_sum(terms, np.asarray(x)[:, 0])[:, None]),
        exact=exact, exact_graph=exact_graph,
        spectral=SpectralForm(lambda kk: -1j * beta * kk, None, lambda xs: _sine_sum(terms, xs)),
        time_dependent=True)


# ---------------------------------------------------------------------------
# Allen-Cahn and reaction-diffusion


def _allen_cahn_ic(xs):
    return xs ** 2 * np.cos(np.pi * xs)


def allen_cahn(nu: float = 1e-4, lam: float = 5.0) -> PdeProblem:
    """``u_t - nu u_xx + lam u^3 - lam u = 0`` on ``[-1, 1] x [0, 1]``, periodic in value and slope."""
    nu, lam = float(nu), float(lam)

    def operator(j, x):
        v = j.v
        return j.d1(1) - nu * j.d2(0) + lam * (v ** 3) - lam * v

    return PdeProblem(
        name="allen_cahn", bounds=_domain([(-1.0, 1.0), (0.0, 1.0)]), orders={0: 2, 1: 1},
        operator=operator, params={"nu": nu, "lambda": lam},
        bcs=(PeriodicPair(0, 0), PeriodicPair(0, 1)),
        ic=InitialCondition(lambda x: _allen_cahn_ic(np.asarray(x)[:, 0])[:, None]),
        spectral=SpectralForm(lambda kk: -nu * kk ** 2, lambda u: lam * u - lam * u ** 3, _allen_cahn_ic),
        time_dependent=True)


def _rd_ic(xs):
    return np.exp(-0.5 * (4.0 * (xs - np.pi) / np.pi) ** 2)


def reaction_diffusion(nu: float = 0.5, rho: float = 5.0) -> PdeProblem:
    """``u_t - nu u_xx - rho u (1 - u) = 0`` on ``[0, 2pi] x [0, 1]``, periodic in x."""
    nu, rho = float(nu), float(rho)

    def operator(j, x):
        v = j.v
        return j.d1(1) - nu * j.d2(0) - rho * v + rho * (v * v)

    nonlinear = (lambda u: rho * u * (1.0 - u)) if rho != 0.0 else None
    return PdeProblem(
        name="reaction_diffusion", bounds=_domain([(0.0, 2.0 * np.pi), (0.0, 1.0)]),
        orders={0: 2, 1: 1}, operator=operator, params={"nu": nu, "rho": rho},
        bcs=(PeriodicPair(0, 0),),
        ic=InitialCondition(lambda x: _rd_ic(np.asarray(x)[:, 0])[:, None]),
        spectral=SpectralForm(lambda kk: -nu * kk ** 2, nonlinear, _rd_ic),
        time_dependent=True)


PROBLEMS = {
    "helmholtz2d": lambda **kw: helmholtz(2, **kw),
    "helmholtz3d": lambda **kw: helmholtz(3, **kw),
    "convection": lambda **kw: convection(**kw),
    "convection_ms": lambda **kw: convection(ic="multiscale", **kw),
    "allen_cahn": lambda **kw: allen_cahn(**kw),
    "reaction_diffusion": lambda **kw: reaction_diffusion(**kw),
}


def get_problem(name: str, **overrides) -> PdeProblem:
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    if "a" in overrides and overrides["a"] is not None:
        overrides["a"] = tuple(overrides["a"])
    return PROBLEMS[name](**overrides)


class ExactModel:
    """Closed-form solution wrapped in the model interface (no parameters)."""

    kind = "exact"

    def __init__(self, problem: PdeProblem):
        if problem.exact_graph is None:
            raise ValueError(f"{problem.name} has no closed-form solution")
        self.problem = problem
        self.out_dim = problem.out_dim

    @property
    def dim(self):
        return self.problem.dim

    def parameters(self):
        return []

    def __call__(self, tape, x):
        if not isinstance(x, (ad.Node, ad.Jet)):
            x = tape.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        return self.problem.exact_graph(x)
