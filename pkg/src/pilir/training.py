"""Physics-informed loss and the Adam training loop with cosine annealing."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .problems import Dirichlet, PdeProblem, PeriodicPair
from .sampling import PointSets, sample

# ---------------------------------------------------------------------------
# loss


def _mse(node):
    return ad.mean(ad.square(node))


def _periodic_terms(model, problem, tape, bset, orders_needed):
    """Value (and slope) mismatch across a periodic pair, from one batched call."""
    spec = bset.spec
    n = len(bset.left)
    both = np.concatenate([bset.left, bset.right], axis=0)
    if max(orders_needed) == 0:
        u = model(tape, both)
        return {0: ad.index(u, slice(0, n)) - ad.index(u, slice(n, 2 * n))}
    j = ad.jets(lambda z: model(tape, z), both, {spec.dim: 1}, tape)
    out = {}
    for order in orders_needed:
        node = j.v if order == 0 else j.d1(spec.dim)
        out[order] = ad.index(node, slice(0, n)) - ad.index(node, slice(n, 2 * n))
    return out


def loss(model, problem: PdeProblem, points: PointSets, lambdas=(1.0, 1.0, 1.0), tape=None):
    """Weighted physics-informed loss.

    Returns ``(total, parts)`` where ``parts`` maps ``"r"``, ``"ic"`` and ``"bc"``
    to the unweighted mean-squared terms. Terms a problem does not define are
    constant zero nodes.
    """
    lam_r, lam_ic, lam_bc = (float(v) for v in lambdas)
    if min(lam_r, lam_ic, lam_bc) < 0:
        raise ValueError("loss weights must be nonnegative")
    tape = tape if tape is not None else ad.Tape()
    zero = tape.constant(0.0)

    loss_r = _mse(problem.residual(model, tape, points.interior))

    loss_ic = zero
    if problem.ic is not None and points.initial is not None:
        target = problem.ic.target(points.initial)
        loss_ic = _mse(model(tape, points.initial) - target)

    loss_bc = zero
    periodic = {}
    for bset in points.boundary:
        if isinstance(bset.spec, Dirichlet):
            target = bset.spec.target(bset.points)
            loss_bc = loss_bc + _mse(model(tape, bset.points) - target)
        elif isinstance(bset.spec, PeriodicPair):
            periodic.setdefault(bset.spec.dim, []).append(bset)
    for dim, sets in periodic.items():
        orders = sorted({b.spec.order for b in sets})
        diffs = _periodic_terms(model, problem, tape, sets[0], orders)
        for order in orders:
            loss_bc = loss_bc + _mse(diffs[order])

    total = lam_r * loss_r + lam_ic * loss_ic + lam_bc * loss_bc
    return total, {"r": loss_r, "ic": loss_ic, "bc": loss_bc}


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update applied in place to ``params``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        g = grads.get(p.name)
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.name} {p.value.shape}")
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        state.m[p.name] = m
        if lr != 0.0:
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def cosine_lr(epoch: int, total: int, lr_max: float, lr_min: float) -> float:
    """``lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2``."""
    if total <= 0:
        return lr_max
    if not 0 <= epoch <= total:
        raise ValueError("epoch outside [0, total]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * epoch / total))


# ---------------------------------------------------------------------------
# configuration and loop


@dataclass
class TrainConfig:
    """Optimization settings for one run. Model shape lives with the model."""

    epochs: int = 20_000
    lr_max: float = 1e-3
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_r: float = 1.0
    lambda_ic: float = 1.0
    lambda_bc: float = 1.0
    n_interior: int = 10_000
    n_ic: int = 1_000
    n_bc: int = 1_000
    resample_every: int = 0
    batch_size: int = 0
    eval_every: int = 500
    seed: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.lr_min <= self.lr_max:
            raise ValueError("need 0 <= lr_min <= lr_max")
        if min(self.lambda_r, self.lambda_ic, self.lambda_bc) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.resample_every < 0 or self.batch_size < 0:
            raise ValueError("resample_every and batch_size must be >= 0")

    @property
    def counts(self):
        return (self.n_interior, self.n_ic, self.n_bc)

    @property
    def lambdas(self):
        return (self.lambda_r, self.lambda_ic, self.lambda_bc)

    def to_dict(self):
        return dataclasses.asdict(self)


METRIC_FIELDS = ("epoch", "lr", "loss", "loss_r", "loss_ic", "loss_bc", "rel_l2")


@dataclass
class MetricsRecord:
    """Losses of the step that ended at ``epoch`` and the error of the updated model."""

    epoch: int
    lr: float
    loss: float
    loss_r: float
    loss_ic: float
    loss_bc: float
    rel_l2: float

    def row(self):
        return [str(self.epoch)] + [repr(float(getattr(self, k))) for k in METRIC_FIELDS[1:]]


@dataclass
class TrainResult:
    model: object
    history: list
    status: str = "ok"
    message: str = ""
    epochs_run: int = 0


def snapshot(model):
    return {p.name: p.value.copy() for p in model.parameters()}


def restore(model, snap):
    for p in model.parameters():
        p.value[...] = snap[p.name]


def _points_for(problem, cfg: TrainConfig, round_: int) -> PointSets:
    seed = cfg.seed if round_ == 0 else [cfg.seed, round_]
    return sample(problem, cfg.counts, seed)


def _batch(points: PointSets, cfg: TrainConfig, epoch: int) -> PointSets:
    n = len(points.interior)
    if cfg.batch_size == 0 or cfg.batch_size >= n:
        return points
    per_pass = n // cfg.batch_size
    k = epoch % per_pass
    if k == 0 or not hasattr(points, "_perm"):
        points._perm = np.random.Generator(np.random.Philox([cfg.seed, 7, epoch])).permutation(n)
    sel = points._perm[k * cfg.batch_size:(k + 1) * cfg.batch_size]
    return PointSets(points.interior[sel], points.initial, points.boundary)


def train(problem: PdeProblem, model, cfg: TrainConfig,
          evaluate: Callable | None = None,
          on_eval: Callable | None = None) -> TrainResult:
    """Run the full-batch epoch loop.

    ``evaluate(model) -> rel_l2`` is called every ``eval_every`` epochs and
    after the last one; ``on_eval(record, model)`` lets callers write
    periodic artifacts. If a loss or gradient turns non-finite the loop stops
    and the parameters are rolled back to the last evaluated state.
    """
    cfg.validate()
    params = model.parameters()
    state = AdamState()
    history: list[MetricsRecord] = []
    last_good = snapshot(model)
    points = _points_for(problem, cfg, 0)
    for epoch in range(cfg.epochs):
        if cfg.resample_every and epoch and epoch % cfg.resample_every == 0:
            points = _points_for(problem, cfg, epoch // cfg.resample_every)
        tape = ad.Tape()
        total, parts = loss(model, problem, _batch(points, cfg, epoch), cfg.lambdas, tape)
        grads = ad.backward(total) if np.isfinite(total.value) else None
        values = (float(total.value), float(parts["r"].value), float(parts["ic"].value),
                  float(parts["bc"].value))
        # nodes point back at their tape; dropping them breaks the cycle so memory is freed now
        tape.clear()
        if grads is None or not all(np.all(np.isfinite(g)) for g in grads.values()):
            restore(model, last_good)
            return TrainResult(model, history, "nan",
                               f"non-finite loss or gradient at epoch {epoch}", epoch)
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)
        adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
        done = epoch + 1
        if done % cfg.eval_every == 0 or done == cfg.epochs:
            err = float(evaluate(model)) if evaluate is not None else float("nan")
            rec = MetricsRecord(done, lr, *values, err)
            history.append(rec)
            if not all(np.isfinite(p.value).all() for p in params):
                restore(model, last_good)
                return TrainResult(model, history, "nan", f"non-finite parameters at epoch {done}", done)
            last_good = snapshot(model)
            if on_eval is not None:
                on_eval(rec, model)
    return TrainResult(model, history, "ok", "", cfg.epochs)


def fit(model, x, y, steps: int, lr_max: float = 1e-2, lr_min: float = 1e-5) -> float:
    """Supervised least-squares fit of ``model`` to samples ``(x, y)``; returns the final MSE."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(len(x), -1)
    params = model.parameters()
    state = AdamState()
    err = float("nan")
    for step in range(steps):
        tape = ad.Tape()
        total = _mse(model(tape, x) - y)
        grads = ad.backward(total)
        err = float(total.value)
        tape.clear()
        adam_step(params, grads, state, cosine_lr(step, steps, lr_max, lr_min))
    return err
