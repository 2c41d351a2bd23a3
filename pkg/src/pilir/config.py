"""Experiment configuration: the JSON schema with per-problem defaults.

A config file is a JSON object. Every key is optional except ``problem``;
missing keys take the per-problem defaults below and unknown keys are
rejected. Schema (types in brackets)::

    experiment      [str]   output subdirectory name; default "<problem>-<model>"
    problem         [str]   helmholtz2d | helmholtz3d | convection | convection_ms
                            | allen_cahn | reaction_diffusion
    problem_params  [obj]   overrides of the PDE constants, e.g. {"a": [4, 4], "k": 1}
    model           [str]   pilir | mlp_pinn | wavelet_pinn | interp_grid
    model_params    [obj]   see MODEL_KEYS
    seeds           [list]  one run per seed
    out             [str]   output root directory
    eval_sizes      [list]  evaluation grid points per dimension, or null for defaults
    artifact_every  [int]   epochs between field/spectrum snapshots; 0 = final only
    ...             all TrainConfig fields (epochs, lr_max, lr_min, beta1, beta2, eps,
                    lambda_r, lambda_ic, lambda_bc, n_interior, n_ic, n_bc,
                    resample_every, batch_size, eval_every); ``seed`` is replaced by ``seeds``
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import networks as nw
from .problems import PROBLEMS, get_problem
from .training import TrainConfig

DESK_EPOCHS = 20_000
FULL_EPOCHS = 100_000
DEFAULT_SEEDS = (100, 200, 300, 400, 500)

MODEL_KEYS = {
    "pilir": {"resolution", "channels", "num_grids", "synth_hidden", "synth_layers", "feature_dim",
              "head_hidden", "weighting", "init_range", "synth_activation"},
    "interp_grid": {"resolution", "channels", "num_grids", "head_hidden", "weighting", "init_range"},
    "mlp_pinn": {"hidden_layers"},
    "wavelet_pinn": {"hidden_layers"},
}

_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}

# per-problem setup: PDE constants, initial learning rate, model shapes
PROBLEM_DEFAULTS = {
    "helmholtz2d": dict(problem_params={"a": [10.0, 10.0], "k": 1.0}, lr_max=1e-2,
                        grid=dict(resolution=16, num_grids=1, synth_layers=2), mlp=[100] * 7),
    "helmholtz3d": dict(problem_params={"a": [10.0, 10.0, 10.0], "k": 1.0}, lr_max=1e-2,
                        grid=dict(resolution=16, num_grids=1, synth_layers=2), mlp=[100] * 7),
    "convection": dict(problem_params={"beta": 30.0}, lr_max=1e-3,
                       grid=dict(resolution=16, num_grids=16, synth_layers=3), mlp=[50] * 3),
    "convection_ms": dict(problem_params={"beta": 30.0}, lr_max=1e-3,
                          grid=dict(resolution=16, num_grids=16, synth_layers=3), mlp=[50] * 3),
    "allen_cahn": dict(problem_params={"nu": 1e-4, "lam": 5.0}, lr_max=1e-3,
                       grid=dict(resolution=16, num_grids=16, synth_layers=3), mlp=[128] * 6),
    "reaction_diffusion": dict(problem_params={"nu": 0.5, "rho": 5.0}, lr_max=1e-3,
                               grid=dict(resolution=16, num_grids=1, synth_layers=2, channels=8),
                               mlp=[50] * 3),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def default_model_params(problem: str, model: str) -> dict:
    d = PROBLEM_DEFAULTS[problem]
    g = d["grid"]
    if model == "pilir":
        return {"resolution": g["resolution"], "channels": g.get("channels", 4), "num_grids": g["num_grids"],
                "synth_hidden": 16, "synth_layers": g["synth_layers"], "feature_dim": 16,
                "head_hidden": [16], "weighting": "cosine", "init_range": 0.1, "synth_activation": "tanh"}
    if model == "interp_grid":
        # multi-grid interpolation baseline: 16 parallel grids
        return {"resolution": g["resolution"], "channels": 4, "num_grids": 16, "head_hidden": [16],
                "weighting": "cosine", "init_range": 0.1}
    if model in ("mlp_pinn", "wavelet_pinn"):
        return {"hidden_layers": list(d["mlp"])}
    raise ConfigError(f"unknown model kind {model!r}")


@dataclass
class ExperimentConfig:
    problem: str
    model: str = "pilir"
    experiment: str = ""
    problem_params: dict = field(default_factory=dict)
    model_params: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out: str = "out"
    eval_sizes: list | None = None
    artifact_every: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.model not in MODEL_KEYS:
            raise ConfigError(f"unknown model {self.model!r}")
        extra = set(self.model_params) - MODEL_KEYS[self.model]
        if extra:
            raise ConfigError(f"unknown model_params for {self.model}: {sorted(extra)}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if self.artifact_every < 0:
            raise ConfigError("artifact_every must be >= 0")
        w = self.model_params.get("weighting")
        if w is not None and w not in ("multilinear", "cosine"):
            raise ConfigError(f"unknown weighting {w!r}")
        try:
            self.train.validate()
            get_problem(self.problem, **self.problem_params)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        t = self.train.to_dict()
        t.pop("seed")
        return {"experiment": self.experiment, "problem": self.problem,
                "problem_params": self.problem_params, "model": self.model,
                "model_params": self.model_params, "seeds": list(self.seeds), "out": self.out,
                "eval_sizes": self.eval_sizes, "artifact_every": self.artifact_every, **t}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def train_config(self, seed: int) -> TrainConfig:
        return dataclasses.replace(self.train, seed=int(seed))

    def build_problem(self):
        return get_problem(self.problem, **self.problem_params)

    def build_model(self, seed: int):
        return build_model(self.problem, self.model, self.model_params, get_problem(
            self.problem, **self.problem_params).bounds, seed)


def build_model(problem_name, kind, params, bounds, seed):
    p = default_model_params(problem_name, kind) | dict(params)
    d = len(bounds)
    if kind in ("pilir", "interp_grid"):
        res = p["resolution"]
        res = [int(res)] * d if isinstance(res, (int, float)) else [int(r) for r in res]
        if len(res) != d:
            raise ConfigError(f"resolution needs {d} entries")
    if kind == "pilir":
        return nw.PilirModel.create(bounds, res, channels=p["channels"], num_grids=p["num_grids"],
                                    hidden=p["synth_hidden"], synth_layers=p["synth_layers"],
                                    feature_dim=p["feature_dim"], head_hidden=tuple(p["head_hidden"]),
                                    weighting=p["weighting"], activation=p["synth_activation"],
                                    seed=seed, init_range=p["init_range"])
    if kind == "interp_grid":
        return nw.InterpGridModel.create(bounds, res, channels=p["channels"], num_grids=p["num_grids"],
                                         head_hidden=tuple(p["head_hidden"]), weighting=p["weighting"],
                                         seed=seed, init_range=p["init_range"])
    act = "gaussian_wavelet" if kind == "wavelet_pinn" else "tanh"
    return nw.MlpPinn.create(bounds, tuple(p["hidden_layers"]), activation=act, seed=seed)


def resolve(raw: dict) -> ExperimentConfig:
    """Fill defaults for a raw mapping and validate it."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {"experiment", "problem", "problem_params", "model", "model_params", "seeds", "out",
             "eval_sizes", "artifact_every"} | _TRAIN_KEYS
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "problem" not in raw:
        raise ConfigError("config needs a 'problem'")
    problem = raw["problem"]
    if problem not in PROBLEM_DEFAULTS:
        raise ConfigError(f"unknown problem {problem!r}")
    model = raw.get("model", "pilir")
    if model not in MODEL_KEYS:
        raise ConfigError(f"unknown model {model!r}")
    d = PROBLEM_DEFAULTS[problem]
    train_kw = {"epochs": DESK_EPOCHS, "lr_max": d["lr_max"]}
    if problem.startswith("helmholtz"):
        # steady problems have no initial slice
        train_kw["n_ic"] = 0
    if problem == "helmholtz3d":
        train_kw |= {"n_interior": 50_000, "n_bc": 5_000}
    train_kw |= {k: raw[k] for k in _TRAIN_KEYS if k in raw}
    try:
        train = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    mp = raw.get("model_params", {}) or {}
    if not isinstance(mp, dict):
        raise ConfigError("model_params must be an object")
    extra = set(mp) - MODEL_KEYS[model]
    if extra:
        raise ConfigError(f"unknown model_params for {model}: {sorted(extra)}")
    pp = dict(d["problem_params"]) | dict(raw.get("problem_params", {}) or {})
    cfg = ExperimentConfig(
        problem=problem, model=model,
        experiment=raw.get("experiment") or f"{problem}-{model}",
        problem_params=pp,
        model_params=default_model_params(problem, model) | mp,
        seeds=[int(s) for s in raw.get("seeds", DEFAULT_SEEDS)],
        out=str(raw.get("out", "out")),
        eval_sizes=list(raw["eval_sizes"]) if raw.get("eval_sizes") else None,
        artifact_every=int(raw.get("artifact_every", 0)),
        train=train)
    return cfg.validate()


def loads(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return resolve(raw)


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())
