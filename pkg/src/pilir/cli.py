"""Command-line entry point: ``pilir train | eval | spectrum | reference | sweep``.

Errors print one line ``pilir: error[<kind>]: <reason>`` to stderr. Exit codes:
0 success, 1 runtime failure, 2 invalid usage or config, 3 training aborted on
a non-finite loss (last good checkpoint kept), 4 checkpoint/model mismatch.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import evaluation as ev
from .networks import predict
from .problems import get_problem
from .training import METRIC_FIELDS, train

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NAN, EXIT_MISMATCH = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_CONFIG)


def _fail(kind, message, code):
    print(f"pilir: error[{kind}]: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# run helpers


def write_metrics(path, history):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for rec in history:
            w.writerow(rec.row())


def _slice2d(problem, grid, values):
    v = np.asarray(values).reshape(grid.shape)
    if v.ndim == 3:
        v = v[:, :, v.shape[2] // 2]
    return v


def write_artifacts(run_dir, tag, problem, model, grid):
    """Field CSV, truth/prediction graymaps and spectrum CSV for the current model."""
    run_dir = Path(run_dir)
    err, pred = ev.evaluate(lambda x: predict(model, x), grid)
    ev.write_field_csv(run_dir / "fields" / f"{tag}.csv", ev.coord_names(problem), grid.coords, grid.truth, pred)
    ev.render_field(_slice2d(problem, grid, pred), run_dir / "fields" / f"{tag}_pred.pgm")
    ev.render_field(_slice2d(problem, grid, grid.truth), run_dir / "fields" / f"{tag}_truth.pgm")
    rep = ev.spectrum_report(problem, lambda x: predict(model, x))
    ev.write_spectrum_csv(rep, run_dir / "spectra" / f"{tag}.csv")
    return err


def run_seed(cfg: cfgmod.ExperimentConfig, seed: int, exp_dir=None):
    """Train one seed; returns ``(status, final_rel_l2, message)``."""
    problem = cfg.build_problem()
    model = cfg.build_model(seed)
    tcfg = cfg.train_config(seed)
    run_dir = Path(exp_dir or Path(cfg.out) / cfg.experiment) / str(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    grid = ev.eval_grid(problem, cfg.eval_sizes)

    def evaluate(m):
        return ev.evaluate(lambda x: predict(m, x), grid)[0]

    def on_eval(rec, m):
        if cfg.artifact_every and rec.epoch % cfg.artifact_every == 0 and rec.epoch != tcfg.epochs:
            write_artifacts(run_dir, f"epoch{rec.epoch:06d}", problem, m, grid)

    result = train(problem, model, tcfg, evaluate, on_eval)
    write_metrics(run_dir / "metrics.csv", result.history)
    meta = {"problem": cfg.problem, "problem_params": cfg.problem_params, "seed": int(seed),
            "epochs": result.epochs_run, "status": result.status}
    ckpt.save(run_dir / "final.ckpt", model, meta)
    final = write_artifacts(run_dir, "final", problem, model, grid)
    return result.status, final, result.message


def _threads():
    try:
        return max(1, int(os.environ.get("PILIR_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(args):
    cfg_text, seed, exp_dir = args
    return run_seed(cfgmod.loads(cfg_text), seed, exp_dir)


def run_experiment(cfg: cfgmod.ExperimentConfig, exp_dir=None):
    """All seeds of one experiment plus ``summary.csv``; returns per-seed results."""
    exp_dir = Path(exp_dir or Path(cfg.out) / cfg.experiment)
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "config.json").write_text(cfg.dumps())
    jobs = [(cfg.dumps(), s, str(exp_dir)) for s in cfg.seeds]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [run_seed(cfg, s, exp_dir) for s in cfg.seeds]
    write_summary(exp_dir / "summary.csv", cfg.seeds, results)
    return results


def write_summary(path, seeds, results):
    errs = np.array([r[1] for r in results], dtype=np.float64)
    std = float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "status", "final_rel_l2"])
        for s, r in zip(seeds, results):
            w.writerow([s, r[0], repr(float(r[1]))])
        w.writerow(["mean", "", repr(float(np.mean(errs)))])
        w.writerow(["std", "", repr(std)])


# ---------------------------------------------------------------------------
# commands


def _config_from_args(a) -> cfgmod.ExperimentConfig:
    raw = {}
    if a.config:
        try:
            import json
            raw = json.loads(Path(a.config).read_text())
        except OSError as exc:
            raise CliError("config", f"cannot read {a.config}: {exc.strerror}", EXIT_CONFIG) from None
        except ValueError as exc:
            raise CliError("config", f"config is not valid JSON: {exc}", EXIT_CONFIG) from None
        if not isinstance(raw, dict):
            raise CliError("config", "config must be a JSON object", EXIT_CONFIG)
    if a.problem:
        raw["problem"] = a.problem
    if a.model:
        raw["model"] = a.model
    if a.full_scale:
        raw["epochs"] = cfgmod.FULL_EPOCHS
    if a.epochs is not None:
        raw["epochs"] = a.epochs
    if a.seed:
        raw["seeds"] = [int(s) for item in a.seed for s in str(item).split(",") if s]
    if a.out:
        raw["out"] = a.out
    if a.experiment:
        raw["experiment"] = a.experiment
    mp = dict(raw.get("model_params", {}) or {})
    if a.resolution is not None:
        mp["resolution"] = a.resolution
    if a.weighting:
        mp["weighting"] = a.weighting
    if mp:
        raw["model_params"] = mp
    try:
        return cfgmod.resolve(raw)
    except cfgmod.ConfigError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def cmd_train(a):
    cfg = _config_from_args(a)
    results = run_experiment(cfg)
    for seed, (status, err, msg) in zip(cfg.seeds, results):
        print(f"seed {seed}: {status} rel_l2 {err!r}" + (f" ({msg})" if msg else ""))
    if any(r[0] == "nan" for r in results):
        bad = [str(s) for s, r in zip(cfg.seeds, results) if r[0] == "nan"]
        raise CliError("nan", f"non-finite loss for seeds {','.join(bad)}; kept last good checkpoint",
                       EXIT_NAN)
    return EXIT_OK


def _load_ckpt(path, config_path=None):
    try:
        manifest, payload = ckpt.read_manifest(Path(path).read_bytes())
    except OSError as exc:
        raise CliError("checkpoint", f"cannot read {path}: {exc.strerror}", EXIT_ERROR) from None
    except ckpt.CheckpointError as exc:
        raise CliError("checkpoint", str(exc), EXIT_ERROR) from None
    if config_path:
        try:
            cfg = cfgmod.load(config_path)
        except (OSError, cfgmod.ConfigError) as exc:
            raise CliError("config", str(exc), EXIT_CONFIG) from None
        model = cfg.build_model(0)
        diff = ckpt.manifest_diff(manifest, model)
        if diff:
            raise CliError("mismatch", "checkpoint vs config: " + "; ".join(diff), EXIT_MISMATCH)
    else:
        model = ckpt.from_config(manifest["model"])
    try:
        ckpt.load_into(model, manifest, payload)
    except ckpt.CheckpointError as exc:
        raise CliError("mismatch", str(exc), EXIT_MISMATCH) from None
    return model, manifest


def _problem_for(manifest, name=None):
    meta = manifest.get("meta", {})
    name = name or meta.get("problem")
    if not name:
        raise CliError("usage", "checkpoint names no problem; pass --problem", EXIT_CONFIG)
    params = meta.get("problem_params", {}) if name == meta.get("problem") else {}
    try:
        return get_problem(name, **params)
    except (ValueError, TypeError) as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def _sizes(text):
    if not text:
        return None
    try:
        return [int(s) for s in text.lower().replace(",", "x").split("x")]
    except ValueError:
        raise CliError("usage", f"bad grid spec {text!r}; use e.g. 256x256", EXIT_CONFIG) from None


def evaluate_model(model, problem, sizes=None, out_dir=None):
    """Relative L2 of ``model`` on the evaluation grid; writes field CSV and graymaps when asked."""
    grid = ev.eval_grid(problem, sizes)
    err, pred = ev.evaluate(lambda x: predict(model, x), grid)
    if out_dir is not None:
        out_dir = Path(out_dir)
        ev.write_field_csv(out_dir / "field.csv", ev.coord_names(problem), grid.coords, grid.truth, pred)
        ev.render_field(_slice2d(problem, grid, pred), out_dir / "pred.pgm")
        ev.render_field(_slice2d(problem, grid, grid.truth), out_dir / "truth.pgm")
    return err


def _check_domain(model, problem):
    if model.dim != problem.dim:
        raise CliError("mismatch", f"model dimension {model.dim} vs problem dimension {problem.dim}",
                       EXIT_MISMATCH)
    mb = np.asarray(model.bounds, dtype=np.float64)
    if not np.allclose(mb, problem.bounds):
        raise CliError("mismatch", f"model domain {mb.tolist()} vs {problem.name} domain "
                       f"{problem.bounds.tolist()}", EXIT_MISMATCH)


def cmd_eval(a):
    model, manifest = _load_ckpt(a.checkpoint, a.config)
    problem = _problem_for(manifest, a.problem)
    _check_domain(model, problem)
    out = Path(a.out) if a.out else Path(a.checkpoint).parent / "eval"
    err = evaluate_model(model, problem, _sizes(a.grid), out)
    print(repr(err))
    return EXIT_OK


def cmd_spectrum(a):
    model, manifest = _load_ckpt(a.checkpoint)
    problem = _problem_for(manifest, a.problem)
    _check_domain(model, problem)
    times = [float(t) for t in a.times.split(",")] if a.times else ev.SPECTRUM_TIMES
    rep = ev.spectrum_report(problem, lambda x: predict(model, x), n=a.n, times=times, k=a.top_k)
    out = Path(a.out) if a.out else Path(a.checkpoint).parent / "spectrum.csv"
    ev.write_spectrum_csv(rep, out)
    for t, tt, tp in zip(rep.times, rep.top_truth, rep.top_pred):
        print(f"t={t}: truth " + " ".join(f"{k}:{v:.4g}" for k, v in tt))
        print(f"t={t}: pred  " + " ".join(f"{k}:{v:.4g}" for k, v in tp))
    return EXIT_OK


def cmd_reference(a):
    try:
        problem = get_problem(a.problem)
        ref = ev.reference_solve(problem, modes=a.modes, dt=a.dt)
    except (ValueError, FloatingPointError) as exc:
        raise CliError("reference", str(exc), EXIT_ERROR) from None
    out = Path(a.out) if a.out else Path(f"{a.problem}_reference.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    vals = ref.values
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "u"])
        for i, t in enumerate(ref.times):
            for x, u in zip(ref.x, vals[i]):
                w.writerow([repr(float(x)), repr(float(t)), repr(float(u))])
    ev.render_field(vals.T, out.with_suffix(".pgm"))
    print(f"{out} ({len(ref.times)} times x {ref.modes} points)")
    return EXIT_OK


def cmd_sweep(a):
    base = _config_from_args(a)
    try:
        resolutions = [int(r) for r in a.resolutions.split(",")]
    except ValueError:
        raise CliError("usage", f"bad resolution list {a.resolutions!r}", EXIT_CONFIG) from None
    if base.model not in ("pilir", "interp_grid"):
        raise CliError("config", "sweep needs a grid model", EXIT_CONFIG)
    root = Path(base.out) / base.experiment
    rows = []
    for res in resolutions:
        cfg = cfgmod.resolve(base.to_dict() | {
            "model_params": base.model_params | {"resolution": res},
            "experiment": f"{base.experiment}/res{res}"})
        results = run_experiment(cfg)
        for seed, (status, err, _) in zip(cfg.seeds, results):
            rows.append((res, seed, status, err))
            print(f"resolution {res} seed {seed}: {status} rel_l2 {err!r}")
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["resolution", "seed", "status", "final_rel_l2"])
        for res, seed, status, err in rows:
            w.writerow([res, seed, status, repr(float(err))])
    return EXIT_NAN if any(r[2] == "nan" for r in rows) else EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--problem", help="problem name")
    p.add_argument("--model", choices=sorted(cfgmod.MODEL_KEYS), help="model kind")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", action="append", help="seed or comma list; repeatable")
    p.add_argument("--resolution", type=int, help="grid vertices per dimension")
    p.add_argument("--out", help="output root")
    p.add_argument("--experiment", help="experiment name (output subdirectory)")
    p.add_argument("--weighting", choices=["multilinear", "cosine"])
    p.add_argument("--full-scale", action="store_true", help=f"train {cfgmod.FULL_EPOCHS} epochs")


def build_parser():
    parser = _Parser(prog="pilir", description="Grid-based physics-informed PDE solver.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train one run per seed")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="relative L2 of a checkpoint; writes field CSV and graymaps")
    p.add_argument("checkpoint")
    p.add_argument("--problem")
    p.add_argument("--config", help="check the checkpoint against this config")
    p.add_argument("--grid", help="points per dimension, e.g. 256x256")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="FFT amplitude spectra of truth and prediction")
    p.add_argument("checkpoint")
    p.add_argument("--problem")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--times", help="comma list of slice positions")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reference", help="pseudo-spectral reference solution table")
    p.add_argument("--problem", required=True)
    p.add_argument("--modes", type=int, default=512)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("sweep", help="train across grid resolutions")
    _add_run_flags(p)
    p.add_argument("--resolutions", default="8,12,16")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return a.func(a)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except cfgmod.ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except KeyboardInterrupt:
        return _fail("interrupted", "stopped by user", EXIT_ERROR)
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
