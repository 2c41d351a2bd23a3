"""Short PILIR training run on the convection problem, driven through the library API.

Trains for a few hundred epochs on a small point set, logging the losses and
the relative L2 error on a coarse evaluation grid, then writes a checkpoint
and the predicted field as a 16-bit graymap. Raise ``EPOCHS`` for a real run.

    python demos/train_convection.py [output_dir]
"""

import sys
from pathlib import Path

from pilir import checkpoint as ck
from pilir import config
from pilir import evaluation as ev
from pilir import networks as nw
from pilir import training as tr

EPOCHS = 300
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")

cfg = config.resolve({"problem": "convection", "seeds": [1], "epochs": EPOCHS, "eval_every": 50,
                      "n_interior": 1000, "n_ic": 200, "n_bc": 200, "resample_every": 100,
                      "model_params": {"num_grids": 4}})
problem = cfg.build_problem()
model = cfg.build_model(1)
grid = ev.eval_grid(problem, (128, 51))


def evaluate(m):
    return ev.evaluate(lambda x: nw.predict(m, x), grid)[0]


def log(rec, m):
    print(f"epoch {rec.epoch:5d}  lr {rec.lr:.1e}  loss {rec.loss:.3e}  rel_l2 {rec.rel_l2:.3e}")


result = tr.train(problem, model, cfg.train_config(1), evaluate, log)
ck.save(out / "convection.ckpt", model, {"problem": "convection", "epochs": result.epochs_run})
_, pred = ev.evaluate(lambda x: nw.predict(model, x), grid)
ev.render_field(pred.reshape(grid.shape), out / "convection_pred.pgm")
print(f"wrote {out}/convection.ckpt and {out}/convection_pred.pgm")
