"""Fit sin(2 pi x) on a single grid cell with both grid decoders.

Linear interpolation of two corner latents followed by a linear decode can
only move monotonically between the two decoded corner values, so it cannot
follow a full sine period. The synthesis network sees the offset to each
corner and produces the oscillation inside the cell.

    python demos/convex_hull.py
"""

import numpy as np

from pilir import networks as nw
from pilir import training as tr

x = np.linspace(0.0, 1.0, 257)[:, None]
y = np.sin(2 * np.pi * x)
probe = np.linspace(0.0, 1.0, 11)[:, None]

for name, model in (
    ("interp_grid", nw.InterpGridModel.create([(0, 1)], (2,), channels=1, head_hidden=(), seed=0)),
    ("pilir", nw.PilirModel.create([(0, 1)], (2,), channels=1, head_hidden=(), seed=0)),
):
    mse = tr.fit(model, x, y, steps=3000)
    pred = nw.predict(model, probe)[:, 0]
    print(f"{name:12s} train mse {mse:.2e}  max error {np.max(np.abs(pred - np.sin(2 * np.pi * probe[:, 0]))):.3f}")
    print("   x    truth   pred")
    for xi, p in zip(probe[:, 0], pred):
        print(f"  {xi:.1f}  {np.sin(2 * np.pi * xi):+.3f}  {p:+.3f}")
