"""Information-plane figure renderer.

Reads trajectory CSVs (schema: epoch,pred_term,cplx_term,pred_norm,
cplx_norm,train_loss,test_loss), lays them out on a grid with one row per
experiment/function directory and one column per seed, and draws each
trajectory as an epoch-ordered scatter+path: complexity on the x-axis,
prediction on the y-axis, colored light (early) to dark (late). IB
trajectories use a blue family, GIB a pink family.
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import hashlib
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXPECTED_COLUMNS = ["epoch", "pred_term", "cplx_term", "pred_norm",
                    "cplx_norm", "train_loss", "test_loss"]

# styling constants, shared by every figure so experiments stay comparable
DPI = 150
COLORMAPS = {"IB": "Blues", "GIB": "RdPu", "SVW": "Greens"}
FALLBACK_CMAP = "Greys"
CMAP_RANGE = (0.35, 1.0)  # skip the near-white end so early epochs stay visible
MARKER_SIZE = 14
LINE_WIDTH = 0.8
PANEL_SIZE = 2.4


class SchemaError(ValueError):
    pass


@dataclass
class Trajectory:
    path: str
    kind: str  # IB | GIB | SVW | other, from the filename
    seed: int
    epochs: np.ndarray
    pred: np.ndarray
    cplx: np.ndarray
    pred_norm: np.ndarray
    cplx_norm: np.ndarray

    def coords(self, normalized: bool):
        if normalized:
            return self.cplx_norm, self.pred_norm
        return self.cplx, self.pred


@dataclass
class PlotJob:
    inputs: list
    output: str
    grid: str = "auto"  # "auto" or "ROWSxCOLS"
    normalize: bool = False
    dpi: int = DPI

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("PlotJob needs at least one input CSV")
        if self.grid != "auto" and not re.fullmatch(r"\d+x\d+", self.grid):
            raise ValueError(f"grid must be 'auto' or ROWSxCOLS, got {self.grid!r}")


def _parse_name(path):
    stem = Path(path).stem
    m = re.fullmatch(r"(.+)_seed(\d+)", stem)
    if m:
        return m.group(1).upper(), int(m.group(2))
    return stem.upper(), 0


def load_csv(path) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != EXPECTED_COLUMNS:
            missing = [c for c in EXPECTED_COLUMNS if c not in (header or [])]
            bad = missing[0] if missing else (header or ["<empty>"])[0]
            raise SchemaError(f"{path}: unexpected schema near column {bad!r}")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.array(rows)
    kind, seed = _parse_name(path)
    return Trajectory(str(path), kind, seed, data[:, 0], data[:, 1],
                      data[:, 2], data[:, 3], data[:, 4])


def _grid_layout(trajectories, grid):
    """Rows keyed by containing directory, columns by seed order."""
    rows: dict = {}
    for t in trajectories:
        row_key = str(Path(t.path).parent)
        rows.setdefault(row_key, {}).setdefault(t.seed, []).append(t)
    row_keys = sorted(rows)
    n_rows = len(row_keys)
    n_cols = max(len(seeds) for seeds in rows.values())
    if grid != "auto":
        n_rows, n_cols = (int(v) for v in grid.split("x"))
        need = len({(str(Path(t.path).parent), t.seed) for t in trajectories})
        if n_rows * n_cols < need:
            raise ValueError(f"grid {grid} cannot hold {need} panels")
    cells = {}
    for i, key in enumerate(row_keys):
        for j, seed in enumerate(sorted(rows[key])):
            cells[(i, j)] = (key, seed, rows[key][seed])
    return n_rows, n_cols, cells


def _draw_trajectory(ax, t: Trajectory, normalized: bool):
    x, y = t.coords(normalized)
    cmap = plt.get_cmap(COLORMAPS.get(t.kind, FALLBACK_CMAP))
    order = np.argsort(t.epochs, kind="stable")
    x, y, ep = x[order], y[order], t.epochs[order]
    if ep.max() > ep.min():
        frac = (ep - ep.min()) / (ep.max() - ep.min())
    else:
        frac = np.zeros_like(ep)
    colors = cmap(CMAP_RANGE[0] + frac * (CMAP_RANGE[1] - CMAP_RANGE[0]))
    ax.plot(x, y, color=cmap(0.6), lw=LINE_WIDTH, zorder=1, alpha=0.6)
    ax.scatter(x, y, c=colors, s=MARKER_SIZE, zorder=2,
               label=f"{t.kind} seed {t.seed}")


def render(job: PlotJob) -> str:
    """Draw the grid figure and write it; returns the output path."""
    trajectories = [load_csv(p) for p in job.inputs]
    n_rows, n_cols, cells = _grid_layout(trajectories, job.grid)
    fig, axes = plt.subplots(
        n_rows, n_cols, squeeze=False,
        figsize=(PANEL_SIZE * n_cols, PANEL_SIZE * n_rows))
    for (i, j), (row_key, seed, ts) in cells.items():
        ax = axes[i][j]
        for t in ts:
            _draw_trajectory(ax, t, job.normalize)
        if job.normalize:
            ax.set_xlim(-0.05, 1.05)
            ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"{Path(row_key).name} / seed {seed}", fontsize=7)
        ax.tick_params(labelsize=6)
    for i in range(n_rows):
        axes[i][0].set_ylabel("prediction", fontsize=7)
    for j in range(n_cols):
        axes[-1][j].set_xlabel("complexity", fontsize=7)
    fig.tight_layout()
    fig.savefig(job.output, dpi=job.dpi, format="png")
    plt.close(fig)
    return job.output


def drawn_data_checksum(job: PlotJob) -> str:
    """Digest of exactly the coordinates the renderer would draw.

    Raster bytes vary across library builds; this pins the drawn data
    instead so reproducibility can be asserted portably.
    """
    h = hashlib.sha256()
    for path in sorted(job.inputs):
        t = load_csv(path)
        x, y = t.coords(job.normalize)
        order = np.argsort(t.epochs, kind="stable")
        h.update(t.kind.encode())
        h.update(np.int64(t.seed).tobytes())
        h.update(np.asarray(x)[order].tobytes())
        h.update(np.asarray(y)[order].tobytes())
    return h.hexdigest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render information-plane trajectory grids")
    parser.add_argument("--glob", required=True,
                        help="glob over trajectory CSVs, e.g. 'out/**/*.csv'")
    parser.add_argument("--grid", default="auto", help="'auto' or ROWSxCOLS")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--normalize", action="store_true",
                        help="plot the normalized columns on [0,1] axes")
    parser.add_argument("--dpi", type=int, default=DPI)
    parser.add_argument("--checksum", action="store_true",
                        help="also print the drawn-data checksum")
    args = parser.parse_args(argv)

    inputs = sorted(globmod.glob(args.glob, recursive=True))
    try:
        job = PlotJob(inputs, args.out, args.grid, args.normalize, args.dpi)
        render(job)
        if args.checksum:
            print(drawn_data_checksum(job))
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
