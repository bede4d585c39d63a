"""On-disk formats: per-slice field CSVs, the run manifest and SVG heatmaps."""

from __future__ import annotations

import json
import os
import warnings
from pathlib import Path

import numpy as np

from . import __version__, lattice
from .scenario import Scenario
from .solver import SolveArtifacts, SpaceTimeGrid, ValueField

MANIFEST = "manifest.json"


class FieldFormatError(ValueError):
    pass


def field_filename(p: int, n: int, k: int) -> str:
    return f"W_{lattice.to_bits(p, n)}_k{k}.csv"


def _coord_strings(grid: SpaceTimeGrid) -> list[str]:
    x = grid.nodes().reshape(-1, grid.dim)
    return [",".join(repr(float(v)) for v in row) for row in x]


def build_manifest(art: SolveArtifacts, solver_params: dict, slices: list[int]) -> dict:
    s = art.scenario
    return {
        "tool": "optvisit",
        "version": __version__,
        "scenario_digest": s.digest(),
        "grid": art.grid.metadata(),
        "solver": solver_params,
        "states": [lattice.to_bits(p, s.n_targets) for p in lattice.backward_order(s.n_targets)],
        "slices": slices,
        "timings": {"level_seconds": art.diagnostics.get("level_seconds", [])},
        "diagnostics": {k: v for k, v in art.diagnostics.items() if k != "level_seconds"},
    }


def write_fields(art: SolveArtifacts, out: str | os.PathLike, solver_params: dict | None = None,
                 slices: list[int] | None = None) -> dict:
    """Write the manifest, then one CSV per (state, slice)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g = art.grid
    n = art.scenario.n_targets
    slices = list(range(g.steps + 1)) if slices is None else sorted(set(slices))
    manifest = build_manifest(art, solver_params or {}, slices)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    coords = _coord_strings(g)
    header = ",".join([f"x_{i + 1}" for i in range(g.dim)] + ["value"]) + "\n"
    for p in lattice.backward_order(n):
        fld = art.fields[p]
        for k in slices:
            vals = [repr(float(v)) for v in fld.values[k].ravel()]
            body = "".join(f"{c},{v}\n" for c, v in zip(coords, vals))
            (out / field_filename(p, n, k)).write_text(header + body)
    return manifest


def read_manifest(fields_dir) -> dict:
    path = Path(fields_dir) / MANIFEST
    if not path.is_file():
        raise FieldFormatError(f"no {MANIFEST} in {fields_dir}")
    return json.loads(path.read_text())


def read_fields(fields_dir, s: Scenario) -> SolveArtifacts:
    """Reload a complete set of fields written by :func:`write_fields`."""
    fields_dir = Path(fields_dir)
    man = read_manifest(fields_dir)
    if man.get("scenario_digest") != s.digest():
        raise FieldFormatError("scenario digest does not match the one recorded by solve")
    gm = man["grid"]
    grid = SpaceTimeGrid(tuple(gm["lo"]), tuple(gm["hi"]), tuple(gm["shape"]), gm["steps"],
                         gm["horizon"])
    if man["slices"] != list(range(grid.steps + 1)):
        raise FieldFormatError("fields directory does not hold every time slice")
    art = SolveArtifacts(s, grid)
    coords = grid.nodes().reshape(-1, grid.dim)
    n = s.n_targets
    for p in lattice.backward_order(n):
        values = np.empty((grid.steps + 1,) + grid.shape)
        for k in range(grid.steps + 1):
            path = fields_dir / field_filename(p, n, k)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")  # empty files are reported below
                    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            except (OSError, ValueError) as e:
                raise FieldFormatError(f"{path.name}: {e}") from None
            if data.shape != (coords.shape[0], grid.dim + 1) or not np.allclose(
                    data[:, :-1], coords, rtol=0, atol=1e-12):
                raise FieldFormatError(f"{path.name}: rows do not match the grid")
            values[k] = data[:, -1].reshape(grid.shape)
        art.fields[p] = ValueField(p, values, grid)
    return art


def svg_heatmap(values: np.ndarray, grid: SpaceTimeGrid, title: str = "") -> str:
    """Simple 2D heatmap; rows of ``values`` index the first coordinate."""
    if grid.dim != 2:
        raise ValueError("heatmaps are only drawn for 2D grids")
    nx, ny = grid.shape
    cell = max(2, 400 // max(nx, ny))
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin or 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * cell}" '
             f'height="{ny * cell + 20}">',
             f'<text x="2" y="14" font-size="12">{title} [{vmin:.4g}, {vmax:.4g}]</text>']
    for i in range(nx):
        for j in range(ny):
            u = (values[i, j] - vmin) / span
            r, b = int(255 * u), int(255 * (1 - u))
            parts.append(f'<rect x="{i * cell}" y="{20 + (ny - 1 - j) * cell}" width="{cell}" '
                         f'height="{cell}" fill="rgb({r},64,{b})"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)
