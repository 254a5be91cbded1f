"""Run bundles: CSV data, JSON metadata and optional plot scripts.

Every file is written to a temporary sibling first and moved into place
with os.replace, so readers never see a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy
from loguru import logger

from . import __version__
from .wigner import WignerGrid

METADATA_FILE = "metadata.json"


def write_atomic(path: Path, text: str) -> None:
    """Write text to path via a temporary file in the same directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(value: Any) -> str:
    """CSV cell text; floats use 17 significant digits so they round-trip."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars, arrays and complex numbers to JSON types."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def _table_plot_script(name: str, columns: Sequence[str]) -> str:
    return f'''"""Plot {name}.csv (generated by ndo-sim)."""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).parent
data = np.genfromtxt(here / "{name}.csv", delimiter=",", names=True, dtype=None, encoding="utf-8")
columns = {list(columns)!r}

fig, ax = plt.subplots()
for column in columns[1:]:
    if np.issubdtype(data[column].dtype, np.number):
        ax.plot(data[columns[0]], data[column], label=column)
ax.set_xlabel(columns[0])
ax.legend()
fig.savefig(here / "{name}.png", dpi=150)
'''


def _grid_plot_script(name: str) -> str:
    return f'''"""Contour plot of {name}.csv (generated by ndo-sim)."""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).parent
raw = np.genfromtxt(here / "{name}.csv", delimiter=",")
x, y, w = raw[0, 1:], raw[1:, 0], raw[1:, 1:]

fig, ax = plt.subplots()
mesh = ax.contourf(x, y, w, levels=40, cmap="RdBu_r")
fig.colorbar(mesh, ax=ax, label="W")
ax.set_xlabel("Re alpha")
ax.set_ylabel("Im alpha")
ax.set_aspect("equal")
fig.savefig(here / "{name}.png", dpi=150)
'''


class ArtifactBundle:
    """Collects the files of one run under a single directory."""

    def __init__(self, root: Path, emit_plots: bool = False) -> None:
        self.root = Path(root)
        self.emit_plots = emit_plots
        self.files: List[str] = []
        self.grids: Dict[str, Dict[str, Any]] = {}
        self.root.mkdir(parents=True, exist_ok=True)

    def _record(self, filename: str) -> None:
        if filename not in self.files:
            self.files.append(filename)

    def add_table(self, name: str, columns: Mapping[str, Sequence[Any]]) -> Path:
        """Write equal-length columns as {name}.csv with a header row."""
        lengths = {len(values) for values in columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table '{name}' has columns of different lengths {sorted(lengths)}")
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(list(columns))
        for row in zip(*columns.values()):
            writer.writerow([format_value(cell) for cell in row])
        path = self.root / f"{name}.csv"
        write_atomic(path, buffer.getvalue())
        self._record(path.name)
        if self.emit_plots:
            self._add_script(name, _table_plot_script(name, list(columns)))
        logger.debug(f"Wrote table {path}")
        return path

    def add_grid(self, name: str, grid: WignerGrid) -> Path:
        """Write a Wigner grid: first row x values, first column y values."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["y\\x"] + [format_value(x) for x in grid.x])
        for y, row in zip(grid.y, grid.values):
            writer.writerow([format_value(y)] + [format_value(v) for v in row])
        path = self.root / f"{name}.csv"
        write_atomic(path, buffer.getvalue())
        self._record(path.name)
        metadata = grid.metadata()
        metadata["peaks"] = [list(peak) for peak in grid.peaks]
        self.grids[name] = metadata
        if self.emit_plots:
            self._add_script(name, _grid_plot_script(name))
        logger.debug(f"Wrote Wigner grid {path}")
        return path

    def add_json(self, name: str, payload: Any) -> Path:
        path = self.root / f"{name}.json"
        write_atomic(path, json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self._record(path.name)
        return path

    def _add_script(self, name: str, text: str) -> None:
        path = self.root / f"plot_{name}.py"
        write_atomic(path, text)
        self._record(path.name)

    def finalize(
        self,
        config: Dict[str, Any],
        summary: Dict[str, Any],
        runtime_seconds: float,
        seeds: Optional[Sequence[int]] = None,
    ) -> Path:
        """Write metadata.json with provenance; returns its path."""
        metadata = {
            "name": config.get("name"),
            "task": config.get("task"),
            "engine": config.get("engine"),
            "damping_convention": config.get("damping_convention"),
            "config": config,
            "seeds": list(seeds) if seeds is not None else None,
            "solver": config.get("solver"),
            "provenance": {
                "ndo_sim": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
                "rng": "numpy Philox, one stream per trajectory seed",
            },
            "files": sorted(self.files),
            "grids": self.grids,
            "summary": summary,
            "runtime_seconds": runtime_seconds,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        path = self.root / METADATA_FILE
        write_atomic(path, json.dumps(to_jsonable(metadata), indent=2, sort_keys=True) + "\n")
        logger.info(f"Bundle written to {self.root} ({len(self.files)} data files)")
        return path
