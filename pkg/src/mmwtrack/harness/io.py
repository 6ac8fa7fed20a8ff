"""CSV emission and the run manifest.

Nothing time- or host-dependent is written, so two runs with the same config
and seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .. import __version__
from .._kernels import BACKEND
from .config import ExperimentConfig


def fmt(value) -> str:
    """Floats at 9 significant digits; everything else via ``str``."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    return str(value)


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_manifest(out_dir: str | Path, cfg: ExperimentConfig, command: str,
                   files: list[Path], extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "library": "mmwtrack",
        "version": __version__,
        "kernel_backend": BACKEND,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": sorted(Path(f).name for f in files),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
