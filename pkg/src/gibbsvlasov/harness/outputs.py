"""CSV tables, gnuplot script and JSON manifest for a finished run.

Files are named ``<run_id>-<stage>-<table>.csv``; the manifest is
``<run_id>-manifest.json``.  Floats are written with ``repr`` so identical
numbers give identical bytes, which makes checksums comparable across
reruns.
"""
from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig, serialize_config


class OutputError(OSError):
    """Writing an output file failed; the message names the path."""


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    return value


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_csv(path: Path, header, rows) -> None:
    """RFC 4180: CRLF line ends, minimal quoting, header first."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
            writer.writerow(header)
            writer.writerows([_cell(v) for v in row] for row in rows)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _plot_script(stage: str, files: list[tuple[str, list]]) -> str:
    lines = [
        f"# gnuplot script for stage {stage}; every CSV has a header row",
        'set datafile separator ","',
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        "set grid",
    ]
    for name, header in files:
        stem = name[:-4]
        lines.append(f'set output "{stem}.png"')
        lines.append(f'set title "{stem}"')
        lines.append(f'set xlabel "{header[0]}"')
        numeric = [i + 1 for i in range(1, len(header))]
        parts = [f'"{name}" using 1:{c} with linespoints' for c in numeric[:6]]
        lines.append("plot " + ", \\\n     ".join(parts) if parts else f"# {name}: single column")
    return "\n".join(lines) + "\n"


def emit_outputs(result, config: ExperimentConfig, out_dir=None, wall_clock: float | None = None) -> Path:
    """Write all tables of ``result`` and return the manifest path.

    ``result`` may be ``None`` for an empty run, which yields a manifest
    with no file entries.
    """
    out = Path(out_dir if out_dir is not None else config.run.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}") from exc
    run_id = config.run_id
    stage = config.run.experiment
    tables = list(result.tables) if result is not None else []
    written, entries = [], []
    for table in tables:
        name = f"{run_id}-{stage}-{table.name}.csv"
        write_csv(out / name, table.header, table.rows)
        written.append((name, table.header))
    if written:
        script = out / f"{run_id}-{stage}-plot.gp"
        try:
            script.write_text(_plot_script(stage, written), encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {script}: {exc}") from exc
        names = [n for n, _ in written] + [script.name]
    else:
        names = []
    for name in names:
        p = out / name
        entries.append({"name": name, "sha256": _sha256(p), "bytes": p.stat().st_size})
    manifest = {
        "artifact": "gibbsvlasov",
        "version": __version__,
        "run_id": run_id,
        "experiment": stage,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_clock_seconds": wall_clock,
        "config": serialize_config(config),
        "seeds": result.seeds if result is not None else [],
        "files": entries,
        "checks": result.checks if result is not None else {},
        "metrics": result.metrics if result is not None else {},
        "passed": result.passed if result is not None else True,
    }
    path = out / f"{run_id}-manifest.json"
    try:
        path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path
