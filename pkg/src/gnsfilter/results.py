"""CSV and JSON emitters. Every artifact set is written atomically."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .harness import RunResult, detect_steady_state

METRICS_HEADER = ["step", "algorithm", "spatial_mse", "spectral_mae"]
SUMMARY_HEADER = ["alpha", "algorithm", "steady_mse", "iters_to_steady"]
STEADY_HEADER = ["window", "rel_tol", "algorithm", "iters_to_steady", "steady_value", "converged"]


def fmt(value) -> str:
    """Locale-independent, round-trippable cell text."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def software_version() -> str:
    try:
        return importlib_metadata.version("gnsfilter")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def metrics_rows(result: RunResult):
    for label, algo in result.per_algorithm.items():
        mse, mae = algo.spatial_mse, algo.spectral_mae
        for t in range(mse.size):
            yield (t, label, mse[t], mae[t])


def summary_rows(result: RunResult, alpha, window: int = 20, rel_tol: float = 0.05):
    for label, algo in result.per_algorithm.items():
        mean, _ = result.steady_mse(label)
        entry = detect_steady_state(algo.spatial_mse, min(window, result.n_steps), rel_tol)
        yield (alpha, label, mean, entry.iterations_to_steady)


def steady_rows(reports: dict):
    for (window, tol), entries in reports.items():
        for label, e in entries.items():
            yield (window, tol, label, e.iterations_to_steady, e.steady_value, e.converged)


def table1_rows(sweep):
    """Wide layout: one row per algorithm, one column per alpha."""
    alphas = sweep.alphas()
    header = ["algorithm"] + [f"alpha={a:g}" for a in alphas]
    rows = [[label] + [sweep.row(a, label).steady_mse for a in alphas] for label in sweep.labels()]
    return header, rows


def write_artifacts(out_dir, files: dict) -> list[Path]:
    """Write ``{name: text}`` into ``out_dir`` with nothing left behind on failure.

    Files are first written to a scratch directory next to ``out_dir`` and then
    moved into place, so an interrupted run never leaves a partial CSV.
    """
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, text in files.items():
            with open(scratch / name, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        if not out.exists():
            os.replace(scratch, out)
            return [out / name for name in files]
        for name in files:
            os.replace(scratch / name, out / name)
        return [out / name for name in files]
    finally:
        if scratch.exists():
            shutil.rmtree(scratch, ignore_errors=True)
