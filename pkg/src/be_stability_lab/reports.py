"""Atomic JSON/CSV emission for reports, measures, spectra and plans."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
CSV_HEADER = f"# be-stability-lab v{SCHEMA_VERSION}"
SWEEP_COLUMNS = ("family", "param", "eps", "w1", "bound", "slack", "sigma_angle", "exponent")


def _clean(obj):
    """Recursively convert numpy scalars/arrays and map non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return write_atomic(path, dumps(obj))


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], header: bool = True) -> str:
    buf = io.StringIO()
    if header:
        buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return write_atomic(path, csv_text(columns, rows))


def measure_rows(m):
    """``(x, V, weight)`` rows of a 1D grid measure."""
    return zip(m.x.tolist(), m.potential.tolist(), m.weights.tolist())


def write_measure_csv(path, m) -> Path:
    return write_csv(path, ("x", "V", "weight"), measure_rows(m))


def write_spectrum_csv(path, result) -> Path:
    """Eigenfunction values, one column per eigenvalue."""
    cols = ["x"] + [f"u{i + 1}" for i in range(len(result.eigenfunctions))]
    data = np.column_stack([result.measure.x] + [u.values for u in result.eigenfunctions])
    return write_csv(path, cols, data.tolist())


def write_plan_csv(path, plan, threshold: float = 0.0) -> Path:
    return write_csv(path, ("source_atom", "target_atom", "mass"), plan.entries(threshold))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
