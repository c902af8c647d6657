"""Plain-text readers and writers for datasets, tables and metadata sidecars.

Floats are written with 17 significant digits so every file reads back to the
same doubles, and identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from .detection import FringeDataset

PathLike = Union[str, Path]
META_SUFFIX = ".meta"


def fmt(value: Any) -> str:
    """Canonical text for one table cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def parse_cell(text: str) -> Any:
    """Inverse of :func:`fmt` for numbers; other text comes back unchanged."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


# -- generic tables ----------------------------------------------------------------


def table_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells for {len(header)} columns")
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.write_text(table_text(header, rows))
    return path


def read_table(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, newline="") as fh:
        return [{k: parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- metadata sidecars --------------------------------------------------------------


def _flatten(d: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def metadata_text(meta: Dict[str, Any]) -> str:
    flat = _flatten(meta)
    lines = [f"{k} = {json.dumps(_jsonable(flat[k]))}" for k in sorted(flat)]
    return "\n".join(lines) + "\n"


def parse_metadata(text: str) -> Dict[str, Any]:
    """Nested dict from ``key = json`` lines; dotted keys become sub-dicts."""
    out: Dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, raw = line.partition(" = ")
        if not sep:
            raise ValueError(f"metadata line {n}: expected 'key = value'")
        node = out
        *parents, leaf = key.strip().split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = json.loads(raw)
    return out


# -- fringe datasets ----------------------------------------------------------------


def _dt_us(dt: float) -> float:
    # rounding below a femtosecond makes seconds -> microseconds -> seconds idempotent
    return round(float(dt) * 1e6, 9)


def dataset_text(ds: FringeDataset) -> str:
    names = list(ds.channels)
    header = ["dt_us", "trials"] + [f"ch_{n}" for n in names]
    rows = [
        [_dt_us(ds.dt[i]), int(ds.trials[i])] + [int(ds.channels[n][i]) for n in names] for i in range(len(ds))
    ]
    return table_text(header, rows)


def write_dataset(path: PathLike, ds: FringeDataset) -> Path:
    """CSV plus a ``.meta`` sidecar holding the configuration and seed."""
    path = Path(path)
    path.write_text(dataset_text(ds))
    Path(str(path) + META_SUFFIX).write_text(metadata_text(ds.metadata))
    return path


def read_dataset(path: PathLike) -> FringeDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["dt_us", "trials"] or not all(h.startswith("ch_") for h in header[2:]):
            raise ValueError(f"{path}: header must be dt_us,trials,ch_<name>,...")
        rows = [r for r in reader if r]
    cols = list(zip(*rows)) if rows else [()] * len(header)
    dt = np.array([float(v) for v in cols[0]]) * 1e-6
    trials = np.array([int(v) for v in cols[1]], dtype=np.int64)
    channels = {h[3:]: np.array([int(v) for v in c], dtype=np.int64) for h, c in zip(header[2:], cols[2:])}
    meta_path = Path(str(path) + META_SUFFIX)
    meta = parse_metadata(meta_path.read_text()) if meta_path.exists() else {}
    return FringeDataset(dt, trials, channels, meta)

