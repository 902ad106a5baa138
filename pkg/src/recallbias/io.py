"""CSV ingestion, key=value configuration files and deterministic writers."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Dataset
from .errors import ConfigError, EmptyFile, MissingColumn, NonBinaryValue, DataError


def ingest_csv(path, outcome: str = "y", exposure: str = "zstar",
               covariates: Optional[Sequence[str]] = None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`, keeping row order.

    Outcome and reported exposure must be literal ``0``/``1``.  Without an
    explicit covariate list every other column is a covariate.  Row numbers
    in errors count data rows from 1.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise MissingColumn(f"duplicated column names make roles ambiguous: {', '.join(dupes)}")
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no data rows")
    if covariates is None:
        covariates = [h for h in header if h not in (outcome, exposure)]
    for name in [outcome, exposure, *covariates]:
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in header {header}")
    pos = {h: i for i, h in enumerate(header)}
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"row {r} has {len(row)} fields, expected {len(header)}")

    def binary(name):
        out = np.empty(len(body), dtype=np.int8)
        for r, row in enumerate(body, start=1):
            v = row[pos[name]].strip()
            if v not in ("0", "1"):
                raise NonBinaryValue(name, r, v)
            out[r - 1] = int(v)
        return out

    y = binary(outcome)
    zs = binary(exposure)
    x = np.empty((len(body), len(covariates)))
    for j, name in enumerate(covariates):
        for r, row in enumerate(body, start=1):
            v = row[pos[name]].strip()
            try:
                x[r - 1, j] = float(v)
            except ValueError:
                raise DataError(f"non-numeric value {v!r} in column {name!r} at row {r}") from None
            if not math.isfinite(x[r - 1, j]):
                raise DataError(f"non-finite value {v!r} in column {name!r} at row {r}")
    return Dataset(x, y, zs, tuple(covariates))


def write_dataset_csv(data: Dataset, path, outcome: str = "y", exposure: str = "zstar") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([outcome, exposure, *data.covariate_names])
        for i in range(data.n):
            w.writerow([int(data.y[i]), int(data.z_star[i]), *(_cell(v) for v in data.x[i])])


def _cell(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file.

    Blank lines and ``#`` comments are skipped; keys are normalised to
    lower case with ``-`` read as ``_``.  Errors name the offending line.
    """
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{no}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{no}: key {key!r} given twice")
        out[key] = (value, no)
    return out


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline, no NaN."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_text(text: str, path=None, stream=None) -> None:
    if path is None or str(path) == "-":
        stream.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
