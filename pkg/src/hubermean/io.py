"""Point datasets as CSV and run reports as JSON.

A dataset file starts with a header line ``rmm-v1,<kind>,<k>`` and then has
one point per line: ``k`` reals for euclidean(k), ``k+1`` for sphere(k) and
``k*k`` row-major reals for spd(k).  Reals are written with 17 significant
digits, which makes a read/write round trip exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import DomainError
from .losses import Sample
from .manifolds import ManifoldPoint, ManifoldTag

FORMAT_VERSION = "rmm-v1"
REPORT_SCHEMA = "rmm-report-v1"
SPHERE_NORM_TOL = 1e-6
TIMING_KEY = "timing"


class DatasetFormatError(DomainError):
    """Malformed dataset file or a row that is not a point of the manifold."""


def _row_width(tag: ManifoldTag) -> int:
    return int(np.prod(tag.ambient_shape))


def _parse_header(line: str) -> ManifoldTag:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != 3 or parts[0] != FORMAT_VERSION:
        raise DatasetFormatError(f"expected header '{FORMAT_VERSION},<kind>,<k>', got {line.strip()!r}")
    try:
        return ManifoldTag(parts[1], int(parts[2]))
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"bad manifold in header: {exc}") from exc


def _fix_sphere_row(row: np.ndarray, lineno: int) -> np.ndarray:
    norm = float(np.linalg.norm(row))
    if abs(norm - 1.0) > SPHERE_NORM_TOL:
        raise DatasetFormatError(f"line {lineno}: sphere row has norm {norm!r}, not within 1e-6 of 1")
    # rows already unit to machine precision are kept bit for bit
    if abs(norm - 1.0) > 1e-12:
        row = row / norm
    return row


def parse_dataset(text: str, tag: ManifoldTag | None = None) -> Sample:
    """Parse dataset text; ``tag`` must agree with the header when given."""
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DatasetFormatError("dataset is empty")
    header = _parse_header(lines[0][1])
    if tag is not None and tag != header:
        raise DatasetFormatError(f"dataset holds {header} points, expected {tag}")
    width = _row_width(header)
    rows = []
    for lineno, line in lines[1:]:
        try:
            values = np.array([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from exc
        if values.size != width:
            raise DatasetFormatError(f"line {lineno}: expected {width} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise DatasetFormatError(f"line {lineno}: non-finite value")
        if header.kind == "sphere":
            values = _fix_sphere_row(values, lineno)
        rows.append(values.reshape(header.ambient_shape))
    if not rows:
        raise DatasetFormatError("dataset has a header but no points")
    return Sample(header, np.stack(rows))


def format_dataset(sample: Sample) -> str:
    tag = sample.tag
    out = [f"{FORMAT_VERSION},{tag.kind},{tag.order}"]
    for x in sample.data:
        out.append(",".join(format(float(v), ".17g") for v in np.ravel(x)))
    return "\n".join(out) + "\n"


def read_dataset(path: str | Path, tag: ManifoldTag | None = None) -> Sample:
    return parse_dataset(Path(path).read_text(), tag)


def write_dataset(path: str | Path, sample: Sample) -> None:
    Path(path).write_text(format_dataset(sample))


def read_point(path: str | Path, tag: ManifoldTag | None = None) -> ManifoldPoint:
    """A single-row dataset file read as one point."""
    s = read_dataset(path, tag)
    if s.n != 1:
        raise DatasetFormatError(f"{path}: expected exactly one point, found {s.n}")
    return s[0]


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy values, tuples and points to JSON types."""
    if isinstance(value, ManifoldPoint):
        return {"manifold": str(value.tag), "coords": to_jsonable(value.coords)}
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def make_report(command: str, config: dict, seed: int | None, results: dict, timing: dict | None = None) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "command": command,
        "config": to_jsonable(config),
        "seed": seed,
        "results": to_jsonable(results),
        TIMING_KEY: to_jsonable(timing or {}),
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def load_report(text: str) -> dict:
    report = json.loads(text)
    if not isinstance(report, dict) or report.get("schema") != REPORT_SCHEMA:
        raise DatasetFormatError(f"not a {REPORT_SCHEMA} document")
    return report


def without_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != TIMING_KEY}


def write_csv_columns(path: str | Path, columns: Iterable[str], rows: Iterable[Iterable[Any]]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
