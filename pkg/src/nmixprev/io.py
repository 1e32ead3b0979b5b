"""Histogram CSV reading/writing and atomic file output."""

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

from .errors import DomainError, EmptyDataError, ParseError
from .nmixture import ReportHistogram

HISTOGRAM_HEADER = ("reports", "offenders")


def parse_histogram(path) -> ReportHistogram:
    """Read a ``reports,offenders`` CSV into a validated histogram.

    Raises
    ------
    ParseError
        Bad header, malformed or duplicate rows (with the line number).
    DomainError
        A ``reports`` value of 0: observed data never contains unreported offenders.
    EmptyDataError
        No rows, or no reported offenders in total.
    """
    text = Path(path).read_text(encoding="utf-8-sig")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != HISTOGRAM_HEADER:
        raise ParseError("expected header 'reports,offenders'", line=1)
    counts = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
        try:
            value, count = int(row[0]), int(row[1])
        except ValueError:
            raise ParseError(f"non-integer field in {row!r}", line=lineno) from None
        if value == 0:
            raise DomainError(f"line {lineno}: reports = 0 cannot be observed (zero-truncated data)")
        if value < 0:
            raise ParseError("reports must be a positive integer", line=lineno)
        if count < 0:
            raise ParseError("offenders must be a non-negative integer", line=lineno)
        if value in counts:
            raise ParseError(f"duplicate reports value {value}", line=lineno)
        counts[value] = count
    if not counts or sum(counts.values()) == 0:
        raise EmptyDataError(f"{path}: histogram has no reported offenders")
    return ReportHistogram(counts)


def histogram_csv(hist) -> str:
    lines = [",".join(HISTOGRAM_HEADER)]
    lines += [f"{i},{k}" for i, k in hist.as_dict().items()]
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_histogram(hist, path):
    atomic_write(path, histogram_csv(hist))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def dumps(doc) -> str:
    """Deterministic JSON; non-finite floats become null."""
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"
