"""Comma-separated I/O with lossless float formatting."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def write_rows(path_or_buffer, header: Sequence[str], rows: Iterable[Sequence], trailer: str | None = None):
    """Write a header and rows; ``trailer`` goes on a final ``#``-prefixed line."""
    own = isinstance(path_or_buffer, (str, Path))
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        if trailer is not None:
            fh.write(f"# {trailer}\n")
    finally:
        if own:
            fh.close()


def to_string(header, rows, trailer=None) -> str:
    buf = io.StringIO()
    write_rows(buf, header, rows, trailer)
    return buf.getvalue()


def read_rows(path_or_text) -> tuple[list[str], list[dict[str, str]]]:
    """Parse a CSV file (or text), skipping ``#`` comment lines."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = path_or_text
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows
