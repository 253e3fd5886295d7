"""CSV serialization with a fixed float format.

Floats are written with 17 significant digits so round-tripping is exact
and output files are byte-identical across runs and thread counts.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence


def format_value(value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans have no CSV representation here")
    if isinstance(value, (int,)) or (
        hasattr(value, "dtype") and value.dtype.kind in "iu"
    ):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="ascii")
    lines = [line for line in text.split("\n") if line]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
