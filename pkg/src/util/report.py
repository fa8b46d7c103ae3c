"""CSV output with a provenance comment line.

Every file starts with ``# config_hash=<hex> checkpoint_id=<id> ...`` followed
by a regular CSV table. Floats are written with 17 significant digits so that
equal runs give byte-identical files.
"""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


def fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    if isinstance(value, np.floating):
        return format(float(value), ".17g")
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def header_line(meta: Dict[str, Any]) -> str:
    return "# " + " ".join(f"{key}={fmt(value) or '-'}" for key, value in meta.items())


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(header_line(meta or {}) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def parse_header(line: str) -> Dict[str, str]:
    meta = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        meta[key] = "" if value == "-" else value
    return meta


def read_csv(path: Path) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        first = f.readline()
        meta = parse_header(first) if first.startswith("#") else {}
        if not first.startswith("#"):
            f.seek(0)
        rows = list(csv.DictReader(f))
    return meta, rows
