"""CSV emission for trajectories and experiment reports."""

from __future__ import annotations

import csv
import logging
import os
from typing import Iterable, Sequence

import numpy as np

from pdmpkit.config import config

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Floats at 17 significant digits, booleans as true/false, the rest as str."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{config.CSV_DIGITS}g}"
    return str(value)


def state_columns(d: int) -> list[str]:
    return [f"x_{i + 1}" for i in range(d)] + [f"y_{i + 1}" for i in range(d)]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write a header row and formatted rows; returns the path written."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            n += 1
    logger.debug(f"[csv] Wrote {n} rows to {path}")
    return path


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows of a CSV written by `write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]
