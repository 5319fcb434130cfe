# utils/reporting.py
# -*- coding: utf-8 -*-
"""Formatting helpers for command output: progress bars, text tables, CSV files."""

import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)


def create_progress_bar(percentage: float, length: int = 20) -> str:
    """Create a text-based progress bar from a percentage value."""
    if not 0 <= percentage <= 100:
        return f"[{' ' * length}]"

    filled_length = int(length * percentage // 100)
    bar = '█' * filled_length + '░' * (length - filled_length)
    return f"[{bar}]"


def _format_cell(value) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        if value != value:
            return "nan"
        return f"{value:.6g}"
    return str(value)


def format_table(rows: Sequence[Dict], columns: Optional[List[str]] = None) -> str:
    """Render dict rows as a fixed-width text table."""
    if not rows:
        return "(no rows)"
    columns = columns or list(rows[0].keys())
    cells = [[_format_cell(row.get(col)) for col in columns] for row in rows]
    widths = [max(len(col), *(len(r[i]) for r in cells)) for i, col in enumerate(columns)]

    lines = ["  ".join(col.ljust(w) for col, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def write_rows_csv(rows: Iterable[Dict], path: str, columns: Optional[List[str]] = None) -> str:
    """Write dict rows as a plot-ready CSV. Output is byte-stable for identical rows."""
    frame = pd.DataFrame(list(rows), columns=columns)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def training_progress_logger(label: str):
    """Build a Trainer progress callback that logs a bar, the losses and p."""
    def report(step: int, total: int, record: Dict) -> None:
        percentage = 100.0 * step / total if total else 100.0
        loss = record.get("loss")
        p = record.get("p")
        val_mae = record.get("val_mae")
        logger.info(
            f"{label} {create_progress_bar(percentage)} step {step}/{total} "
            f"loss={_format_cell(loss)} p={_format_cell(p)} val_mae={_format_cell(val_mae)}"
        )
    return report
