"""Tabular exports: CSV with round-trip precision and a JSON mirror with metadata."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constant_vol import ConstantVolSolution, inventory_trajectory
from .errors import ValidationError


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def as_records(self) -> list[dict]:
        return [dict(zip(self.columns, (_plain(v) for v in row))) for row in self.rows]


@dataclass
class ReportBundle:
    tables: dict[str, Table]
    summary: dict
    metadata: dict
    text: str = ""


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def format_cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g") if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def write_csv(table: Table, path: str | Path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(table))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None
    return path


def _json_safe(v):
    v = _plain(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_bundle(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_csv(t, out / name) for name, t in bundle.tables.items()]
    doc = {
        "metadata": bundle.metadata,
        "summary": bundle.summary,
        "tables": {name: t.as_records() for name, t in bundle.tables.items()},
    }
    report = out / "report.json"
    with open(report, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return written + [report]


def trading_curve_table(sol: ConstantVolSolution, grid) -> Table:
    curve = inventory_trajectory(sol, grid)
    N = curve.rates.shape[1]
    table = Table(["t", "X"] + [f"theta_{n + 1}" for n in range(N)])
    for i, t in enumerate(curve.grid):
        table.rows.append([float(t), float(curve.inventory[i])] + [float(x) for x in curve.rates[i]])
    return table


def emit_trading_curve(sol: ConstantVolSolution, grid, path) -> Path:
    """CSV with columns ``t, X, theta_1..theta_N`` for plotting."""
    return write_csv(trading_curve_table(sol, grid), path)


def frontier_table(points) -> Table:
    if len(points) < 2:
        raise ValidationError("a frontier needs at least two points")
    pts = sorted(points, key=lambda p: p.lam)
    table = Table(["lambda", "std_gl", "mean_gl", "stderr_gl", "within_tolerance"])
    prev = None
    for p in pts:
        # non-increasing mean up to two combined standard errors
        ok = prev is None or p.mean_gl <= prev.mean_gl + 2.0 * math.hypot(p.stderr, prev.stderr)
        table.rows.append([p.lam, p.std_gl, p.mean_gl, p.stderr, bool(ok)])
        prev = p
    return table


def emit_frontier(points, path) -> Path:
    return write_csv(frontier_table(points), path)


def text_table(title: str, columns: list[str], rows: list[list]) -> str:
    """Human-readable table with two-decimal rounding."""
    def cell(v):
        v = _plain(v)
        if isinstance(v, float):
            return f"{v:.2f}" if abs(v) >= 0.005 or v == 0 else f"{v:.2e}"
        return str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(c), *(len(r[i]) for r in body)) for i, c in enumerate(columns)]
    lines = [title, "  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines)
