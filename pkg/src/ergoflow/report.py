"""Markdown tables of Fourier and mesh-spectral ergodicity per map."""

from __future__ import annotations

import csv
import io
import statistics
from typing import Dict, Iterable, List

from .errors import MeshParseError, ValidationError
from .metric import metric_csv_header

COLUMNS = tuple(metric_csv_header().split(","))
DEFAULT_CASES = ("uniform", "gaussian")
MISSING = "\u2014"  # rendered for missing table cells


def parse_metric_csv(text: str) -> List[dict]:
    """Rows of a metric CSV (header required, blank text gives no rows)."""
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(h.strip() for h in header) != COLUMNS:
        raise MeshParseError(f"expected header {','.join(COLUMNS)!r}", line=1)
    rows = []
    for no, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(COLUMNS):
            raise MeshParseError(f"expected {len(COLUMNS)} fields, got {len(rec)}", line=no)
        try:
            rows.append({
                "map": rec[0], "case": rec[1], "agents": int(rec[2]),
                "metric_F": float(rec[3]), "metric_LB": float(rec[4]),
                "K_trunc": int(rec[5]), "horizon": float(rec[6]), "seed": int(rec[7]),
            })
        except ValueError:
            raise MeshParseError(f"bad metric row {','.join(rec)!r}", line=no) from None
    return rows


def _cell(values: List[float]) -> str:
    if not values:
        return MISSING
    med = statistics.median(values)
    s = f"{med:.4g}"
    return s if len(values) == 1 else f"{s} (median of {len(values)})"


def report_tables(rows: Iterable[dict]) -> str:
    """One table per map: rows F and LB, columns case x single/multi agent.

    Several rows for one cell (seeds or duplicates) are summarized by their
    median with the count; absent cells show a dash.
    """
    rows = list(rows)
    if not rows:
        return ""
    keys = set(COLUMNS)
    for r in rows:
        if set(r) != keys:
            raise ValidationError("metric rows do not share the expected schema")
    maps = sorted({r["map"] for r in rows})
    extra = sorted({r["case"] for r in rows} - set(DEFAULT_CASES))
    cases = list(DEFAULT_CASES) + extra
    cols = [(c, team) for c in cases for team in ("single", "multi")]
    out = []
    for m in maps:
        cells: Dict[tuple, Dict[str, List[float]]] = {}
        for r in rows:
            if r["map"] != m:
                continue
            team = "single" if r["agents"] == 1 else "multi"
            d = cells.setdefault((r["case"], team), {"metric_F": [], "metric_LB": []})
            d["metric_F"].append(r["metric_F"])
            d["metric_LB"].append(r["metric_LB"])
        out.append(f"## {m}\n")
        out.append("| metric | " + " | ".join(f"{c} {t}" for c, t in cols) + " |")
        out.append("|---" * (len(cols) + 1) + "|")
        for label, key in (("F", "metric_F"), ("LB", "metric_LB")):
            vals = [_cell(cells.get(col, {}).get(key, [])) for col in cols]
            out.append(f"| {label} | " + " | ".join(vals) + " |")
        out.append("")
    return "\n".join(out)
