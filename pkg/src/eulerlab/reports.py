"""Report rows, CSV/JSON emission and regression against golden reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = ["ReportRow", "close", "at_most", "at_least", "flag", "write_csv", "write_json",
           "write_rows", "load_rows", "regress"]


@dataclass
class ReportRow:
    experiment: str
    criterion: int | None
    quantity: str
    expected: object
    measured: object
    tolerance: object
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.quantity}: measured={_fmt(self.measured)} expected={_fmt(self.expected)} tol={_fmt(self.tolerance)}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def close(exp, crit, quantity, measured, expected, tol) -> ReportRow:
    ok = _finite(measured) and abs(measured - expected) <= tol
    return ReportRow(exp, crit, quantity, expected, measured, tol, bool(ok))


def at_most(exp, crit, quantity, measured, bound) -> ReportRow:
    ok = isinstance(measured, (int, float)) and not math.isnan(measured) and measured <= bound
    return ReportRow(exp, crit, quantity, f"<= {bound:g}", measured, None, bool(ok))


def at_least(exp, crit, quantity, measured, bound) -> ReportRow:
    ok = isinstance(measured, (int, float)) and not math.isnan(measured) and measured >= bound
    return ReportRow(exp, crit, quantity, f">= {bound:g}", measured, None, bool(ok))


def flag(exp, crit, quantity, measured, expected=True) -> ReportRow:
    return ReportRow(exp, crit, quantity, expected, measured, None, bool(measured == expected))


# --- writers -------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


ROW_FIELDS = ["experiment", "criterion", "quantity", "expected", "measured", "tolerance", "passed"]


def write_rows(path, rows: list[ReportRow]) -> None:
    write_csv(path, ROW_FIELDS, [[getattr(r, f) for f in ROW_FIELDS] for r in rows])


def load_rows(path) -> dict:
    """Read a rows CSV into ``{quantity: row dict}`` (values kept as strings)."""
    with open(path, newline="") as fh:
        return {r["quantity"]: r for r in csv.DictReader(fh)}


# --- regression ----------------------------------------------------------------


def _parse(v: str):
    if v in ("True", "False"):
        return v == "True"
    try:
        return float(v)
    except ValueError:
        return v


def regress(report_dir, golden_dir, default_rel: float = 1e-9) -> dict:
    """Compare every ``rows.csv`` under ``golden_dir`` with its counterpart.

    Numeric quantities are compared with the row's own tolerance when it has
    one, else with relative ``default_rel``. Quantities present only in the
    report are listed as ungoldened.
    """
    report_dir, golden_dir = Path(report_dir), Path(golden_dir)
    for d in (report_dir, golden_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
    failures, ungoldened, compared = [], [], 0
    goldens = sorted(golden_dir.rglob("rows.csv"))
    if not goldens:
        raise FileNotFoundError(f"no golden rows.csv under {golden_dir}")
    for gpath in goldens:
        rel = gpath.relative_to(golden_dir)
        rpath = report_dir / rel
        if not rpath.exists():
            failures.append({"file": str(rel), "quantity": None, "reason": "missing report file"})
            continue
        gold, rep = load_rows(gpath), load_rows(rpath)
        for q, grow in gold.items():
            if q not in rep:
                failures.append({"file": str(rel), "quantity": q, "reason": "missing in report"})
                continue
            compared += 1
            gv, rv = _parse(grow["measured"]), _parse(rep[q]["measured"])
            tol = _parse(grow["tolerance"])
            if isinstance(gv, float) and isinstance(rv, float) and not isinstance(gv, bool):
                if math.isnan(gv) and math.isnan(rv):
                    continue
                lim = tol if isinstance(tol, float) and not isinstance(tol, bool) and tol > 0 \
                    else default_rel * max(abs(gv), 1e-300)
                if not abs(rv - gv) <= lim and not (gv == rv):
                    failures.append({"file": str(rel), "quantity": q, "golden": gv, "measured": rv,
                                     "limit": lim, "reason": "drift"})
            elif gv != rv:
                failures.append({"file": str(rel), "quantity": q, "golden": gv, "measured": rv,
                                 "reason": "changed"})
        ungoldened += [{"file": str(rel), "quantity": q} for q in rep if q not in gold]
    return {"compared": compared, "failures": failures, "ungoldened": ungoldened,
            "ok": not failures}
