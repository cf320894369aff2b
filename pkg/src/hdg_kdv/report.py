"""CSV output, error-table formatting and threshold checks for experiment reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .verify import ExperimentReport, LevelRecord

ERROR_COLUMNS = ["k", "level", "h", "e_u", "order_u", "e_q", "order_q", "e_p", "order_p"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def _parse(text: str):
    return None if text == "" else float(text)


def write_errors_csv(path, reports) -> None:
    """One row per (k, level); floats written with repr so they parse back exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for rep in reports:
            for r in rep.levels:
                w.writerow(
                    [rep.k, r.level, _num(r.h), _num(r.e_u), _num(r.order_u), _num(r.e_q),
                     _num(r.order_q), _num(r.e_p), _num(r.order_p)]
                )


def read_errors_csv(path) -> list[ExperimentReport]:
    reports: dict[int, ExperimentReport] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            rep = reports.setdefault(k, ExperimentReport(k))
            rec = LevelRecord(
                int(row["level"]), 0, _parse(row["h"]), 0.0,
                _parse(row["e_u"]), _parse(row["e_q"]), _parse(row["e_p"]),
            )
            rec.order_u, rec.order_q, rec.order_p = (_parse(row[c]) for c in ("order_u", "order_q", "order_p"))
            rep.levels.append(rec)
    return list(reports.values())


def write_energy_csv(path, times, norms) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "l2_norm"])
        for t, n in zip(times, norms):
            w.writerow([repr(float(t)), repr(float(n))])


def write_snapshots(out_dir, disc, snapshots, fields=("u", "q", "p")) -> list[Path]:
    """snapshot_<field>.csv with columns (t, x, value) at the element quadrature points."""
    paths = []
    for f in fields:
        path = Path(out_dir) / f"snapshot_{f}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "value"])
            for t, st in snapshots:
                x, v = disc.sample(getattr(st, f))
                for xi, vi in zip(x.ravel(), v.ravel()):
                    w.writerow([repr(float(t)), repr(float(xi)), repr(float(vi))])
        paths.append(path)
    return paths


def read_snapshots(path) -> dict:
    """t -> (x, value) arrays."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(float(row["t"]), []).append((float(row["x"]), float(row["value"])))
    return {t: tuple(np.array(c) for c in zip(*rows)) for t, rows in out.items()}


def _fmt(x, order=False) -> str:
    if x is None:
        return "-"
    return f"{x:.2f}" if order else f"{x:.2e}"


def format_table(reports) -> str:
    """Error table with one block per k: error and order for u, q, p."""
    head = f"{'k':>2} {'level':>5} {'h':>9}  {'e_u':>9} {'order':>5}  {'e_q':>9} {'order':>5}  {'e_p':>9} {'order':>5}"
    lines = [head, "-" * len(head)]
    for rep in reports:
        for r in rep.levels:
            lines.append(
                f"{rep.k:>2} {r.level:>5} {r.h:9.3e}  {_fmt(r.e_u):>9} {_fmt(r.order_u, True):>5}"
                f"  {_fmt(r.e_q):>9} {_fmt(r.order_q, True):>5}  {_fmt(r.e_p):>9} {_fmt(r.order_p, True):>5}"
            )
    return "\n".join(lines)


def convergence_checks(report: ExperimentReport, table: dict | None = None, factor: float = 3.0,
                       k0_band: tuple | None = None) -> list[Check]:
    """Order and magnitude thresholds for one convergence study.

    k >= 1: finest-level orders >= k + 0.8. With ``table``, finest errors must lie
    within ``factor`` of the reference entries. With ``k0_band`` and k = 0, the
    orders of the finest two levels must lie in the band.
    """
    k, fin = report.k, report.finest
    checks = []
    orders = {"u": fin.order_u, "q": fin.order_q, "p": fin.order_p}
    if k >= 1:
        ok = all(o is not None and o >= k + 0.8 for o in orders.values())
        checks.append(Check(f"k={k} finest orders >= {k + 0.8:.1f}", ok,
                            ", ".join(f"{f}:{_fmt(o, True)}" for f, o in orders.items())))
    elif k0_band is not None:
        lo, hi = k0_band
        tail = report.levels[-2:]
        vals = [o for r in tail for o in (r.order_u, r.order_q, r.order_p)]
        ok = all(o is not None and lo <= o <= hi for o in vals)
        checks.append(Check(f"k=0 orders of the finest two levels in [{lo}, {hi}]", ok,
                            ", ".join(_fmt(o, True) for o in vals)))
    if table is not None and k in table:
        ref = table[k]
        errs = (fin.e_u, fin.e_q, fin.e_p)
        ratios = [e / r for e, r in zip(errs, ref)]
        ok = all(1.0 / factor <= q <= factor for q in ratios)
        checks.append(Check(f"k={k} finest errors within x{factor:g} of the reference table", ok,
                            ", ".join(f"{_fmt(e)}/{_fmt(r)}" for e, r in zip(errs, ref))))
    return checks


def write_report(path, config_lines, checks, extra=()) -> None:
    with open(path, "w") as fh:
        fh.write("# configuration\n")
        for line in config_lines:
            fh.write(f"{line}\n")
        if extra:
            fh.write("\n# results\n")
            for line in extra:
                fh.write(f"{line}\n")
        fh.write("\n# thresholds\n")
        for c in checks:
            fh.write(c.line() + "\n")
        if not checks:
            fh.write("(none)\n")


def sig3(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.2e}"
