"""Report rows, their CSV/JSON encodings and a summary figure."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

FIELDS = ("kind", "group", "rho", "n", "metric", "value", "stderr", "reps", "seed", "wall_ms")
_FLOAT = {"rho", "value", "stderr"}
_INT = {"n", "reps", "seed", "wall_ms"}


@dataclass(frozen=True)
class ReportRow:
    kind: str
    group: str
    rho: float | None
    n: int | None
    metric: str
    value: float
    stderr: float | None = None
    reps: int | None = None
    seed: int | None = None
    wall_ms: int | None = None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _uncell(name: str, text: str):
    if text == "":
        return None
    if name in _FLOAT:
        return float(text)
    if name in _INT:
        return int(text)
    return text


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_cell(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def from_csv(text: str) -> list[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != FIELDS:
        raise ValueError(f"unexpected header {header}")
    return [ReportRow(*(_uncell(f, c) for f, c in zip(FIELDS, line))) for line in reader if line]


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def to_json(rows) -> str:
    data = [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows]
    return json.dumps({"fields": list(FIELDS), "rows": data}, indent=1) + "\n"


def from_json(text: str) -> list[ReportRow]:
    data = json.loads(text)
    out = []
    for d in data["rows"]:
        vals = {}
        for f in fields(ReportRow):
            v = d.get(f.name)
            if isinstance(v, str) and f.name in _FLOAT:
                v = float(v)
            elif isinstance(v, int) and f.name in _FLOAT:
                v = float(v)
            vals[f.name] = v
        out.append(ReportRow(**vals))
    return out


def render(rows, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(rows)
    if fmt == "json":
        return to_json(rows)
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(rows, path, fmt: str = "csv") -> Path:
    """Write rows to ``path`` as UTF-8 with LF line endings."""
    if not rows:
        raise ValueError("no rows to emit")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render(rows, fmt))
    return path


def parse(text: str, fmt: str) -> list[ReportRow]:
    return from_csv(text) if fmt == "csv" else from_json(text)


# ---------------------------------------------------------------------------
def plot_rows(rows, path) -> Path | None:
    """One panel per metric, value against n with one line per (group, rho).

    Rows without ``n`` are skipped; returns ``None`` when nothing is plottable.
    """
    series: dict[str, dict[tuple, list]] = {}
    for r in rows:
        if r.n is None or r.value is None or not math.isfinite(r.value):
            continue
        key = (r.group, r.rho)
        series.setdefault(r.metric, {}).setdefault(key, []).append((r.n, r.value, r.stderr))
    if not series:
        return None

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    k = len(series)
    cols = min(k, 3)
    nrows = math.ceil(k / cols)
    fig, axes = plt.subplots(nrows, cols, figsize=(4.2 * cols, 3.2 * nrows), squeeze=False)
    for ax, (metric, lines) in zip(axes.flat, series.items()):
        for (group, rho), pts in lines.items():
            pts.sort()
            ns = [p[0] for p in pts]
            vs = [p[1] for p in pts]
            errs = [p[2] or 0.0 for p in pts]
            label = group if rho is None else f"{group}, rho={rho:g}"
            ax.errorbar(ns, vs, yerr=errs if any(errs) else None, marker="o", ms=3,
                        lw=1, capsize=2, label=label)
        ns_all = sorted({p[0] for pts in lines.values() for p in pts})
        if len(ns_all) > 1 and ns_all[0] > 0 and ns_all[-1] / ns_all[0] >= 8:
            ax.set_xscale("log")
        vals = [p[1] for pts in lines.values() for p in pts]
        if vals and min(vals) > 0 and max(vals) / min(vals) > 100:
            ax.set_yscale("log")
        ax.set_title(metric, fontsize=9)
        ax.set_xlabel("n")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    for ax in list(axes.flat)[k:]:
        ax.set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
