"""metrics.csv / timings.csv writers and a dependency-free SVG bar chart."""

import csv
import math
import os
from xml.sax.saxutils import escape

from .errors import ContractError, NumericError

LEAD = ["run_id", "strategy", "stage", "modality", "epoch", "split"]
LOSSES = ["cls", "con", "com", "mi_nll", "total", "alpha_con", "alpha_com", "xi_con", "xi_com"]
TAIL = ["fused_acc", "macro_f1"]
TIMING_COLUMNS = ["run_id", "stage", "modality", "seconds"]


def columns(modalities):
    """Fixed column order; one accuracy column per modality in dataset order."""
    return LEAD + LOSSES + [f"acc_{m}" for m in modalities] + TAIL


def format_cell(key, value):
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        raise ContractError(f"metrics cell {key!r} is a bool")
    if isinstance(value, (int, str)):
        return str(value)
    v = float(value)
    if not math.isfinite(v):
        raise NumericError(f"metrics cell {key!r} is not finite: {v!r}")
    return repr(v)


def format_rows(rows, modalities):
    cols = columns(modalities)
    out = [cols]
    for row in rows:
        extra = set(row) - set(cols)
        if extra:
            raise ContractError(f"metrics row has unknown column(s) {sorted(extra)}")
        out.append([format_cell(c, row.get(c)) for c in cols])
    return out


def write_csv(path, table):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(table)


def write_metrics(path, rows, modalities):
    write_csv(path, format_rows(rows, modalities))


def write_timings(path, timings):
    table = [TIMING_COLUMNS]
    for t in timings:
        table.append([t["run_id"], t["stage"], t["modality"], f"{t['seconds']:.3f}"])
    write_csv(path, table)


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def final_rows(run_id, strategy, result, modalities, stage="final"):
    """One metrics row holding a run's held-out test evaluation."""
    row = {"run_id": run_id, "strategy": strategy, "stage": stage, "modality": "all", "epoch": "", "split": "test"}
    for m in modalities:
        if m in result["unimodal"]:
            row[f"acc_{m}"] = result["unimodal"][m]
    row["fused_acc"] = result["fused_acc"]
    row["macro_f1"] = result["macro_f1"]
    return [row]


# ---------------------------------------------------------------------------
# SVG

PALETTE = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"]


def bar_chart_svg(groups, series, values, title="", ylabel="accuracy", width=640, height=360):
    """Grouped bar chart as SVG text.

    ``values[g][s]`` is the bar for group ``g`` and series ``s``; values are
    drawn on a fixed [0, 1] axis.
    """
    if len(values) != len(groups) or any(len(v) != len(series) for v in values):
        raise ContractError("bar_chart_svg: values must be len(groups) x len(series)")
    left, right, top, bottom = 56, 16, 36, 56
    pw, ph = width - left - right, height - top - bottom
    gw = pw / max(len(groups), 1)
    bw = gw * 0.8 / max(len(series), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for k in range(6):
        v = k / 5
        y = top + ph * (1 - v)
        parts.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.1f}</text>')
    parts.append(
        f'<text x="14" y="{top + ph / 2:.1f}" transform="rotate(-90 14 {top + ph / 2:.1f})" '
        f'text-anchor="middle">{escape(ylabel)}</text>'
    )
    for gi, g in enumerate(groups):
        x0 = left + gi * gw + gw * 0.1
        for si in range(len(series)):
            v = float(values[gi][si])
            if not math.isfinite(v):
                raise NumericError(f"bar_chart_svg: non-finite value for {g!r}")
            v = min(max(v, 0.0), 1.0)
            h = ph * v
            x = x0 + si * bw
            parts.append(
                f'<rect x="{x:.1f}" y="{top + ph - h:.1f}" width="{bw * 0.95:.1f}" height="{h:.1f}" '
                f'fill="{PALETTE[si % len(PALETTE)]}"><title>{escape(f"{g} {series[si]}: {v:.4f}")}</title></rect>'
            )
        parts.append(f'<text x="{left + gi * gw + gw / 2:.1f}" y="{top + ph + 18}" text-anchor="middle">{escape(g)}</text>')
    lx = left
    for si, s in enumerate(series):
        parts.append(f'<rect x="{lx}" y="{height - 22}" width="12" height="12" fill="{PALETTE[si % len(PALETTE)]}"/>')
        parts.append(f'<text x="{lx + 16}" y="{height - 12}">{escape(s)}</text>')
        lx += 24 + 8 * len(s)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
