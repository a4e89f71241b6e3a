"""Descriptive bout statistics, delimited/JSON tables and DOT transition graphs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hypnogram_io import HEALTH_STATUSES, STAGES
from .interventions import CiEstimate, stat_key

TABLE_SCHEMA = "sleepdbn.table/1"
RESULTS_SCHEMA = "sleepdbn.results/1"
# Node width in inches per unit of prevalence (or prevalence difference).
NODE_SCALE = 3.0
MIN_NODE_WIDTH = 0.3
POSITIVE_COLOR = "blue"
NEGATIVE_COLOR = "red"


@dataclass
class BoutStatsRow:
    stage: str
    count_mean: dict = field(default_factory=dict)
    count_sd: dict = field(default_factory=dict)
    duration_mean: dict = field(default_factory=dict)
    duration_sd: dict = field(default_factory=dict)


def _sd(v) -> float:
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def descriptive_bout_stats(subjects) -> list[BoutStatsRow]:
    """Per stage and group: mean (SD) of bouts per night and of per-subject mean duration.

    A subject without bouts of a stage counts 0 bouts and is left out of
    that stage's duration statistics.
    """
    rows = []
    for k, st in enumerate(STAGES):
        row = BoutStatsRow(st)
        for h in HEALTH_STATUSES:
            group = [s for s in subjects if s.health_status == h]
            counts = [int(np.sum(s.stage == k)) for s in group]
            durs = [float(s.duration[s.stage == k].mean()) for s in group if np.any(s.stage == k)]
            row.count_mean[h] = float(np.mean(counts)) if counts else float("nan")
            row.count_sd[h] = _sd(counts)
            row.duration_mean[h] = float(np.mean(durs)) if durs else float("nan")
            row.duration_sd[h] = _sd(durs)
        rows.append(row)
    return rows


def _fmt(x, decimals: int) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.{decimals}f}"


def bout_stats_table(rows: list[BoutStatsRow]) -> list[list[str]]:
    """Descriptive table: stage, characteristic, one ``mean (SD)`` per group, pairs column.

    The significant-pairs column is left as ``-``; no multiple-comparison
    test is run.
    """
    out = [["stage", "characteristic", *HEALTH_STATUSES, "significant_pairs"]]
    for r in rows:
        out.append([r.stage, "Bouts", *(f"{_fmt(r.count_mean[h], 1)} ({_fmt(r.count_sd[h], 1)})" for h in HEALTH_STATUSES), "-"])
        out.append(["", "Duration", *(f"{_fmt(r.duration_mean[h], 1)} ({_fmt(r.duration_sd[h], 1)})" for h in HEALTH_STATUSES), "-"])
    return out


def write_delimited(rows, path=None, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def write_json(doc, path=None) -> str:
    text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


ESTIMATE_COLUMNS = [
    "analysis",
    "condition",
    "reference",
    "statistic",
    "estimate",
    "lo",
    "hi",
    "significant",
    "n_valid",
    "n_replicates",
    "n_samples",
]


def estimate_rows(estimates: dict[str, CiEstimate], analysis: str, condition: str, reference: str = "", n_samples: int = 0):
    for key in estimates:
        ci = estimates[key]
        # Durations are minutes; everything else is a probability.
        dec = 2 if key.startswith("dur") else 4
        yield [
            analysis,
            condition,
            reference,
            key,
            _fmt(ci.estimate, dec),
            _fmt(ci.lo, dec),
            _fmt(ci.hi, dec),
            int(ci.significant),
            ci.n_valid,
            ci.n_replicates,
            n_samples,
        ]


def export_tables(records, path_csv=None, path_json=None, columns=ESTIMATE_COLUMNS):
    """Write row records as a delimited table and a versioned JSON document.

    Empty input yields a header-only table.
    """
    records = [list(r) for r in records]
    text = write_delimited(records, path_csv, header=columns)
    doc = {"schema": TABLE_SCHEMA, "columns": list(columns), "rows": records}
    write_json(doc, path_json)
    return text


# -- graphs ---------------------------------------------------------------


def _label(ci: CiEstimate, decimals: int = 2) -> str:
    return f"{ci.estimate:.{decimals}f}\\n[{ci.lo:.{decimals}f}, {ci.hi:.{decimals}f}]"


def _missing(ci: CiEstimate | None) -> bool:
    return ci is None or not ci.complete or math.isnan(ci.estimate)


def transition_graph(nodes: dict[str, CiEstimate], edges: dict[tuple[str, str], CiEstimate], mode: str, title: str) -> str:
    """DOT digraph of stage prevalences (nodes) and transition probabilities (edges).

    ``mode="expected"`` labels every edge; ``mode="contrast"`` labels only
    significant cells. Sign maps to blue (positive) / red (negative).
    Cells without an estimate are drawn as unlabeled dashed placeholders.
    """
    if mode not in ("expected", "contrast"):
        raise ValueError("mode must be 'expected' or 'contrast'")
    lines = [f'digraph "{title}" {{', f'  label="{title}";', "  node [shape=circle, fixedsize=true];"]
    for st in STAGES:
        ci = nodes.get(st)
        if _missing(ci):
            lines.append(f'  "{st}" [style=dashed, width={MIN_NODE_WIDTH:.2f}];')
            continue
        width = max(MIN_NODE_WIDTH, NODE_SCALE * abs(ci.estimate))
        color = POSITIVE_COLOR if ci.estimate >= 0 else NEGATIVE_COLOR
        attrs = [f"width={width:.2f}", f"color={color}"]
        if mode == "expected" or ci.significant:
            attrs.append(f'xlabel="{_label(ci)}"')
        if ci.significant:
            attrs.append("penwidth=3")
        lines.append(f'  "{st}" [{", ".join(attrs)}];')
    for a in STAGES:
        for b in STAGES:
            if a == b:
                continue
            ci = edges.get((a, b))
            if _missing(ci):
                lines.append(f'  "{a}" -> "{b}" [style=dashed, color=gray];')
                continue
            color = POSITIVE_COLOR if ci.estimate >= 0 else NEGATIVE_COLOR
            attrs = [f"color={color}", f"penwidth={1 + 10 * abs(ci.estimate):.2f}"]
            if mode == "expected" or ci.significant:
                attrs.append(f'label="{_label(ci)}"')
            if ci.significant:
                attrs.append("style=bold")
            lines.append(f'  "{a}" -> "{b}" [{", ".join(attrs)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def lag1_graph(estimates: dict[str, CiEstimate], mode: str, title: str) -> str:
    nodes = {s: estimates.get(stat_key("prev", s)) for s in STAGES}
    edges = {(a, b): estimates.get(stat_key("lag1", a, b)) for a in STAGES for b in STAGES}
    return transition_graph(nodes, edges, mode, title)


def lag2_graphs(estimates: dict[str, CiEstimate], mode: str, title: str) -> dict[str, str]:
    """One graph per starting stage S[t-2]."""
    out = {}
    for c in STAGES:
        nodes = {a: estimates.get(stat_key("lag2node", c, a)) for a in STAGES}
        edges = {(a, b): estimates.get(stat_key("lag2", c, a, b)) for a in STAGES for b in STAGES}
        out[c] = transition_graph(nodes, edges, mode, f"{title} | S[t-2]={c}")
    return out


def export_transition_graph(estimates: dict[str, CiEstimate], mode: str, lag: int, out_dir, prefix: str) -> list[Path]:
    """Write ``<prefix>_lag1.dot`` or five ``<prefix>_lag2_<stage>.dot`` files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if lag == 1:
        p = out_dir / f"{prefix}_lag1.dot"
        p.write_text(lag1_graph(estimates, mode, prefix), encoding="utf-8")
        paths.append(p)
    elif lag == 2:
        for c, text in lag2_graphs(estimates, mode, prefix).items():
            p = out_dir / f"{prefix}_lag2_{c}.dot"
            p.write_text(text, encoding="utf-8")
            paths.append(p)
    else:
        raise ValueError("graphs exist for lag 1 and lag 2 only")
    return paths


def regression_rows(mr) -> list[list[str]]:
    """Regression table for one metric: regressor, coefficient, p-value, band."""
    rows = [[name, _fmt(b, 2), f"{p:.3g}", band] for name, b, p, band in mr.rows()]
    rows.append([f"Model's F({mr.df_model}, {mr.df_resid})", _fmt(mr.f_stat, 2), f"{mr.f_pvalue:.3g}", ""])
    rows.append(["Model's R2_adjusted", _fmt(mr.r2_adjusted, 3), "", ""])
    return rows
