"""Rendering of results to CSV, JSON and SVG files.

SVG output is made reproducible by pinning the SVG hash salt, dropping the
date metadata and emitting text as ``<text>`` elements rather than glyph
paths. Plotted artists carry a ``gid`` so their elements can be located in
the written document.
"""

from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Sequence

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.dates import date2num
from matplotlib.figure import Figure

from .cluster import ClusterReport
from .errors import UsageError
from .indicators import (AuthorChangeStats, CentralitySeries, ChangeSeries, CommGraph,
                         HourProfile, indicators_csv)
from .mapek import DetectionRun, ThreatReport, WorkOrder

FORMATS = ("csv", "json", "svg")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
_RC = {"svg.hashsalt": "sttwatch", "svg.fonttype": "none", "path.simplify": False,
       "font.family": "DejaVu Sans", "axes.prop_cycle": matplotlib.cycler(color=PALETTE)}

WORK_ORDER_COLUMNS = ("rank", "file", "score", "vulnerability_classes", "evidence_count",
                      "downstream_count")
COMM_EDGE_COLUMNS = ("source", "target", "message_count", "mean_sentiment")


def _items(obj) -> list:
    return list(obj) if isinstance(obj, (list, tuple)) else [obj]


def _same_kind(items: list, kinds: tuple[type, ...]) -> bool:
    return bool(items) and all(isinstance(i, kinds) for i in items)


# -- delimited ---------------------------------------------------------------

def _csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def work_orders_csv(orders: Sequence[WorkOrder]) -> str:
    return _csv([(i + 1, o.file, o.score, ";".join(sorted(o.vulnerability_classes)),
                  len(o.evidence), len(o.trace.downstream)) for i, o in enumerate(orders)],
                WORK_ORDER_COLUMNS)


def comm_graph_csv(graph: CommGraph) -> str:
    return _csv([(a, b, n, s) for (a, b), (n, s) in sorted(graph.edges.items())],
                COMM_EDGE_COLUMNS)


def to_csv(obj) -> str:
    items = _items(obj)
    if not items or _same_kind(items, (AuthorChangeStats, CentralitySeries, ChangeSeries,
                                       HourProfile)):
        return indicators_csv(items)
    if len(items) == 1:
        one = items[0]
        if isinstance(one, ClusterReport):
            return one.timeline_csv()
        if isinstance(one, CommGraph):
            return comm_graph_csv(one)
        if isinstance(one, ThreatReport):
            return work_orders_csv(one.work_orders)
        if isinstance(one, DetectionRun):
            return work_orders_csv(one.ranking())
    raise UsageError(f"no CSV layout for {type(items[0]).__name__}")


def to_json_text(obj) -> str:
    items = _items(obj)
    for i in items:
        if not hasattr(i, "to_json"):
            raise UsageError(f"no JSON layout for {type(i).__name__}")
    doc: Any = items[0].to_json() if not isinstance(obj, (list, tuple)) \
        else {"items": [i.to_json() for i in items]}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- figures -----------------------------------------------------------------

def _figure(width: float = 8.0, height: float = 4.5):
    fig = Figure(figsize=(width, height))
    FigureCanvasSVG(fig)
    return fig, fig.add_subplot()


def _date_axis(ax) -> None:
    locator = matplotlib.dates.AutoDateLocator()
    ax.xaxis.set_major_locator(locator)
    ax.xaxis.set_major_formatter(matplotlib.dates.ConciseDateFormatter(locator))


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "-" for ch in text).strip("-") or "x"


def _change_scatter(series: list[ChangeSeries]) -> Figure:
    fig, ax = _figure()
    for i, s in enumerate(series):
        ax.scatter([date2num(ts) for ts, _ in s.points], [v for _, v in s.points], s=10,
                   color=PALETTE[i % len(PALETTE)], label=s.author,
                   gid=f"changes-{_slug(s.author)}")
    ax.set_yscale("symlog")
    ax.set_ylabel("lines changed per commit")
    _date_axis(ax)
    ax.legend(loc="upper left")
    return fig


def _hour_scatter(profiles: list[HourProfile]) -> Figure:
    fig, ax = _figure()
    for i, p in enumerate(profiles):
        ax.scatter([date2num(ts) for _, ts, _ in p.points], [h for _, _, h in p.points], s=10,
                   color=PALETTE[i % len(PALETTE)], label=p.author,
                   gid=f"hours-{_slug(p.author)}")
    ax.set_ylim(0, 24)
    ax.set_yticks(range(0, 25, 3))
    ax.set_ylabel("hour of day (UTC)")
    _date_axis(ax)
    ax.legend(loc="upper left")
    return fig


def _centrality_line(series: list[CentralitySeries]) -> Figure:
    fig, ax = _figure()
    for i, s in enumerate(series):
        ax.plot([date2num(w.start) for w, _ in s.points], s.values,
                color=PALETTE[i % len(PALETTE)], label=s.author,
                gid=f"centrality-{_slug(s.author)}")
    ax.set_ylim(0, 1)
    ax.set_ylabel(f"{series[0].mode} centrality")
    _date_axis(ax)
    ax.legend(loc="upper left")
    return fig


def _comm_graph(graph: CommGraph) -> Figure:
    fig, ax = _figure(7.0, 7.0)
    nodes = sorted(graph.nodes)
    n = len(nodes)
    pos = {v: (math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n))
           for i, v in enumerate(nodes)}
    cmap = matplotlib.colormaps["RdYlGn"]
    heaviest = max((c for c, _ in graph.edges.values()), default=1) or 1
    for (a, b), (count, mean_sent) in sorted(graph.edges.items()):
        (x1, y1), (x2, y2) = pos[a], pos[b]
        ax.plot([x1, x2], [y1, y2], color=cmap((mean_sent + 1) / 2),
                linewidth=0.5 + 3.5 * count / heaviest, gid=f"edge-{_slug(a)}--{_slug(b)}")
        ax.text((x1 + x2) / 2, (y1 + y2) / 2, f"{count} / {mean_sent:+.2f}", fontsize=7,
                ha="center", va="center")
    if nodes:
        ax.scatter([pos[v][0] for v in nodes], [pos[v][1] for v in nodes], s=120,
                   color="#cccccc", edgecolors="#333333", zorder=3, gid="nodes")
    for v in nodes:
        ax.text(pos[v][0] * 1.12, pos[v][1] * 1.12, v, fontsize=8, ha="center", va="center")
    ax.set_xlim(-1.4, 1.4)
    ax.set_ylim(-1.4, 1.4)
    ax.set_aspect("equal")
    ax.axis("off")
    return fig


def _cluster_timeline(report: ClusterReport) -> Figure:
    fig, ax = _figure()
    colors = [PALETTE[lab % len(PALETTE)] for _, lab, _ in report.timeline]
    ax.scatter([date2num(ts) for ts, _, _ in report.timeline],
               [p for _, _, p in report.timeline], c=colors, s=14, gid="timeline")
    ax.axhline(0.0, color="#888888", linewidth=0.5)
    ax.set_ylim(-1.05, 1.05)
    ax.set_ylabel("message polarity")
    ax.set_title(f"{report.account}: k={report.chosen_k}")
    _date_axis(ax)
    return fig


def figure_for(obj) -> Figure:
    items = _items(obj)
    if _same_kind(items, (ChangeSeries,)):
        return _change_scatter(items)
    if _same_kind(items, (HourProfile,)):
        return _hour_scatter(items)
    if _same_kind(items, (CentralitySeries,)):
        return _centrality_line(items)
    if len(items) == 1 and isinstance(items[0], CommGraph):
        return _comm_graph(items[0])
    if len(items) == 1 and isinstance(items[0], ClusterReport):
        return _cluster_timeline(items[0])
    kind = type(items[0]).__name__ if items else "empty input"
    raise UsageError(f"no SVG figure for {kind}")


def to_svg(obj) -> str:
    with matplotlib.rc_context(_RC):
        fig = figure_for(obj)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def render(obj, fmt: str) -> str:
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    return {"csv": to_csv, "json": to_json_text, "svg": to_svg}[fmt](obj)


def render_report(obj, fmt: str, out_path: str | Path) -> Path:
    """Render ``obj`` as ``fmt`` and write it to ``out_path``."""
    text = render(obj, fmt)
    path = Path(out_path)
    path.write_text(text, encoding="utf-8")
    return path
