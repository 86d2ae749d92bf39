"""Per-author threat indicators.

Line-change statistics per file change, author centrality over sliding
windows of the author-file commit network, commit time-of-day profiles on the
24-hour circle, the communication sentiment graph and series co-movement.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from fractions import Fraction
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import networkx as nx
from networkx.algorithms import bipartite

from .errors import ArgumentError, UndefinedCorrelationError
from .ingest import CommitRecord, MessageRecord
from .textmetrics import Lexicon
from .topology import shared_thread_stats
from .windows import Window, covering_windows

DEFAULT_WINDOW = timedelta(days=30)
DEFAULT_STEP = timedelta(days=30)


def _authored(commits: Iterable[CommitRecord], author: str, include_merges: bool):
    for c in commits:
        if c.canonical_author == author and (include_merges or not c.is_merge):
            yield c


# -- line-change statistics --------------------------------------------------

@dataclass(frozen=True)
class AuthorChangeStats:
    author: str
    period: Window
    total_file_changes: int
    avg_additions: float
    avg_deletions: float
    avg_total: float
    std_additions: float
    std_deletions: float
    std_total: float
    empty: bool = False
    std_undefined: bool = False

    COLUMNS = ("author", "period_start", "period_end", "total_file_changes",
               "avg_additions", "avg_deletions", "avg_total",
               "std_additions", "std_deletions", "std_total")

    def row(self) -> list:
        return [self.author, self.period.start.isoformat(), self.period.end.isoformat(),
                self.total_file_changes, self.avg_additions, self.avg_deletions,
                self.avg_total, self.std_additions, self.std_deletions, self.std_total]

    def to_json(self) -> dict:
        out = dict(zip(self.COLUMNS, self.row()))
        out.update(kind="change_stats", empty=self.empty, std_undefined=self.std_undefined)
        return out


def _mean_std(values: Sequence[int]) -> tuple[float, float]:
    """Mean and sample std of integer counts, exact up to the final rounding."""
    n = len(values)
    total = sum(values)
    if n < 2:
        return total / n, 0.0
    squares = sum(v * v for v in values)
    variance = Fraction(n * squares - total * total, n * (n - 1))
    return total / n, math.sqrt(variance)


def author_change_stats(commits: Iterable[CommitRecord], author: str, period: Window,
                        include_merges: bool = False,
                        include_binary: bool = True) -> AuthorChangeStats:
    """Mean and sample standard deviation of lines added, deleted and their
    sum, one observation per file change in the period."""
    adds: list[int] = []
    dels: list[int] = []
    for c in _authored(commits, author, include_merges):
        if c.timestamp not in period:
            continue
        for fc in c.file_changes:
            if fc.binary and not include_binary:
                continue
            adds.append(fc.lines_added)
            dels.append(fc.lines_deleted)
    n = len(adds)
    if n == 0:
        return AuthorChangeStats(author, period, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                                 empty=True, std_undefined=True)
    ma, sa = _mean_std(adds)
    md, sd = _mean_std(dels)
    mt, st = _mean_std([a + d for a, d in zip(adds, dels)])
    return AuthorChangeStats(author, period, n, ma, md, mt, sa, sd, st,
                             std_undefined=n < 2)


@dataclass(frozen=True)
class ChangeSeries:
    """Per-commit total changed lines for one author, in time order."""

    author: str
    points: tuple[tuple[datetime, int], ...]

    def to_json(self) -> dict:
        return {"kind": "change_series", "author": self.author,
                "points": [[ts.isoformat(), v] for ts, v in self.points]}


def change_series(commits: Iterable[CommitRecord], author: str,
                  period: Window | None = None, include_merges: bool = False) -> ChangeSeries:
    pts = []
    for c in _authored(commits, author, include_merges):
        if period is not None and c.timestamp not in period:
            continue
        pts.append((c.timestamp, sum(fc.lines_added + fc.lines_deleted for fc in c.file_changes)))
    pts.sort(key=lambda p: p[0])
    return ChangeSeries(author, tuple(pts))


# -- centrality --------------------------------------------------------------

@dataclass(frozen=True)
class CentralitySeries:
    author: str
    points: tuple[tuple[Window, float], ...]
    mode: str = "degree"

    def __post_init__(self) -> None:
        starts = [w.start for w, _ in self.points]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ArgumentError("centrality windows must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for _, v in self.points):
            raise ArgumentError("centrality values must lie in [0, 1]")

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def to_json(self) -> dict:
        return {"kind": "centrality_series", "author": self.author, "mode": self.mode,
                "points": [{"window_start": w.start.isoformat(),
                            "window_end": w.end.isoformat(), "centrality": v}
                           for w, v in self.points]}


def window_centrality(window_commits: Sequence[CommitRecord], author: str,
                      mode: str = "degree") -> float:
    """Centrality of ``author`` in the author-file graph of one window.

    ``degree``: files the author touched over all files touched.
    ``eigenvector``: eigenvector centrality on the author projection (files
    shared between authors as edge weights), scaled so the top author is 1.
    """
    touched: dict[str, set[str]] = {}
    for c in window_commits:
        touched.setdefault(c.canonical_author, set()).update(fc.path for fc in c.file_changes)
    all_files = set().union(*touched.values()) if touched else set()
    if author not in touched or not all_files:
        return 0.0
    if mode == "degree":
        return len(touched[author]) / len(all_files)
    if mode != "eigenvector":
        raise ArgumentError(f"unknown centrality mode {mode!r}")
    g = nx.Graph()
    authors = sorted(touched)
    g.add_nodes_from((("a", a) for a in authors), bipartite=0)
    g.add_nodes_from((("f", f) for f in sorted(all_files)), bipartite=1)
    g.add_edges_from((("a", a), ("f", f)) for a in authors for f in sorted(touched[a]))
    proj = bipartite.weighted_projected_graph(g, [("a", a) for a in authors])
    if proj.number_of_edges() == 0:
        return 1.0 if len(authors) == 1 else 0.0
    scores = nx.eigenvector_centrality_numpy(proj, weight="weight")
    top = max(abs(v) for v in scores.values())
    return min(1.0, abs(scores[("a", author)]) / top) if top > 0 else 0.0


def centrality_series(commits: Sequence[CommitRecord], author: str,
                      window_length: timedelta = DEFAULT_WINDOW,
                      step: timedelta = DEFAULT_STEP,
                      start: datetime | None = None, end: datetime | None = None,
                      mode: str = "degree", include_merges: bool = False) -> CentralitySeries:
    if step <= timedelta(0) or window_length < step:
        raise ArgumentError("centrality windows need window_length >= step > 0")
    pool = sorted((c for c in commits if include_merges or not c.is_merge),
                  key=lambda c: c.timestamp)
    windows = covering_windows([c.timestamp for c in pool], window_length, step, start, end)
    stamps = [c.timestamp for c in pool]
    points = []
    for w in windows:
        lo = bisect.bisect_left(stamps, w.start)
        hi = bisect.bisect_left(stamps, w.end)
        if lo == hi:
            continue
        points.append((w, window_centrality(pool[lo:hi], author, mode)))
    return CentralitySeries(author, tuple(points), mode)


# -- time of day -------------------------------------------------------------

def hour_of(ts: datetime) -> float:
    """Fractional hour in the timestamp's own recorded offset."""
    return ts.hour + ts.minute / 60 + ts.second / 3600


def arc_distance(h1: float, h2: float) -> float:
    d = abs(h1 - h2) % 24.0
    return min(d, 24.0 - d)


def circular_stats(hours: Sequence[float]) -> tuple[float, float]:
    """Circular mean hour in [0, 24) and circular standard deviation in hours."""
    if not hours:
        return 0.0, 0.0
    angles = [2 * math.pi * h / 24 for h in hours]
    c = math.fsum(math.cos(a) for a in angles) / len(angles)
    s = math.fsum(math.sin(a) for a in angles) / len(angles)
    r = min(1.0, math.hypot(c, s))
    mean = (math.atan2(s, c) % (2 * math.pi)) * 24 / (2 * math.pi)
    if math.isclose(mean, 24.0, abs_tol=1e-9):
        mean = 0.0
    std = math.sqrt(-2 * math.log(r)) * 24 / (2 * math.pi) if r > 0 else math.inf
    return mean, std


@dataclass(frozen=True)
class HourProfile:
    author: str
    histogram: tuple[int, ...]
    circular_mean_hour: float
    circular_std_hours: float
    anomalous_commits: tuple[tuple[str, float], ...]
    points: tuple[tuple[str, datetime, float], ...] = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {
            "kind": "hour_profile",
            "author": self.author,
            "histogram": list(self.histogram),
            "circular_mean_hour": self.circular_mean_hour,
            "circular_std_hours": self.circular_std_hours,
            "anomalous_commits": [[cid, h] for cid, h in self.anomalous_commits],
            "points": [[cid, ts.isoformat(), h] for cid, ts, h in self.points],
        }


def hour_of_day_profile(commits: Iterable[CommitRecord], author: str,
                        include_merges: bool = False, n_sigma: float = 2.0) -> HourProfile:
    mine = sorted(_authored(commits, author, include_merges), key=lambda c: c.timestamp)
    points = tuple((c.commit_id, c.timestamp, hour_of(c.timestamp)) for c in mine)
    histogram = [0] * 24
    for _, _, h in points:
        histogram[int(h) % 24] += 1
    mean, std = circular_stats([h for _, _, h in points])
    anomalies: tuple[tuple[str, float], ...] = ()
    if len(points) >= 3:
        anomalies = tuple((cid, h) for cid, _, h in points
                          if arc_distance(h, mean) > n_sigma * std)
    return HourProfile(author, tuple(histogram), mean, std, anomalies, points)


# -- communication graph -----------------------------------------------------

@dataclass(frozen=True)
class CommGraph:
    nodes: frozenset[str]
    edges: dict[tuple[str, str], tuple[int, float]]

    def to_json(self) -> dict:
        return {"kind": "comm_graph", "nodes": sorted(self.nodes),
                "edges": [{"source": a, "target": b, "message_count": n, "mean_sentiment": s}
                          for (a, b), (n, s) in sorted(self.edges.items())]}

    def ego(self, author: str) -> "CommGraph":
        edges = {k: v for k, v in self.edges.items() if author in k}
        nodes = {author} | {x for k in edges for x in k}
        return CommGraph(frozenset(nodes & self.nodes), edges)


def communication_graph(messages: Iterable[MessageRecord], lexicon: Lexicon | None = None,
                        window: Window | None = None) -> CommGraph:
    selected = [m for m in messages if window is None or m.timestamp in window]
    stats = shared_thread_stats(selected, lexicon)
    return CommGraph(frozenset(m.canonical_author for m in selected),
                     {rel: (st.messages, st.mean_sentiment) for rel, st in stats.items()})


# -- co-movement -------------------------------------------------------------

def correlate_series(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of two aligned series."""
    if len(x) != len(y):
        raise ArgumentError("series must be aligned on identical windows")
    n = len(x)
    if n < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


# -- delimited output --------------------------------------------------------

INDICATOR_CSV_COLUMNS = ("window_start", "window_end", "author", "metric", "value")


def indicator_rows(obj) -> list[tuple]:
    """Long-format rows (window_start, window_end, author, metric, value)."""
    rows: list[tuple] = []
    if isinstance(obj, AuthorChangeStats):
        for name, value in zip(AuthorChangeStats.COLUMNS[3:], obj.row()[3:]):
            rows.append((obj.period.start.isoformat(), obj.period.end.isoformat(),
                         obj.author, name, value))
    elif isinstance(obj, CentralitySeries):
        for w, v in obj.points:
            rows.append((w.start.isoformat(), w.end.isoformat(), obj.author,
                         f"{obj.mode}_centrality", v))
    elif isinstance(obj, HourProfile):
        for hour, count in enumerate(obj.histogram):
            rows.append(("", "", obj.author, f"commits_hour_{hour:02d}", count))
        rows.append(("", "", obj.author, "circular_mean_hour", obj.circular_mean_hour))
        rows.append(("", "", obj.author, "circular_std_hours", obj.circular_std_hours))
        rows.append(("", "", obj.author, "anomalous_commit_count", len(obj.anomalous_commits)))
    elif isinstance(obj, ChangeSeries):
        for ts, v in obj.points:
            rows.append((ts.isoformat(), "", obj.author, "commit_total_changes", v))
    else:
        raise ArgumentError(f"no indicator rows for {type(obj).__name__}")
    return rows


def indicators_csv(objs: Iterable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDICATOR_CSV_COLUMNS)
    for obj in objs:
        writer.writerows(indicator_rows(obj))
    return buf.getvalue()
