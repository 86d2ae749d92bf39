"""Time-windowed socio-technical topology snapshots.

A :class:`Snapshot` holds, for one window, the files and their dependency
edges, the active authors, the author-author relations weighted by
communication parameters, and the author-file maintainership weighted by
activity counts. Comparing two snapshots yields a :class:`TopologyDelta`;
the relation and influence filters turn a delta into candidate files.

Dependency edges ``(s, t)`` mean *s depends on t*: ``t`` is upstream of
``s`` and ``s`` is downstream of ``t``.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import ArgumentError, ConfigError, NotFoundError, SchemaError
from .ingest import CommitRecord, MessageRecord
from .textmetrics import Lexicon, sentiment
from .windows import Window

RELATION_PARAMETERS = ("message_count", "mean_sentiment")
ACTIVITIES = ("additions", "deletions", "file_changes")

Relation = tuple[str, str]  # sorted author pair
Maintainer = tuple[str, str]  # (author, file)
Edge = tuple[str, str]


def relation(a: str, b: str) -> Relation:
    if a == b:
        raise ArgumentError(f"relation needs two distinct authors, got {a!r} twice")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class Snapshot:
    window: Window
    files: frozenset[str] = frozenset()
    dependencies: frozenset[Edge] = frozenset()
    authors: frozenset[str] = frozenset()
    relations: frozenset[Relation] = frozenset()
    parameters: tuple[str, ...] = RELATION_PARAMETERS
    weights: Mapping[Relation, tuple[float, ...]] = field(default_factory=dict)
    maintainers: frozenset[Maintainer] = frozenset()
    activities: tuple[str, ...] = ACTIVITIES
    influence: Mapping[Maintainer, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for a, b in self.relations:
            if a == b or a not in self.authors or b not in self.authors:
                raise SchemaError(f"relation {(a, b)} not drawn from distinct authors")
        if set(self.weights) != set(self.relations):
            raise SchemaError("weights must be defined exactly on relations")
        if set(self.influence) != set(self.maintainers):
            raise SchemaError("influence must be defined exactly on maintainers")
        for a, s in self.maintainers:
            if a not in self.authors or s not in self.files:
                raise SchemaError(f"maintainer pair {(a, s)} outside authors x files")
        for s, t in self.dependencies:
            if s not in self.files or t not in self.files:
                raise SchemaError(f"dependency {(s, t)} outside files")
        if any(len(w) != len(self.parameters) for w in self.weights.values()):
            raise SchemaError("weight vector length differs from parameter list")
        if any(len(v) != len(self.activities) for v in self.influence.values()):
            raise SchemaError("influence vector length differs from activity list")

    @property
    def is_empty(self) -> bool:
        return not (self.files or self.authors or self.dependencies)

    def files_of(self, author: str) -> set[str]:
        return {s for a, s in self.maintainers if a == author}

    def to_json(self) -> dict:
        return {
            "window": self.window.to_json(),
            "files": sorted(self.files),
            "dependencies": sorted(list(e) for e in self.dependencies),
            "authors": sorted(self.authors),
            "relations": sorted(list(r) for r in self.relations),
            "parameters": list(self.parameters),
            "weights": [[a, b, list(w)] for (a, b), w in sorted(self.weights.items())],
            "maintainers": sorted(list(m) for m in self.maintainers),
            "activities": list(self.activities),
            "influence": [[a, s, list(v)] for (a, s), v in sorted(self.influence.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Snapshot":
        return cls(
            window=Window.from_json(obj["window"]),
            files=frozenset(obj["files"]),
            dependencies=frozenset(tuple(e) for e in obj["dependencies"]),
            authors=frozenset(obj["authors"]),
            relations=frozenset(tuple(r) for r in obj["relations"]),
            parameters=tuple(obj["parameters"]),
            weights={(a, b): tuple(w) for a, b, w in obj["weights"]},
            maintainers=frozenset(tuple(m) for m in obj["maintainers"]),
            activities=tuple(obj["activities"]),
            influence={(a, s): tuple(v) for a, s, v in obj["influence"]},
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- building ----------------------------------------------------------------

def load_dependency_edges(source: str | Path | IO[str]) -> list[Edge]:
    """Read ``src -> dst`` lines (``#`` comments allowed)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        src, sep, dst = line.partition("->")
        src, dst = src.strip(), dst.strip()
        if not sep or not src or not dst:
            raise ConfigError(f"dependency line {lineno}: expected 'src -> dst'")
        edges.append((src, dst))
    return edges


def dumps_dependency_edges(edges: Iterable[Edge]) -> str:
    return "".join(f"{s} -> {t}\n" for s, t in edges)


@dataclass(frozen=True)
class SharedThreadStats:
    """Per-pair aggregates over threads in which both authors posted."""

    pair_messages: int  # same-thread (m1 by a, m2 by b) message pairs
    messages: int  # messages either author posted in shared threads
    mean_sentiment: float


def shared_thread_stats(messages: Sequence[MessageRecord],
                        lexicon: Lexicon | None = None,
                        polarity_cache: dict[str, float] | None = None
                        ) -> dict[Relation, SharedThreadStats]:
    cache = polarity_cache if polarity_cache is not None else {}
    by_thread: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for m in messages:
        pol = cache.get(m.message_id)
        if pol is None:
            pol = sentiment(m.body, lexicon)[0]
            cache[m.message_id] = pol
        by_thread[m.thread_id][m.canonical_author].append(pol)

    pair_messages: dict[Relation, int] = defaultdict(int)
    polarities: dict[Relation, list[float]] = defaultdict(list)
    for thread in by_thread.values():
        for a, b in combinations(sorted(thread), 2):
            rel = (a, b)
            pair_messages[rel] += len(thread[a]) * len(thread[b])
            polarities[rel].extend(thread[a])
            polarities[rel].extend(thread[b])
    return {
        rel: SharedThreadStats(pair_messages[rel], len(pols), math.fsum(pols) / len(pols))
        for rel, pols in polarities.items()
    }


def build_snapshot(commits: Iterable[CommitRecord], messages: Iterable[MessageRecord],
                   dependency_edges: Iterable[Edge], window: Window,
                   lexicon: Lexicon | None = None, include_merges: bool = False,
                   polarity_cache: dict[str, float] | None = None) -> Snapshot:
    """Materialise the topology for ``window``.

    Dependency edges are kept when both endpoints are files known by the end
    of the window (touched by any commit before ``window.end``); their
    endpoints join the file set even if unchanged inside the window.
    """
    if not isinstance(window, Window):
        raise ConfigError("build_snapshot needs a Window")
    known: set[str] = set()
    influence: dict[Maintainer, list[int]] = {}
    authors: set[str] = set()
    changed: set[str] = set()
    for c in commits:
        if c.timestamp >= window.end:
            continue
        paths = [fc.path for fc in c.file_changes]
        known.update(paths)
        if c.timestamp < window.start or (c.is_merge and not include_merges):
            continue
        authors.add(c.canonical_author)
        for fc in c.file_changes:
            changed.add(fc.path)
            vec = influence.setdefault((c.canonical_author, fc.path), [0, 0, 0])
            vec[0] += fc.lines_added
            vec[1] += fc.lines_deleted
            vec[2] += 1

    deps = frozenset((s, t) for s, t in dependency_edges
                     if s in known and t in known and s != t)
    files = set(changed)
    for s, t in deps:
        files.add(s)
        files.add(t)

    in_window = [m for m in messages if m.timestamp in window]
    authors.update(m.canonical_author for m in in_window)
    stats = shared_thread_stats(in_window, lexicon, polarity_cache)
    weights = {rel: (float(st.pair_messages), st.mean_sentiment) for rel, st in stats.items()}

    return Snapshot(
        window=window,
        files=frozenset(files),
        dependencies=deps,
        authors=frozenset(authors),
        relations=frozenset(weights),
        weights=weights,
        maintainers=frozenset(influence),
        influence={k: tuple(v) for k, v in influence.items()},
    )


# -- deltas ------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyDelta:
    from_window: Window
    to_window: Window
    # relation -> (weight in the later snapshot, weight change)
    new_or_changed_relations: Mapping[Relation, tuple[tuple[float, ...], tuple[float, ...]]]
    # (author, file) -> per-activity count change
    new_or_changed_influence: Mapping[Maintainer, tuple[int, ...]]
    added_files: frozenset[str] = frozenset()
    removed_files: frozenset[str] = frozenset()
    added_authors: frozenset[str] = frozenset()
    removed_authors: frozenset[str] = frozenset()
    parameters: tuple[str, ...] = RELATION_PARAMETERS
    activities: tuple[str, ...] = ACTIVITIES

    @property
    def is_empty(self) -> bool:
        return not (self.new_or_changed_relations or self.new_or_changed_influence
                    or self.added_files or self.removed_files
                    or self.added_authors or self.removed_authors)

    def to_json(self) -> dict:
        return {
            "from_window": self.from_window.to_json(),
            "to_window": self.to_window.to_json(),
            "new_or_changed_relations": [
                {"authors": list(rel), "weight": list(w), "change": list(d)}
                for rel, (w, d) in sorted(self.new_or_changed_relations.items())],
            "new_or_changed_influence": [
                {"author": a, "file": s, "change": list(d)}
                for (a, s), d in sorted(self.new_or_changed_influence.items())],
            "added_files": sorted(self.added_files),
            "removed_files": sorted(self.removed_files),
            "added_authors": sorted(self.added_authors),
            "removed_authors": sorted(self.removed_authors),
        }


def snapshot_delta(s1: Snapshot, s2: Snapshot, epsilon: float = 0.0) -> TopologyDelta:
    if s1.parameters != s2.parameters or s1.activities != s2.activities:
        raise SchemaError("snapshots use different parameter or activity schemas")
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ArgumentError("epsilon must be finite and >= 0")
    if s2.window.start < s1.window.start:
        raise ArgumentError("second snapshot precedes the first")

    relations = {}
    for rel in s2.relations:
        w2 = s2.weights[rel]
        w1 = s1.weights.get(rel)
        if w1 is None:
            relations[rel] = (w2, w2)
            continue
        diff = tuple(b - a for a, b in zip(w1, w2))
        if any(abs(d) > epsilon for d in diff):
            relations[rel] = (w2, diff)

    influence = {}
    zero = (0,) * len(s2.activities)
    for key in s2.maintainers:
        v2 = s2.influence[key]
        v1 = s1.influence.get(key, zero)
        diff = tuple(b - a for a, b in zip(v1, v2))
        if key not in s1.influence or any(diff):
            influence[key] = diff

    return TopologyDelta(
        from_window=s1.window,
        to_window=s2.window,
        new_or_changed_relations=relations,
        new_or_changed_influence=influence,
        added_files=s2.files - s1.files,
        removed_files=s1.files - s2.files,
        added_authors=s2.authors - s1.authors,
        removed_authors=s1.authors - s2.authors,
        parameters=s2.parameters,
        activities=s2.activities,
    )


# -- filters -----------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdConfig:
    """Per-component thresholds. Components without a threshold do not take
    part in the any/all test; with no thresholds at all nothing passes."""

    relation_thresholds: Mapping[str, float] = field(default_factory=dict)
    influence_thresholds: Mapping[str, float] = field(default_factory=dict)
    relation_aggregation: str = "any"
    influence_aggregation: str = "any"
    weight_change_epsilon: float = 0.0

    def __post_init__(self) -> None:
        for agg in (self.relation_aggregation, self.influence_aggregation):
            if agg not in ("any", "all"):
                raise ConfigError(f"aggregation must be 'any' or 'all', not {agg!r}")
        for name, value in {**self.relation_thresholds, **self.influence_thresholds}.items():
            if not math.isfinite(value):
                raise ConfigError(f"threshold {name} is not finite")
        if self.weight_change_epsilon < 0 or not math.isfinite(self.weight_change_epsilon):
            raise ConfigError("weight_change_epsilon must be finite and >= 0")


def meets(vector: Sequence[float], names: Sequence[str], thresholds: Mapping[str, float],
          aggregation: str) -> bool:
    tests = [vector[i] >= thresholds[name] for i, name in enumerate(names) if name in thresholds]
    if not tests:
        return False
    return any(tests) if aggregation == "any" else all(tests)


@dataclass(frozen=True)
class Evidence:
    """One reason a file was selected."""

    kind: str  # "relation", "influence" or "flag"
    subject: tuple[str, ...]
    values: tuple[float, ...] = ()
    detail: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind, "subject": list(self.subject),
                "values": list(self.values), "detail": self.detail}


def filter_relation_changes(delta: TopologyDelta, snapshot2: Snapshot,
                            thresholds: ThresholdConfig
                            ) -> tuple[frozenset[str], dict[str, list[Evidence]]]:
    """Files maintained (in the later snapshot) by either member of a new or
    changed relation whose weight meets the relation thresholds."""
    by_author: dict[str, set[str]] = defaultdict(set)
    for a, s in snapshot2.maintainers:
        by_author[a].add(s)
    provenance: dict[str, list[Evidence]] = defaultdict(list)
    for rel in sorted(delta.new_or_changed_relations):
        weight, _change = delta.new_or_changed_relations[rel]
        if not meets(weight, delta.parameters, thresholds.relation_thresholds,
                     thresholds.relation_aggregation):
            continue
        for via in rel:
            for s in sorted(by_author.get(via, ())):
                provenance[s].append(Evidence("relation", rel + (via,), tuple(weight)))
    return frozenset(provenance), dict(provenance)


def filter_influence_changes(delta: TopologyDelta, thresholds: ThresholdConfig
                             ) -> tuple[frozenset[str], dict[str, list[Evidence]]]:
    """Files whose per-author activity change meets the influence thresholds."""
    provenance: dict[str, list[Evidence]] = defaultdict(list)
    for (a, s) in sorted(delta.new_or_changed_influence):
        change = delta.new_or_changed_influence[(a, s)]
        if meets(change, delta.activities, thresholds.influence_thresholds,
                 thresholds.influence_aggregation):
            provenance[s].append(Evidence("influence", (a, s), tuple(change)))
    return frozenset(provenance), dict(provenance)


@dataclass(frozen=True)
class CandidateSet:
    s_r: frozenset[str] = frozenset()
    s_i: frozenset[str] = frozenset()
    selected: frozenset[str] = frozenset()
    provenance: Mapping[str, tuple[Evidence, ...]] = field(default_factory=dict)
    classes: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "s_r": sorted(self.s_r),
            "s_i": sorted(self.s_i),
            "selected": sorted(self.selected),
            "provenance": {s: [e.to_json() for e in ev]
                           for s, ev in sorted(self.provenance.items())},
            "classes": {s: sorted(c) for s, c in sorted(self.classes.items())},
        }


def select_components(s_r, s_i) -> CandidateSet:
    """Intersect the relation- and influence-selected files.

    Accepts plain sets or the ``(files, provenance)`` pairs the filters return.
    """
    prov: dict[str, list[Evidence]] = defaultdict(list)
    if isinstance(s_r, tuple):
        s_r, pr = s_r
        for s, ev in pr.items():
            prov[s].extend(ev)
    if isinstance(s_i, tuple):
        s_i, pi = s_i
        for s, ev in pi.items():
            prov[s].extend(ev)
    s_r, s_i = frozenset(s_r), frozenset(s_i)
    return CandidateSet(s_r, s_i, s_r & s_i, {s: tuple(ev) for s, ev in prov.items()})


# -- reachability ------------------------------------------------------------

@dataclass(frozen=True)
class ReachabilityTrace:
    origin: str
    upstream_layers: tuple[frozenset[str], ...]
    downstream_layers: tuple[frozenset[str], ...]
    max_depth: int

    @property
    def upstream(self) -> frozenset[str]:
        return frozenset().union(*self.upstream_layers)

    @property
    def downstream(self) -> frozenset[str]:
        return frozenset().union(*self.downstream_layers)

    def to_json(self) -> dict:
        return {
            "origin": self.origin,
            "max_depth": self.max_depth,
            "upstream_layers": [sorted(layer) for layer in self.upstream_layers],
            "downstream_layers": [sorted(layer) for layer in self.downstream_layers],
        }


def _bfs_layers(origin: str, adjacency: Mapping[str, set[str]], max_depth: int
                ) -> tuple[frozenset[str], ...]:
    seen = {origin}
    layers = []
    frontier = {origin}
    for _ in range(max_depth):
        nxt = set()
        for node in frontier:
            nxt.update(adjacency.get(node, ()))
        nxt -= seen
        if not nxt:
            break
        seen |= nxt
        layers.append(frozenset(nxt))
        frontier = nxt
    return tuple(layers)


def reachability(origin: str, dependencies: Iterable[Edge], max_depth: int = 1,
                 files: Iterable[str] | None = None) -> ReachabilityTrace:
    if max_depth < 1:
        raise ArgumentError("max_depth must be >= 1")
    dependencies = list(dependencies)
    if files is not None and origin not in set(files):
        raise NotFoundError(f"{origin!r} is not a known file")
    upstream: dict[str, set[str]] = defaultdict(set)
    downstream: dict[str, set[str]] = defaultdict(set)
    for s, t in dependencies:
        upstream[s].add(t)
        downstream[t].add(s)
    return ReachabilityTrace(origin, _bfs_layers(origin, upstream, max_depth),
                             _bfs_layers(origin, downstream, max_depth), max_depth)


__all__ = [
    "ACTIVITIES", "RELATION_PARAMETERS", "CandidateSet", "Evidence", "ReachabilityTrace",
    "SharedThreadStats", "Snapshot", "ThresholdConfig", "TopologyDelta", "build_snapshot",
    "dumps_dependency_edges", "filter_influence_changes", "filter_relation_changes",
    "load_dependency_edges", "meets", "reachability", "relation", "select_components",
    "shared_thread_stats", "snapshot_delta",
]
