"""Monitor / Analyze / Plan / Execute loop over a snapshot series.

The knowledge store keeps the sealed snapshots, running baselines for
per-author metrics and for the relation/influence populations, and the
per-author metric histories used for co-movement checks. Thresholds for the
relation and influence filters are derived from the population baselines.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .diagnostics import Diagnostics
from .errors import ArgumentError, ConfigError, SequencingError, UndefinedCorrelationError
from .indicators import correlate_series
from .ingest import CommitRecord, MessageRecord
from .textmetrics import Lexicon
from .topology import (ACTIVITIES, RELATION_PARAMETERS, CandidateSet, Evidence,
                       ReachabilityTrace, Snapshot, ThresholdConfig, TopologyDelta,
                       build_snapshot, filter_influence_changes, filter_relation_changes,
                       reachability, select_components, snapshot_delta)
from .windows import Window, covering_windows

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VULNERABILITY_CLASSES = ("design_flaw", "implementation_bug", "configuration_error",
                         "operation_maintenance")
STD_RELATIVE_FLOOR = 0.05
STD_ABSOLUTE_FLOOR = 1e-9


# -- baselines ---------------------------------------------------------------

@dataclass(frozen=True)
class Baseline:
    """Welford running mean/variance with a k-sigma anomaly test."""

    metric: str
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    k_sigma: float = 3.0
    min_count: int = 5
    last_flagged: bool = False

    def __post_init__(self) -> None:
        if self.k_sigma <= 0:
            raise ArgumentError("k_sigma must be positive")
        if self.count < 0:
            raise ArgumentError("count must be >= 0")

    @property
    def variance(self) -> float | None:
        return self.m2 / (self.count - 1) if self.count >= 2 else None

    @property
    def std(self) -> float | None:
        """Sample standard deviation floored at 5% of |mean| (and 1e-9);
        ``None`` while fewer than two observations exist."""
        var = self.variance
        if var is None:
            return None
        return max(math.sqrt(max(var, 0.0)), STD_RELATIVE_FLOOR * abs(self.mean),
                   STD_ABSOLUTE_FLOOR)

    @property
    def mature(self) -> bool:
        return self.count >= self.min_count

    def is_anomalous(self, value: float) -> bool:
        if not self.mature:
            return False
        return abs(value - self.mean) > self.k_sigma * self.std

    def threshold(self) -> float | None:
        return self.mean + self.k_sigma * self.std if self.mature else None

    def to_json(self) -> dict:
        return {"metric": self.metric, "count": self.count, "mean": self.mean,
                "m2": self.m2, "k_sigma": self.k_sigma, "std": self.std}


def update_baseline(baseline: Baseline, observation: float) -> Baseline:
    """Fold one observation in; ``last_flagged`` records whether it breached
    the baseline as it stood before the update."""
    if not math.isfinite(observation):
        raise ArgumentError(f"non-finite observation {observation!r}")
    flagged = baseline.is_anomalous(observation)
    count = baseline.count + 1
    delta = observation - baseline.mean
    mean = baseline.mean + delta / count
    m2 = baseline.m2 + delta * (observation - mean)
    return replace(baseline, count=count, mean=mean, m2=m2, last_flagged=flagged)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    """Declarative predicate tagging a candidate file with a vulnerability class.

    All given conditions must hold. ``paths`` and ``co_changed`` are glob
    patterns; ``co_changed`` needs another file matching it to be changed in
    the same window by an author who also changed this file.
    """

    name: str
    vulnerability_class: str
    paths: tuple[str, ...] = ("*",)
    binary: bool | None = None
    co_changed: tuple[str, ...] = ()
    min_influence: Mapping[str, float] = field(default_factory=dict)
    min_relation_evidence: int = 0
    requires_flag: bool = False
    severity: str = "medium"

    def __post_init__(self) -> None:
        if self.vulnerability_class not in VULNERABILITY_CLASSES:
            raise ConfigError(f"rule {self.name!r}: unknown class {self.vulnerability_class!r}")

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "Rule":
        known = {"name", "class", "paths", "binary", "co_changed", "min_influence",
                 "min_relation_evidence", "requires_flag", "severity"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"rule {obj.get('name')!r}: unknown keys {sorted(extra)}")
        try:
            return cls(name=str(obj["name"]), vulnerability_class=str(obj["class"]),
                       paths=tuple(obj.get("paths", ("*",))), binary=obj.get("binary"),
                       co_changed=tuple(obj.get("co_changed", ())),
                       min_influence=dict(obj.get("min_influence", {})),
                       min_relation_evidence=int(obj.get("min_relation_evidence", 0)),
                       requires_flag=bool(obj.get("requires_flag", False)),
                       severity=str(obj.get("severity", "medium")))
        except KeyError as exc:
            raise ConfigError(f"rule is missing {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class LoopConfig:
    k_sigma: float = 3.0
    window_days: int = 30
    step_days: int = 30
    max_depth: int = 8
    feasibility_floor: float = 1.0
    relation_aggregation: str = "any"
    influence_aggregation: str = "any"
    weight_change_epsilon: float = 0.0
    min_baseline_count: int = 5
    comovement_threshold: float = 0.8
    comovement_windows: int = 6
    comovement_pairs: tuple[tuple[str, str], ...] = (("centrality", "negative_sentiment"),)
    default_relation_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"message_count": 6.0})
    default_influence_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"additions": 200.0, "deletions": 200.0, "file_changes": 4.0})
    rules: tuple[Rule, ...] = ()

    def __post_init__(self) -> None:
        if self.k_sigma <= 0 or self.max_depth < 1 or self.window_days < self.step_days \
                or self.step_days <= 0 or self.comovement_windows < 2:
            raise ConfigError("invalid loop configuration values")
        ThresholdConfig({}, {}, self.relation_aggregation, self.influence_aggregation,
                        self.weight_change_epsilon)


_LOOP_KEYS = {"k_sigma", "window_days", "step_days", "max_depth", "feasibility_floor",
              "relation_aggregation", "influence_aggregation", "weight_change_epsilon",
              "min_baseline_count", "comovement_threshold", "comovement_windows",
              "comovement_pairs"}


def parse_config(data: Mapping) -> LoopConfig:
    loop = dict(data.get("loop", {}))
    unknown = set(loop) - _LOOP_KEYS
    if unknown:
        raise ConfigError(f"unknown [loop] keys: {sorted(unknown)}")
    if "comovement_pairs" in loop:
        loop["comovement_pairs"] = tuple(tuple(p) for p in loop["comovement_pairs"])
    thresholds = data.get("thresholds", {})
    if "relation" in thresholds:
        loop["default_relation_thresholds"] = {k: float(v) for k, v in thresholds["relation"].items()}
    if "influence" in thresholds:
        loop["default_influence_thresholds"] = {k: float(v) for k, v in thresholds["influence"].items()}
    loop["rules"] = tuple(Rule.from_mapping(r) for r in data.get("rules", ()))
    try:
        return LoopConfig(**loop)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def default_config() -> LoopConfig:
    text = resources.files("sttwatch").joinpath("data/default_config.toml").read_text("utf-8")
    return parse_config(tomllib.loads(text))


def load_config(path: str | Path | None = None) -> LoopConfig:
    """Read a TOML config; sections not given fall back to the bundled defaults."""
    base = default_config()
    if path is None:
        return base
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = parse_config(data)
    if not data.get("rules"):
        cfg = replace(cfg, rules=base.rules)
    return cfg


# -- knowledge and monitoring ------------------------------------------------

@dataclass(frozen=True)
class MonitorFlag:
    kind: str  # "baseline" or "co-movement"
    metric: str
    author: str
    window: Window
    value: float
    reference: float  # baseline mean, or correlation threshold
    spread: float  # k-sigma band half-width, or 0 for co-movement

    def to_json(self) -> dict:
        return {"kind": self.kind, "metric": self.metric, "author": self.author,
                "window": self.window.to_json(), "value": self.value,
                "reference": self.reference, "spread": self.spread}


@dataclass
class Knowledge:
    config: LoopConfig = field(default_factory=LoopConfig)
    snapshots: list[Snapshot] = field(default_factory=list)
    baselines: dict[tuple[str, str], Baseline] = field(default_factory=dict)
    # (metric, author) -> {window index: value}
    history: dict[tuple[str, str], dict[int, float]] = field(default_factory=dict)

    def baseline(self, metric: str, subject: str) -> Baseline:
        key = (metric, subject)
        if key not in self.baselines:
            self.baselines[key] = Baseline(f"{metric}:{subject}", k_sigma=self.config.k_sigma,
                                           min_count=self.config.min_baseline_count)
        return self.baselines[key]

    def observe(self, metric: str, subject: str, value: float) -> Baseline:
        updated = update_baseline(self.baseline(metric, subject), value)
        self.baselines[(metric, subject)] = updated
        return updated

    def thresholds(self) -> ThresholdConfig:
        cfg = self.config
        relation = dict(cfg.default_relation_thresholds)
        influence = dict(cfg.default_influence_thresholds)
        for name in RELATION_PARAMETERS:
            b = self.baselines.get((f"relation:{name}", "*"))
            if name in relation and b is not None and b.mature:
                relation[name] = b.threshold()
        for name in ACTIVITIES:
            b = self.baselines.get((f"influence:{name}", "*"))
            if name in influence and b is not None and b.mature:
                influence[name] = float(math.ceil(b.threshold()))
        return ThresholdConfig(relation, influence, cfg.relation_aggregation,
                               cfg.influence_aggregation, cfg.weight_change_epsilon)


def author_metrics(snapshot: Snapshot) -> dict[str, dict[str, float]]:
    """Per-author values of the monitored metrics for one snapshot."""
    changed = {s for _, s in snapshot.maintainers}
    lines: dict[str, float] = defaultdict(float)
    changes: dict[str, int] = defaultdict(int)
    files: dict[str, set[str]] = defaultdict(set)
    for (a, s), vec in snapshot.influence.items():
        lines[a] += vec[0] + vec[1]
        changes[a] += vec[2]
        files[a].add(s)
    sentiments: dict[str, list[float]] = defaultdict(list)
    if "mean_sentiment" in snapshot.parameters:
        idx = snapshot.parameters.index("mean_sentiment")
        for rel, w in snapshot.weights.items():
            for a in rel:
                sentiments[a].append(w[idx])
    out: dict[str, dict[str, float]] = {}
    for a in snapshot.authors:
        m: dict[str, float] = {"centrality": len(files[a]) / len(changed) if changed else 0.0}
        if changes[a]:
            m["avg_total"] = lines[a] / changes[a]
        if sentiments[a]:
            m["sentiment"] = math.fsum(sentiments[a]) / len(sentiments[a])
        m["negative_sentiment"] = -m.get("sentiment", 0.0)
        out[a] = m
    return out


BASELINE_METRICS = ("avg_total", "centrality", "sentiment")


def monitor_step(knowledge: Knowledge, new_snapshot: Snapshot
                 ) -> tuple[TopologyDelta | None, list[MonitorFlag]]:
    """Append ``new_snapshot``, diff it against its predecessor, update the
    baselines and report metrics that breach them."""
    cfg = knowledge.config
    if knowledge.snapshots:
        last = knowledge.snapshots[-1]
        if new_snapshot.window.start <= last.window.start:
            raise SequencingError(
                f"snapshot {new_snapshot.window.label()} does not follow {last.window.label()}")
    prev = knowledge.snapshots[-1] if knowledge.snapshots else None
    knowledge.snapshots.append(new_snapshot)
    index = len(knowledge.snapshots) - 1
    window = new_snapshot.window
    delta = snapshot_delta(prev, new_snapshot, cfg.weight_change_epsilon) if prev else None

    flags: list[MonitorFlag] = []
    for author, metrics in sorted(author_metrics(new_snapshot).items()):
        for metric, value in metrics.items():
            knowledge.history.setdefault((metric, author), {})[index] = value
            if metric not in BASELINE_METRICS:
                continue
            own = knowledge.baseline(metric, author)
            ref = own if own.mature else knowledge.baseline(metric, "*")
            if ref.is_anomalous(value):
                flags.append(MonitorFlag("baseline", metric, author, window, value,
                                         ref.mean, ref.k_sigma * ref.std))
            knowledge.observe(metric, author, value)
            knowledge.observe(metric, "*", value)

        if index + 1 >= cfg.comovement_windows:
            span = range(index + 1 - cfg.comovement_windows, index + 1)
            for mx, my in cfg.comovement_pairs:
                hx = knowledge.history.get((mx, author), {})
                hy = knowledge.history.get((my, author), {})
                xs = [hx.get(i, 0.0) for i in span]
                ys = [hy.get(i, 0.0) for i in span]
                try:
                    r = correlate_series(xs, ys)
                except UndefinedCorrelationError:
                    continue
                # co-movement means both rising together, not just correlated
                if r >= cfg.comovement_threshold and xs[-1] > xs[0] and ys[-1] > ys[0]:
                    flags.append(MonitorFlag("co-movement", f"{mx}+{my}", author, window,
                                             r, cfg.comovement_threshold, 0.0))

    for rel, w in new_snapshot.weights.items():
        for name, value in zip(new_snapshot.parameters, w):
            knowledge.observe(f"relation:{name}", "*", value)
    if delta is not None:
        for change in delta.new_or_changed_influence.values():
            for name, value in zip(delta.activities, change):
                knowledge.observe(f"influence:{name}", "*", value)
    return delta, flags


# -- analysis ----------------------------------------------------------------

@dataclass(frozen=True)
class FileMeta:
    path: str
    binary: bool = False
    authors: frozenset[str] = frozenset()
    additions: int = 0
    deletions: int = 0
    changes: int = 0
    co_changed: frozenset[str] = frozenset()  # other files changed by the same authors

    def to_json(self) -> dict:
        return {"path": self.path, "binary": self.binary, "authors": sorted(self.authors),
                "additions": self.additions, "deletions": self.deletions,
                "changes": self.changes, "co_changed": sorted(self.co_changed)}


def window_file_meta(commits: Iterable[CommitRecord], window: Window,
                     include_merges: bool = False) -> dict[str, FileMeta]:
    by_author: dict[str, set[str]] = defaultdict(set)
    acc: dict[str, dict] = {}
    for c in commits:
        if c.timestamp not in window or (c.is_merge and not include_merges):
            continue
        for fc in c.file_changes:
            d = acc.setdefault(fc.path, {"binary": False, "authors": set(), "a": 0, "d": 0, "n": 0})
            d["binary"] |= fc.binary
            d["authors"].add(c.canonical_author)
            d["a"] += fc.lines_added
            d["d"] += fc.lines_deleted
            d["n"] += 1
            by_author[c.canonical_author].add(fc.path)
    out = {}
    for path, d in acc.items():
        co = set().union(*(by_author[a] for a in d["authors"])) - {path}
        out[path] = FileMeta(path, d["binary"], frozenset(d["authors"]), d["a"], d["d"],
                             d["n"], frozenset(co))
    return out


def _meta_from_snapshot(path: str, snapshot: Snapshot) -> FileMeta:
    authors = {a for a, s in snapshot.maintainers if s == path}
    vecs = [snapshot.influence[(a, path)] for a in authors]
    adds = sum(v[0] for v in vecs)
    dels = sum(v[1] for v in vecs)
    n = sum(v[2] for v in vecs)
    co = {s for a, s in snapshot.maintainers if a in authors} - {path}
    # without raw records, a zero-line change is the best binary proxy
    return FileMeta(path, n > 0 and adds == 0 and dels == 0, frozenset(authors),
                    adds, dels, n, frozenset(co))


def _match(path: str, patterns: Iterable[str]) -> bool:
    return any(fnmatch.fnmatchcase(path, p) or fnmatch.fnmatchcase(path.rsplit("/", 1)[-1], p)
               for p in patterns)


def rule_matches(rule: Rule, meta: FileMeta, evidence: Sequence[Evidence],
                 flagged_authors: Iterable[str] = ()) -> bool:
    if not _match(meta.path, rule.paths):
        return False
    if rule.binary is not None and meta.binary != rule.binary:
        return False
    if rule.co_changed and not any(_match(p, rule.co_changed) for p in meta.co_changed):
        return False
    for name, minimum in rule.min_influence.items():
        ok = any(e.kind == "influence" and name in ACTIVITIES
                 and e.values[ACTIVITIES.index(name)] >= minimum for e in evidence)
        if not ok:
            return False
    if sum(1 for e in evidence if e.kind == "relation") < rule.min_relation_evidence:
        return False
    if rule.requires_flag and not (set(flagged_authors) & set(meta.authors)):
        return False
    return True


def analyze_candidates(delta: TopologyDelta | None, snapshot: Snapshot,
                       thresholds: ThresholdConfig, flags: Sequence[MonitorFlag] = (),
                       rules: Sequence[Rule] = (),
                       file_meta: Mapping[str, FileMeta] | None = None) -> CandidateSet:
    if delta is None:
        return CandidateSet()
    s_r = filter_relation_changes(delta, snapshot, thresholds)
    s_i = filter_influence_changes(delta, thresholds)
    cand = select_components(s_r, s_i)
    flagged = sorted({f.author for f in flags})
    provenance = {s: list(ev) for s, ev in cand.provenance.items()}
    classes = {}
    for s in sorted(cand.selected):
        meta = (file_meta or {}).get(s) or _meta_from_snapshot(s, snapshot)
        for f in flags:
            if (f.author, s) in snapshot.maintainers:
                provenance[s].append(Evidence("flag", (f.author, f.metric), (f.value,), f.kind))
        classes[s] = frozenset(r.vulnerability_class for r in rules
                               if rule_matches(r, meta, provenance[s], flagged))
    return CandidateSet(cand.s_r, cand.s_i, cand.selected,
                        {s: tuple(ev) for s, ev in provenance.items()}, classes)


# -- planning ----------------------------------------------------------------

@dataclass(frozen=True)
class WorkOrder:
    file: str
    score: float
    vulnerability_classes: frozenset[str]
    trace: ReachabilityTrace
    evidence: tuple[Evidence, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.score) or self.score < 0:
            raise ArgumentError("work order score must be finite and >= 0")
        if not self.evidence:
            raise ArgumentError("work order needs evidence")

    def to_json(self) -> dict:
        return {"file": self.file, "score": self.score,
                "vulnerability_classes": sorted(self.vulnerability_classes),
                "trace": self.trace.to_json(),
                "evidence": [e.to_json() for e in self.evidence]}


def order_key(order: WorkOrder) -> tuple:
    return (-order.score, order.file)


def plan_reachability(candidates: CandidateSet, snapshot: Snapshot, max_depth: int = 3,
                      feasibility_floor: float = 0.0,
                      diagnostics: Diagnostics | None = None) -> list[WorkOrder]:
    """Score = evidence count x (1 + files downstream within ``max_depth``)."""
    if max_depth < 1:
        raise ArgumentError("max_depth must be >= 1")
    orders = []
    pruned = 0
    for s in sorted(candidates.selected):
        evidence = tuple(candidates.provenance.get(s, ()))
        trace = reachability(s, snapshot.dependencies, max_depth)
        score = float(len(evidence) * (1 + len(trace.downstream)))
        if score < feasibility_floor or not evidence:
            pruned += 1
            continue
        orders.append(WorkOrder(s, score, candidates.classes.get(s, frozenset()),
                                trace, evidence))
    if pruned and diagnostics is not None:
        diagnostics.warn("pruned", f"{pruned} candidate(s) scored below feasibility floor "
                        f"{feasibility_floor}" + ("; plan is empty" if not orders else ""))
    return sorted(orders, key=order_key)


# -- execution ---------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    file: str
    plugin: str
    text: str
    severity: str

    def to_json(self) -> dict:
        return {"file": self.file, "plugin": self.plugin, "text": self.text,
                "severity": self.severity}


@dataclass(frozen=True)
class PluginFailure:
    reason: str


class Analyzer(Protocol):
    name: str

    def __call__(self, order: WorkOrder, meta: FileMeta) -> list[Finding] | PluginFailure:
        ...


class RuleRecheck:
    """Re-evaluates the rule table against one work order's file."""

    name = "rule-recheck"

    def __init__(self, rules: Sequence[Rule], flagged_authors: Iterable[str] = ()):
        self.rules = tuple(rules)
        self.flagged = frozenset(flagged_authors)

    def __call__(self, order: WorkOrder, meta: FileMeta) -> list[Finding]:
        findings = []
        for rule in self.rules:
            if rule_matches(rule, meta, order.evidence, self.flagged):
                findings.append(Finding(order.file, self.name,
                                        f"{rule.name}: {rule.vulnerability_class} pattern holds",
                                        rule.severity))
        return findings


@dataclass
class ThreatReport:
    run_id: str
    window_pair: tuple[Window, Window] | None
    candidates: CandidateSet
    work_orders: list[WorkOrder]
    findings: list[Finding]
    diagnostics: Diagnostics
    flags: list[MonitorFlag] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "threat_report",
            "run_id": self.run_id,
            "window_pair": [w.to_json() for w in self.window_pair] if self.window_pair else None,
            "flags": [f.to_json() for f in self.flags],
            "candidates": self.candidates.to_json(),
            "work_orders": [o.to_json() for o in self.work_orders],
            "findings": [f.to_json() for f in self.findings],
            "diagnostics": self.diagnostics.to_json(),
        }


def _run_id(parts: object) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def execute_plan(work_orders: Sequence[WorkOrder], plugins: Sequence[Analyzer],
                 file_meta: Mapping[str, FileMeta] | None = None,
                 diagnostics: Diagnostics | None = None,
                 window_pair: tuple[Window, Window] | None = None,
                 candidates: CandidateSet | None = None,
                 flags: Sequence[MonitorFlag] = ()) -> ThreatReport:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    orders = sorted(work_orders, key=order_key)
    findings: list[Finding] = []
    if not plugins:
        diag.warn("no-plugins", "no analyzer plugins configured; findings are empty")
    for plugin in sorted(plugins, key=lambda p: p.name):
        for order in orders:
            meta = (file_meta or {}).get(order.file) or FileMeta(order.file)
            try:
                result = plugin(order, meta)
            except Exception as exc:
                diag.error("plugin-failed", f"{plugin.name} on {order.file}: {exc!r}")
                continue
            if isinstance(result, PluginFailure):
                diag.error("plugin-failed", f"{plugin.name} on {order.file}: {result.reason}")
                continue
            findings.extend(result)
    findings.sort(key=lambda f: (f.plugin, f.file, f.text))
    run_id = _run_id({"windows": [w.to_json() for w in window_pair] if window_pair else None,
                      "orders": [o.file for o in orders],
                      "plugins": sorted(p.name for p in plugins)})
    return ThreatReport(run_id, window_pair, candidates or CandidateSet(), list(orders),
                        findings, diag, list(flags))


# -- whole-run driver --------------------------------------------------------

@dataclass
class DetectionRun:
    reports: list[ThreatReport]
    knowledge: Knowledge

    def all_flags(self) -> list[MonitorFlag]:
        return [f for r in self.reports for f in r.flags]

    def ranking(self) -> list[WorkOrder]:
        """Work orders across all windows, best score per file."""
        best: dict[str, WorkOrder] = {}
        for report in self.reports:
            for order in report.work_orders:
                cur = best.get(order.file)
                if cur is None or order.score > cur.score:
                    best[order.file] = order
        return sorted(best.values(), key=order_key)

    @property
    def has_errors(self) -> bool:
        return any(r.diagnostics.has_errors for r in self.reports)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "detection_run",
            "ranking": [{"file": o.file, "score": o.score,
                         "vulnerability_classes": sorted(o.vulnerability_classes)}
                        for o in self.ranking()],
            "reports": [r.to_json() for r in self.reports],
        }


def run_detection(commits: Sequence[CommitRecord], messages: Sequence[MessageRecord],
                  dependency_edges: Sequence[tuple[str, str]], config: LoopConfig | None = None,
                  lexicon: Lexicon | None = None,
                  plugins: Sequence[Analyzer] | None = None,
                  start: datetime | None = None, end: datetime | None = None,
                  step_callback: Callable[[ThreatReport], None] | None = None) -> DetectionRun:
    """Build one snapshot per window and run the full loop over the series."""
    config = config or default_config()
    knowledge = Knowledge(config)
    instants = [c.timestamp for c in commits] + [m.timestamp for m in messages]
    windows = covering_windows(instants, timedelta(days=config.window_days),
                               timedelta(days=config.step_days), start, end)
    commits = sorted(commits, key=lambda c: c.timestamp)
    messages = sorted(messages, key=lambda m: m.timestamp)
    polarity_cache: dict[str, float] = {}
    reports = []
    for window in windows:
        win_commits = [c for c in commits if c.timestamp < window.end]
        snapshot = build_snapshot(win_commits, messages, dependency_edges, window, lexicon,
                                  polarity_cache=polarity_cache)
        thresholds = knowledge.thresholds()
        prev = knowledge.snapshots[-1] if knowledge.snapshots else None
        delta, flags = monitor_step(knowledge, snapshot)
        diag = Diagnostics()
        meta = window_file_meta(win_commits, window)
        cands = analyze_candidates(delta, snapshot, thresholds, flags, config.rules, meta)
        orders = plan_reachability(cands, snapshot, config.max_depth,
                                   config.feasibility_floor, diag)
        active = plugins if plugins is not None else [RuleRecheck(config.rules,
                                                                  {f.author for f in flags})]
        report = execute_plan(orders, active, meta, diag,
                              (prev.window, window) if prev else None, cands, flags)
        reports.append(report)
        if step_callback is not None:
            step_callback(report)
    return DetectionRun(reports, knowledge)
