"""Seeded synthetic project histories with optional injected attack campaigns.

Benign histories have Poisson commit counts per author-month, commit hours
confined to each author's active window, log-normal change sizes and
mailing-list threads whose sentiment hovers around a configurable mean.
``inject_attack`` appends the records of a staged takeover: small
legitimate-looking commits, then puppet accounts pressuring the lead
maintainer while the attacker's footprint on core files grows, then a
binary test file committed together with a build script at unusual hours.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .ingest import (MAILING_LIST, CommitRecord, FileChange, MessageRecord, dumps_jsonl,
                     normalize_author)
from .topology import Edge, dumps_dependency_edges
from .windows import Window

POSITIVE_WORDS = ("thanks", "great", "good", "helpful", "nice", "clean", "appreciate",
                  "excellent", "useful", "solid", "glad", "works")
NEGATIVE_WORDS = ("slow", "broken", "unacceptable", "frustrating", "neglected", "useless",
                  "pathetic", "hopeless", "unresponsive", "disappointing", "stale", "worse")
NEUTRAL_WORDS = ("patch", "review", "release", "branch", "build", "commit", "test", "merge",
                 "function", "header", "option", "change", "version", "decoder", "stream",
                 "buffer", "format", "update", "the", "this", "that", "we", "it", "for",
                 "with", "should", "could", "again", "about", "next", "week")

BUILD_FILES = ("configure.ac", "Makefile.am", "m4/build-helper.m4", "config.h.in", "CMakeLists.txt")
CONFIG_FILES = ("config/default.toml", ".github/workflows/ci.yml")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_authors: int = 20
    n_files: int = 40
    n_months: int = 24
    commits_per_author_month: float = 4.0
    active_hours: tuple[tuple[int, int], ...] | None = None
    message_rate: float = 3.0
    benign_sentiment_mean: float = 0.15
    dependency_density: float = 0.05
    start: datetime = datetime(2022, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self) -> None:
        if min(self.n_authors, self.n_files, self.n_months) < 1:
            raise ArgumentError("author, file and month counts must be >= 1")
        if self.commits_per_author_month < 0 or self.message_rate < 0:
            raise ArgumentError("rates must be >= 0")
        if not 0.0 <= self.dependency_density <= 1.0:
            raise ArgumentError("dependency_density must be in [0, 1]")
        if not -1.0 <= self.benign_sentiment_mean <= 1.0:
            raise ArgumentError("benign_sentiment_mean must be in [-1, 1]")
        if self.active_hours is not None:
            if len(self.active_hours) != self.n_authors:
                raise ArgumentError("active_hours needs one window per author")
            for lo, hi in self.active_hours:
                if not (0 <= lo < 24 and 0 < hi <= 24 and lo != hi):
                    raise ArgumentError(f"bad active window [{lo}, {hi})")
        if self.start.tzinfo is None:
            raise ArgumentError("start must be timezone-aware")


@dataclass(frozen=True)
class History:
    commits: tuple[CommitRecord, ...]
    messages: tuple[MessageRecord, ...]
    dependency_edges: tuple[Edge, ...]
    authors: tuple[str, ...] = ()
    maintainer: str | None = None

    @property
    def files(self) -> frozenset[str]:
        return frozenset(fc.path for c in self.commits for fc in c.file_changes)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(dumps_jsonl(self.commits).encode())
        h.update(dumps_jsonl(self.messages).encode())
        h.update(dumps_dependency_edges(self.dependency_edges).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class AttackParams:
    attacker_name: str = "Robin Quill"
    attacker_email: str = "robin.quill@mail.example"
    puppets: int = 2
    start_month: int = 8
    lc_months: int = 8
    ec_months: int = 5
    bd_months: int = 2
    lc_commits_per_month: int = 4
    lc_hours: tuple[int, int] = (12, 18)
    bd_hours: tuple[int, int] = (1, 5)
    ec_messages_per_puppet: int = 10
    bd_binary_commits: int = 6
    bd_burst_days: int = 12
    bd_messages: int = 12
    backdoor_file: str = "tests/files/corrupt-stream-3.bin"
    build_script: str = "m4/build-helper.m4"
    unique: bool = True

    def __post_init__(self) -> None:
        if min(self.puppets, self.lc_months, self.ec_months, self.bd_months,
               self.lc_commits_per_month, self.ec_messages_per_puppet,
               self.bd_binary_commits, self.bd_messages, self.start_month) < 0:
            raise ArgumentError("attack parameters must be >= 0")
        if self.bd_burst_days < 1:
            raise ArgumentError("attack parameters must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    attacker: str | None
    stage_windows: dict[str, Window] = field(default_factory=dict)
    backdoor_file: str | None = None
    sock_puppets: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        order = [self.stage_windows[s] for s in ("LC", "EC", "BD") if s in self.stage_windows]
        if any(a.start >= b.start for a, b in zip(order, order[1:])):
            raise ArgumentError("stage windows must be ordered LC < EC < BD")

    def to_json(self) -> dict:
        return {"attacker": self.attacker,
                "stage_windows": {k: w.to_json() for k, w in self.stage_windows.items()},
                "backdoor_file": self.backdoor_file,
                "sock_puppets": sorted(self.sock_puppets)}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(obj["attacker"],
                   {k: Window.from_json(v) for k, v in obj["stage_windows"].items()},
                   obj["backdoor_file"], frozenset(obj["sock_puppets"]))


def month_start(start: datetime, offset: int) -> datetime:
    y, m = divmod(start.month - 1 + offset, 12)
    return start.replace(year=start.year + y, month=m + 1, day=1, hour=0, minute=0,
                         second=0, microsecond=0)


def _instant(rng: np.random.Generator, month: datetime, hours: tuple[int, int]) -> datetime:
    nxt = month_start(month, 1)
    days = (nxt - month).days
    lo, hi = hours
    span = (hi - lo) % 24 or 24
    hour = (lo + rng.integers(0, span)) % 24
    return month + timedelta(days=int(rng.integers(0, days)), hours=int(hour),
                             minutes=int(rng.integers(0, 60)), seconds=int(rng.integers(0, 60)))


def _sha(*parts: object) -> str:
    return hashlib.sha1("\x1f".join(map(str, parts)).encode()).hexdigest()


def _file_layout(n_files: int) -> tuple[list[str], list[str], list[str]]:
    n_mod = max(1, n_files // 3)
    sources = [f"src/mod{i:02d}.c" for i in range(n_mod)]
    headers = [f"src/mod{i:02d}.h" for i in range(n_mod)]
    tests = [f"tests/test_mod{i:02d}.c" for i in range(n_mod)]
    return sources, headers, tests


def _dependencies(rng, sources, headers, tests, density) -> list[Edge]:
    edges: set[Edge] = set()
    for c, h, t in zip(sources, headers, tests):
        edges.add((c, h))
        edges.add((t, c))
        edges.add(("Makefile.am", c))
        # every translation unit includes the configure-generated header
        edges.add((c, "config.h.in"))
    edges.add(("Makefile.am", "configure.ac"))
    edges.add(("configure.ac", "m4/build-helper.m4"))
    edges.add(("config.h.in", "configure.ac"))
    edges.add((".github/workflows/ci.yml", "configure.ac"))
    for c in sources:
        for h in headers:
            if not c.endswith(h[-6:-2] + ".c") and rng.random() < density:
                edges.add((c, h))
    return sorted(edges)


def _sentence(rng, n_words: int, positive_p: float, sentiment_words: int) -> str:
    words = list(rng.choice(NEUTRAL_WORDS, size=n_words))
    for _ in range(sentiment_words):
        pool = POSITIVE_WORDS if rng.random() < positive_p else NEGATIVE_WORDS
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(pool)))
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def _body(rng, positive_p: float) -> str:
    return " ".join(_sentence(rng, int(rng.integers(5, 12)), positive_p, 1)
                    for _ in range(int(rng.integers(1, 4))))


def generate_benign_history(config: ScenarioConfig) -> History:
    """Commits, threaded messages and dependency edges for a benign project."""
    rng = np.random.default_rng(config.seed)
    sources, headers, tests = _file_layout(config.n_files)
    all_files = sources + headers + tests + list(BUILD_FILES) + list(CONFIG_FILES)
    deps = _dependencies(rng, sources, headers, tests, config.dependency_density)

    people = []
    for i in range(config.n_authors):
        name, mail = f"Dev {i:02d}", f"dev{i:02d}@project.example"
        people.append((name, mail, normalize_author(name, mail, {})))
    if config.active_hours is not None:
        hours = [tuple(h) for h in config.active_hours]
    else:
        starts = rng.integers(6, 15, size=config.n_authors)
        hours = [(int(s), int(s) + 8) for s in starts]
    # each author concentrates on a few modules
    homes = [list(rng.choice(len(sources), size=min(3, len(sources)), replace=False))
             for _ in people]

    commits: list[CommitRecord] = []
    for month_idx in range(config.n_months):
        month = month_start(config.start, month_idx)
        for a, (name, mail, canon) in enumerate(people):
            for _ in range(int(rng.poisson(config.commits_per_author_month))):
                ts = _instant(rng, month, hours[a])
                n_touch = int(rng.integers(1, 4))
                paths = set()
                for _ in range(n_touch):
                    r = rng.random()
                    if r < 0.75:
                        mod = int(rng.choice(homes[a]))
                        paths.add(str(rng.choice([sources[mod], headers[mod], tests[mod]])))
                    elif r < 0.95:
                        paths.add(str(rng.choice(all_files[:3 * len(sources)])))
                    else:
                        paths.add(str(rng.choice(list(BUILD_FILES) + list(CONFIG_FILES))))
                changes = tuple(
                    FileChange(p, int(rng.lognormal(2.5, 1.2)), int(rng.lognormal(1.8, 1.2)))
                    for p in sorted(paths))
                commits.append(CommitRecord(_sha(config.seed, canon, ts.isoformat(), len(commits)),
                                            name, mail, canon, ts, False, changes))

    positive_p = min(1.0, max(0.0, 0.5 + config.benign_sentiment_mean))
    messages: list[MessageRecord] = []
    maintainer = people[0][2]
    for month_idx in range(config.n_months):
        month = month_start(config.start, month_idx)
        posts = []
        for a, (_, _, canon) in enumerate(people):
            for _ in range(int(rng.poisson(config.message_rate))):
                posts.append((_instant(rng, month, hours[a]), canon))
        posts.sort()
        threads: list[tuple[str, str]] = []  # (thread id, last message id)
        for ts, canon in posts:
            mid = f"<{_sha(config.seed, 'msg', len(messages))[:16]}@list.example>"
            if threads and rng.random() < 0.7:
                t = int(rng.integers(0, len(threads)))
                tid, parent = threads[t]
                threads[t] = (tid, mid)
            else:
                tid, parent = mid, None
                threads.append((tid, mid))
            messages.append(MessageRecord(mid, MAILING_LIST, tid, parent, canon, ts,
                                          _body(rng, positive_p)))
        # the maintainer answers in most threads
        for tid, parent in threads:
            if rng.random() < 0.6:
                last = max(m.timestamp for m in messages if m.thread_id == tid)
                mid = f"<{_sha(config.seed, 'msg', len(messages))[:16]}@list.example>"
                ts = min(last + timedelta(hours=int(rng.integers(1, 48))),
                         month_start(month, 1) - timedelta(seconds=1))
                messages.append(MessageRecord(mid, MAILING_LIST, tid, parent, maintainer, ts,
                                              _body(rng, positive_p)))

    commits.sort(key=lambda c: (c.timestamp, c.commit_id))
    messages.sort(key=lambda m: (m.timestamp, m.message_id))
    return History(tuple(commits), tuple(messages), tuple(deps),
                   tuple(p[2] for p in people), maintainer)


def inject_attack(history: History, params: AttackParams | None = None, seed: int = 0,
                  start: datetime | None = None) -> tuple[History, GroundTruth]:
    """Append a staged takeover campaign; benign records are left untouched."""
    params = params or AttackParams()
    if params.lc_months + params.ec_months + params.bd_months == 0:
        return history, GroundTruth(None)
    attacker = normalize_author(params.attacker_name, params.attacker_email, {})
    puppets = [normalize_author(f"Puppet {i}", f"puppet{i}@mail.example", {})
               for i in range(params.puppets)]
    existing = set(history.authors) | {c.canonical_author for c in history.commits} \
        | {m.canonical_author for m in history.messages}
    if params.unique and (attacker in existing or existing & set(puppets)):
        raise ArgumentError("attacker or puppet id collides with an existing author")

    rng = np.random.default_rng([seed, 0x5EED])
    base = start or (min(c.timestamp for c in history.commits) if history.commits
                     else datetime(2022, 1, 1, tzinfo=timezone.utc))
    base = month_start(base, 0)
    maintainer = history.maintainer or (history.authors[0] if history.authors else attacker)

    core = sorted({fc.path for c in history.commits for fc in c.file_changes
                   if fc.path.startswith("src/")}) or ["src/core.c"]
    stages: dict[str, Window] = {}
    m = params.start_month
    for name, length in (("LC", params.lc_months), ("EC", params.ec_months),
                         ("BD", params.bd_months)):
        if length:
            stages[name] = Window(month_start(base, m), month_start(base, m + length))
        m += length

    new_commits: list[CommitRecord] = []
    new_messages: list[MessageRecord] = []

    def commit(ts, changes):
        new_commits.append(CommitRecord(_sha("attack", seed, len(new_commits), ts.isoformat()),
                                        params.attacker_name, params.attacker_email, attacker,
                                        ts, False, tuple(sorted(changes, key=lambda f: f.path))))

    def message(ts, author, tid, parent, body):
        """Post a message; ``tid=None`` starts a new thread."""
        mid = f"<{_sha('attack', seed, 'msg', len(new_messages))[:16]}@list.example>"
        new_messages.append(MessageRecord(mid, MAILING_LIST, tid or mid, parent, author, ts, body))
        return mid

    def months(stage):
        w = stages[stage]
        cur = w.start
        while cur < w.end:
            yield cur
            cur = month_start(cur, 1)

    if "LC" in stages:
        for month in months("LC"):
            for _ in range(params.lc_commits_per_month):
                ts = _instant(rng, month, params.lc_hours)
                path = str(rng.choice(core))
                commit(ts, [FileChange(path, int(rng.integers(1, 12)), int(rng.integers(0, 6)))])

    if "EC" in stages:
        ec_months = list(months("EC"))
        per_month = [params.ec_messages_per_puppet // len(ec_months)] * len(ec_months)
        for i in range(params.ec_messages_per_puppet % len(ec_months)):
            per_month[i] += 1
        for k, month in enumerate(ec_months):
            # growing footprint on core files
            for _ in range(params.lc_commits_per_month + 2 * (k + 1)):
                ts = _instant(rng, month, params.lc_hours)
                path = str(rng.choice(core))
                commit(ts, [FileChange(path, int(rng.integers(5, 30)), int(rng.integers(0, 10)))])
            ts0 = _instant(rng, month, (9, 12))
            tid = parent = message(ts0, maintainer, None, None, _body(rng, 0.8))
            ts = ts0
            for j in range(per_month[k]):
                for p in puppets:
                    ts = ts + timedelta(hours=int(rng.integers(2, 20)))
                    parent = message(ts, p, tid, parent, _pressure(rng))
            ts = ts + timedelta(hours=3)
            message(ts, attacker, tid, parent, _body(rng, 0.9))

    if "BD" in stages:
        # a short burst of binary test-file commits, each with a build-script
        # change, at hours outside the attacker's usual profile
        burst = stages["BD"].start
        for _ in range(params.bd_binary_commits):
            day = timedelta(days=int(rng.integers(0, params.bd_burst_days)))
            ts = _instant(rng, burst, params.bd_hours).replace(day=1) + day
            commit(ts, [FileChange(params.backdoor_file, None, None),
                        FileChange(params.build_script, int(rng.integers(300, 900)),
                                   int(rng.integers(10, 60)))])
        ts = burst + timedelta(hours=10)
        tid = parent = message(ts, attacker, None, None, _body(rng, 0.9))
        voices = puppets + [maintainer, attacker]
        step = timedelta(days=params.bd_burst_days) / max(1, params.bd_messages + 1)
        for j in range(params.bd_messages):
            ts = ts + step
            author = voices[j % len(voices)]
            body = _pressure(rng) if author in puppets else _body(rng, 0.7)
            parent = message(ts, author, tid, parent, body)

    commits = history.commits + tuple(sorted(new_commits, key=lambda c: (c.timestamp, c.commit_id)))
    messages = history.messages + tuple(sorted(new_messages, key=lambda m: (m.timestamp, m.message_id)))
    deps = history.dependency_edges
    if "BD" in stages:
        deps = deps + ((params.build_script, params.backdoor_file),)
    out = History(commits, messages, deps, history.authors + (attacker, *puppets),
                  history.maintainer)
    truth = GroundTruth(attacker, stages,
                        params.backdoor_file if "BD" in stages else None, frozenset(puppets))
    return out, truth


def _pressure(rng) -> str:
    parts = []
    for _ in range(int(rng.integers(2, 4))):
        words = list(rng.choice(NEUTRAL_WORDS, size=int(rng.integers(3, 7))))
        words.insert(0, str(rng.choice(NEGATIVE_WORDS)))
        words.append(str(rng.choice(NEGATIVE_WORDS)))
        parts.append(" ".join(words).capitalize() + ".")
    return " ".join(parts)


# -- stylometric fixtures ----------------------------------------------------

FLOWERY_WORDS = ("thoroughly", "elaborate", "considerable", "remarkable", "extraordinary",
                 "particularly", "beautifully", "thoughtfully", "meticulous", "consideration",
                 "architecture", "implementation", "perspective", "appreciation", "collaboration")
TERSE_WORDS = ("fix", "patch", "now", "go", "done", "ship", "push", "test", "stop", "why",
               "no", "yes", "see", "log", "run")

# shared by both profiles so that sentiment varies within, not between, them
STYLE_SENTIMENT_WORDS = POSITIVE_WORDS + NEGATIVE_WORDS + ("fine", "hard", "fast", "late",
                                                           "simple", "risky", "kind", "odd")


def generate_style_messages(profile: str, n: int, seed: int = 0, author: str = "account",
                            start: datetime = datetime(2022, 1, 1, tzinfo=timezone.utc),
                            spacing: timedelta = timedelta(days=7)) -> list[MessageRecord]:
    """Messages in one of two writing styles: ``"flowery"`` (long, comma-rich
    sentences of long words) or ``"terse"`` (short exclamatory fragments)."""
    if profile not in ("flowery", "terse"):
        raise ArgumentError(f"unknown style profile {profile!r}")
    if n < 0:
        raise ArgumentError("n must be >= 0")
    rng = np.random.default_rng([seed, 1 if profile == "flowery" else 2])
    out = []
    for i in range(n):
        if profile == "flowery":
            sentences = []
            for _ in range(int(rng.integers(2, 4))):
                chunks = [" ".join(rng.choice(FLOWERY_WORDS + NEUTRAL_WORDS,
                                              size=int(rng.integers(5, 9))))
                          for _ in range(int(rng.integers(2, 4)))]
                chunks[-1] += " " + str(rng.choice(STYLE_SENTIMENT_WORDS))
                s = ", ".join(chunks)
                sentences.append(s[0].upper() + s[1:] + ".")
            body = " ".join(sentences)
        else:
            frags = []
            for _ in range(int(rng.integers(3, 6))):
                words = " ".join([*rng.choice(TERSE_WORDS, size=int(rng.integers(1, 4))),
                                  str(rng.choice(STYLE_SENTIMENT_WORDS))])
                frags.append(words.capitalize() + str(rng.choice(["!", "?", "!!", "."])))
            body = " ".join(frags)
        ts = start + spacing * i + timedelta(hours=int(rng.integers(0, 24)))
        mid = f"<style-{profile}-{seed}-{i}@list.example>"
        out.append(MessageRecord(mid, MAILING_LIST, mid, None, author, ts, body))
    return out


# -- export ------------------------------------------------------------------

def write_history(history: History, out_dir: str | Path,
                  truth: GroundTruth | None = None) -> dict[str, Path]:
    """Write commits.jsonl, messages.jsonl, deps.txt and ground_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"commits": out / "commits.jsonl", "messages": out / "messages.jsonl",
             "deps": out / "deps.txt"}
    paths["commits"].write_text(dumps_jsonl(history.commits), encoding="utf-8")
    paths["messages"].write_text(dumps_jsonl(history.messages), encoding="utf-8")
    paths["deps"].write_text(dumps_dependency_edges(history.dependency_edges), encoding="utf-8")
    if truth is not None:
        paths["ground_truth"] = out / "ground_truth.json"
        paths["ground_truth"].write_text(json.dumps(truth.to_json(), indent=2, sort_keys=True)
                                         + "\n", encoding="utf-8")
    return paths


def numstat_log(commits: Sequence[CommitRecord]) -> str:
    """Render commits as a ``git log --numstat --date=iso-strict`` style export."""
    lines = []
    for c in commits:
        lines.append(f"commit {c.commit_id}")
        lines.append(f"Author: {c.author_name} <{c.author_email}>")
        lines.append(f"Date:   {c.timestamp.isoformat()}")
        lines.append("")
        lines.append("    synthetic change")
        lines.append("")
        for fc in c.file_changes:
            a = "-" if fc.binary else fc.additions
            d = "-" if fc.binary else fc.deletions
            lines.append(f"{a}\t{d}\t{fc.path}")
        lines.append("")
    return "\n".join(lines)
