"""Acceptance criteria, one test each, reported as PASS/FAIL/SKIP lines.

Criteria 1-3 need the public XZ Utils history, which is not bundled. Point
``STTWATCH_XZ_REPO`` at a local clone (or ``STTWATCH_XZ_NUMSTAT`` at an
export made with ``git log --numstat --date=iso-strict``) and, for the
stylometric check, ``STTWATCH_XZ_ISSUES`` at an issue-tracker JSON export.
"""

from __future__ import annotations

import io
import os
import random
import subprocess
import sys
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from sttwatch.cli import main
from sttwatch.cluster import account_style_clusters, kmeans_fit, purity, silhouette_score
from sttwatch.fixtures import (AttackParams, ScenarioConfig, generate_benign_history,
                               generate_style_messages, inject_attack, numstat_log)
from sttwatch.indicators import (arc_distance, author_change_stats, centrality_series,
                                 circular_stats, correlate_series, window_centrality)
from sttwatch.ingest import (dumps_jsonl, load_alias_map, parse_issues_json, parse_numstat_log,
                             read_messages_jsonl)
from sttwatch.mapek import run_detection
from sttwatch.textmetrics import flesch_readability
from sttwatch.topology import (ThresholdConfig, filter_influence_changes,
                               filter_relation_changes, snapshot_delta)
from sttwatch.windows import Window

import test_cluster
import test_indicators
import test_topology
from conftest import ACCEPTANCE_RESULTS, at, commit

DATA = Path(__file__).parent / "data"
UTC = timezone.utc

pytestmark = pytest.mark.acceptance


def report(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = ("PASS" if ok else "FAIL", detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def skip(number: int, why: str) -> None:
    ACCEPTANCE_RESULTS[number] = ("SKIP", why)
    pytest.skip(why)


# -- XZ corpus ---------------------------------------------------------------

def _xz_commits():
    aliases = load_alias_map(DATA / "xz_aliases.txt")
    export = os.environ.get("STTWATCH_XZ_NUMSTAT")
    repo = os.environ.get("STTWATCH_XZ_REPO")
    if export:
        with open(export, encoding="utf-8", errors="replace") as fh:
            return parse_numstat_log(fh, aliases)
    if repo:
        text = subprocess.run(["git", "-C", repo, "log", "--numstat", "--date=iso-strict",
                               "--no-renames", "HEAD"], capture_output=True, text=True,
                              errors="replace", check=True).stdout
        return parse_numstat_log(text, aliases)
    return None


@pytest.fixture(scope="module")
def xz_commits():
    return _xz_commits()


TABLE_ONE = {
    "Jia Tan": (697, 89.42, 42.10, 131.53, 396.20, 163.45, 492.14),
    "Lasse Collin": (1973, 28.26, 18.31, 46.56, 146.41, 147.61, 249.01),
}
XZ_PERIOD = Window(datetime(2022, 1, 1, tzinfo=UTC), datetime(2024, 7, 1, tzinfo=UTC))


def test_criterion_1_table_values(xz_commits):
    if xz_commits is None:
        skip(1, "XZ history not available (set STTWATCH_XZ_REPO or STTWATCH_XZ_NUMSTAT)")
    misses = []
    for author, expected in TABLE_ONE.items():
        s = author_change_stats(xz_commits, author, XZ_PERIOD)
        got = (s.total_file_changes, s.avg_additions, s.avg_deletions, s.avg_total,
               s.std_additions, s.std_deletions, s.std_total)
        for name, g, e in zip(("changes", "avg_add", "avg_del", "avg_total", "std_add",
                               "std_del", "std_total"), got, expected):
            if abs(g - e) > 0.05 * e:
                misses.append(f"{author} {name} {g:.2f} vs {e}")
    report(1, not misses, "; ".join(misses) or "14 values within 5%")


def test_criterion_2_centrality_peaks(xz_commits):
    if xz_commits is None:
        skip(2, "XZ history not available (set STTWATCH_XZ_REPO or STTWATCH_XZ_NUMSTAT)")
    series = centrality_series(xz_commits, "Jia Tan", start=XZ_PERIOD.start, end=XZ_PERIOD.end)
    values = series.values
    peaks = [w for i, (w, v) in enumerate(series.points)
             if v >= max(values[max(0, i - 1):i + 2])]

    def covered(year, months):
        return any(w.start < datetime(year, m + 1 if m < 12 else 1, 1, tzinfo=UTC)
                   and w.end > datetime(year, m, 1, tzinfo=UTC) for w in peaks for m in months)

    ok = covered(2023, [3]) and covered(2024, [2, 3])
    report(2, ok, f"{len(peaks)} local maxima")


def test_criterion_3_issue_style_clusters():
    path = os.environ.get("STTWATCH_XZ_ISSUES")
    if not path:
        skip(3, "XZ issue export not available (set STTWATCH_XZ_ISSUES)")
    aliases = load_alias_map(DATA / "xz_aliases.txt")
    messages = parse_issues_json(Path(path).read_bytes(), aliases)
    rep = account_style_clusters(messages, "Jia Tan", k_range=(2, 3, 4))
    mid = datetime(2023, 7, 1, tzinfo=UTC)
    before = [lab for ts, lab, _ in rep.timeline if ts < mid]
    after = [lab for ts, lab, _ in rep.timeline if ts >= mid]
    first = max(set(before), key=before.count) if before else None
    second = max(set(after), key=after.count) if after else None
    negative = [lab for _, lab, p in rep.timeline if p < 0]
    ok = (rep.chosen_k == 2 and first is not None and second is not None and first != second
          and negative.count(second) > len(negative) / 2)
    report(3, ok, f"chosen_k={rep.chosen_k}, dominant before={first}, after={second}")


# -- oracles -----------------------------------------------------------------

def test_criterion_4_oracle_equivalence():
    commits = test_indicators.random_commits(1000, seed=42)
    period = Window(at(-1), at(500))
    stats_ok = True
    for author in ("a", "b", "c"):
        s = author_change_stats(commits, author, period)
        n, (ma, sa), (md, sd), (mt, stt) = test_indicators._brute_stats(commits, author, period)
        stats_ok &= (s.total_file_changes, s.avg_additions, s.avg_deletions, s.avg_total,
                     s.std_additions, s.std_deletions, s.std_total) == (n, ma, md, mt, sa, sd, stt)

    rng = random.Random(7)
    filters_ok = 0
    for _ in range(50):
        s1, s2 = _random_snapshot_pair(rng)
        cfg = ThresholdConfig({"message_count": rng.randint(0, 10)},
                              {"additions": rng.randint(0, 25), "file_changes": rng.randint(0, 3)},
                              rng.choice(["any", "all"]), rng.choice(["any", "all"]))
        d = snapshot_delta(s1, s2)
        filters_ok += (set(filter_relation_changes(d, s2, cfg)[0])
                       == test_topology.oracle_relation(s1, s2, cfg)
                       and set(filter_influence_changes(d, cfg)[0])
                       == test_topology.oracle_influence(s1, s2, cfg))
    report(4, stats_ok and filters_ok == 50,
           f"stats exact={stats_ok}, filters exact on {filters_ok}/50 snapshot pairs")


def _random_snapshot_pair(rng: random.Random):
    authors = [f"a{i}" for i in range(rng.randint(2, 10))]
    files = [f"s{i}" for i in range(rng.randint(1, 20))]

    def one(window):
        rel = {}
        for _ in range(rng.randint(0, 12)):
            a, b = sorted(rng.sample(authors, 2))
            rel[(a, b)] = (float(rng.randint(0, 10)), rng.choice([-0.5, 0.0, 0.5]))
        inf = {(rng.choice(authors), rng.choice(files)):
               (rng.randint(0, 30), rng.randint(0, 30), rng.randint(0, 5))
               for _ in range(rng.randint(0, 25))}
        return test_topology.snap(window, rel, inf)
    return one(test_topology.W1), one(test_topology.W2)


def test_criterion_5_hand_checked_units():
    cent = window_centrality([commit("aaaa01", "a", at(1), ("f1", 1, 0), ("f2", 1, 0)),
                              commit("bbbb01", "b", at(1), ("f3", 1, 0))], "a")
    checks = {
        "centrality 2/3": abs(cent - 2 / 3) < 1e-9,
        "circular mean 23,0,1 -> 0": arc_distance(circular_stats([23, 0, 1])[0], 0.0) < 1e-9,
        "pearson 0.9820": abs(correlate_series([1, 2, 3], [1, 2, 4]) - 0.9820) <= 1e-3,
        "flesch 119.19": abs(flesch_readability("The cat sat.") - 119.19) <= 0.01,
        "silhouette 0.8997": abs(silhouette_score([0, 1, 10, 11], [0, 0, 1, 1]) - 0.8997) <= 1e-3,
    }
    failed = [k for k, ok in checks.items() if not ok]
    report(5, not failed, "all five within tolerance" if not failed else ", ".join(failed))


def test_criterion_6_kmeans_exhaustive():
    matched = 0
    total = 0
    for index, x in enumerate(test_cluster.small_datasets(50)):
        for k in range(1, min(3, len(x)) + 1):
            total += 1
            fit = kmeans_fit(x, k, seed=index)
            again = kmeans_fit(x, k, seed=index)
            best = test_cluster.brute_force_inertia(x, k)
            matched += (abs(fit.inertia - best) <= 1e-9 * max(1.0, best)
                        and fit.labels.tobytes() == again.labels.tobytes())
    report(6, matched == total, f"{matched}/{total} fits optimal and deterministic")


# -- end to end --------------------------------------------------------------

def test_criterion_7_detection_on_fixtures():
    top3 = flagged = 0
    slowest = 0.0
    for seed in range(20):
        history, truth = inject_attack(generate_benign_history(ScenarioConfig(seed=seed)),
                                       AttackParams(), seed=seed)
        t0 = time.perf_counter()
        run = run_detection(history.commits, history.messages, history.dependency_edges)
        slowest = max(slowest, time.perf_counter() - t0)
        top3 += truth.backdoor_file in [o.file for o in run.ranking()[:3]]
        flagged += any(f.author == truth.attacker for f in run.all_flags())
    ok = top3 >= 18 and flagged == 20 and slowest < 10
    report(7, ok, f"backdoor in top 3 for {top3}/20 seeds, attacker flagged in {flagged}/20, "
                  f"slowest run {slowest:.2f}s")


def test_criterion_8_style_separation():
    good = 0
    for seed in range(20):
        flowery = generate_style_messages("flowery", 20, seed=seed, author="acct")
        terse = generate_style_messages("terse", 20, seed=seed, author="acct",
                                        start=flowery[-1].timestamp)
        truth = {m.message_id: "f" for m in flowery} | {m.message_id: "t" for m in terse}
        rep = account_style_clusters(flowery + terse, "acct", k_range=(2, 3, 4), seed=seed)
        pur = purity(rep.labels, [truth[m] for m, _ in rep.assignments])
        good += rep.chosen_k == 2 and pur >= 0.9
    report(8, good >= 18, f"{good}/20 seeds give k=2 with purity >= 0.9")


def _stage_outputs(root: Path, data: Path) -> dict[str, bytes]:
    runs = {
        "ingest": ["ingest", "--numstat", str(data / "numstat.log")],
        "snapshot.json": ["snapshot", "--data", str(data), "--from", "2022-10-01",
                          "--to", "2022-11-01"],
        "indicators.csv": ["indicators", "--data", str(data), "--author", "Robin Quill"],
        "centrality.svg": ["indicators", "--data", str(data), "--author", "Robin Quill",
                           "--metric", "centrality", "--format", "svg"],
        "cluster.json": ["cluster", "--data", str(data), "--author", "Robin Quill",
                         "--format", "json"],
        "detect": ["detect", "--data", str(data)],
        "report": ["report", "--data", str(data), "--author", "Robin Quill"],
    }
    out: dict[str, bytes] = {}
    for name, argv in runs.items():
        target = root / name
        assert main(argv + ["--out", str(target)]) == 0, name
        files = sorted(target.rglob("*")) if target.is_dir() else [target]
        for f in files:
            if f.is_file() and not f.name.endswith("manifest.json"):
                out[str(f.relative_to(root))] = f.read_bytes()
    return out


def test_criterion_9_determinism(tmp_path):
    data_a, data_b = tmp_path / "fx_a", tmp_path / "fx_b"
    for d in (data_a, data_b):
        assert main(["gen-fixture", "--out", str(d), "--seed", "11", "--numstat"]) == 0
    same_fixture = all((data_a / n).read_bytes() == (data_b / n).read_bytes()
                       for n in ("commits.jsonl", "messages.jsonl", "deps.txt", "numstat.log"))
    first = _stage_outputs(tmp_path / "run_a", data_a)
    second = _stage_outputs(tmp_path / "run_b", data_a)
    same_stages = first == second

    # a fresh interpreter must render the same SVG bytes
    code = ("import sys; from sttwatch.cli import main; sys.exit(main(sys.argv[1:]))")
    svg = tmp_path / "proc.svg"
    subprocess.run([sys.executable, "-c", code, "indicators", "--data", str(data_a),
                    "--author", "Robin Quill", "--metric", "centrality", "--format", "svg",
                    "--out", str(svg)], check=True)
    same_svg = svg.read_bytes() == first["centrality.svg"]
    ok = same_fixture and same_stages and same_svg
    report(9, ok, f"{len(first)} stage outputs compared; fixture={same_fixture}, "
                  f"stages={same_stages}, cross-process svg={same_svg}")


def test_criterion_10_performance():
    history = generate_benign_history(ScenarioConfig(seed=0, n_authors=50, n_files=200,
                                                     n_months=50, message_rate=0.8))
    commits, messages = history.commits[:10_000], history.messages[:2_000]
    log, jsonl = numstat_log(commits), dumps_jsonl(messages)
    t0 = time.perf_counter()
    parsed = parse_numstat_log(log)
    msgs = read_messages_jsonl(io.StringIO(jsonl))
    run = run_detection(parsed, msgs, history.dependency_edges)
    elapsed = time.perf_counter() - t0
    ok = len(parsed) == 10_000 and len(msgs) == 2_000 and elapsed < 10 and run.reports
    report(10, bool(ok), f"{len(parsed)} commits, {len(msgs)} messages, "
                         f"{len(run.reports)} windows in {elapsed:.2f}s")
