"""``sttwatch`` command-line entry point."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .cluster import account_style_clusters
from .diagnostics import Diagnostics
from .errors import (DIAGNOSED_EXIT_CODE, IO_EXIT_CODE, ArgumentError, IdentityError,
                     InsufficientDataError, NotFoundError, SttError, UsageError)
from .fixtures import AttackParams, ScenarioConfig, generate_benign_history, inject_attack, \
    numstat_log, write_history
from .indicators import (author_change_stats, centrality_series, change_series,
                         communication_graph, hour_of_day_profile)
from .ingest import (CommitRecord, MessageRecord, load_alias_map, parse_issues_json,
                     parse_mbox, parse_numstat_log, read_commits_jsonl, read_messages_jsonl,
                     write_jsonl)
from .mapek import load_config, run_detection
from .report import render, render_report, work_orders_csv
from .textmetrics import load_lexicon
from .topology import build_snapshot, load_dependency_edges
from .windows import Window, parse_instant

logger = logging.getLogger("sttwatch")


# -- run manifest ------------------------------------------------------------

class RunManifest:
    """Record of one invocation, written next to its outputs."""

    def __init__(self, command: str, args: argparse.Namespace,
                 argv: Sequence[str] | None = None):
        self.command = command
        self.config = getattr(args, "config", None)
        self.seed = getattr(args, "seed", None)
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.started = datetime.now(timezone.utc)
        self.argv = list(sys.argv[1:] if argv is None else argv)

    def input(self, path: str | Path | None) -> None:
        if path is not None:
            self.inputs.append(str(path))

    def output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "config": None if self.config is None else str(self.config),
            "inputs": [{"path": p, "sha256": _sha256(p)} for p in self.inputs],
            "outputs": [{"path": p, "sha256": _sha256(p)} for p in self.outputs],
            "seed": self.seed,
            "tool_version": __version__,
            "started": self.started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def _sha256(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


# -- helpers -----------------------------------------------------------------

def _day_count(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a whole number of days, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("day counts must be >= 1")
    return n


def _k_range(text: str) -> tuple[int, ...]:
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            return tuple(range(lo, hi + 1))
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 2-4 or 2,3, got {text!r}")


def _instant(text: str) -> datetime:
    try:
        return parse_instant(text)
    except SttError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _load_data(args, manifest: RunManifest) -> tuple[list[CommitRecord], list[MessageRecord]]:
    data = Path(args.data)
    commits_path, messages_path = data / "commits.jsonl", data / "messages.jsonl"
    if not commits_path.is_file():
        raise UsageError(f"{data} has no commits.jsonl (run `sttwatch ingest` first)")
    manifest.input(commits_path)
    commits = read_commits_jsonl(commits_path)
    messages: list[MessageRecord] = []
    if messages_path.is_file():
        manifest.input(messages_path)
        messages = read_messages_jsonl(messages_path)
    return commits, messages


def _load_deps(args, manifest: RunManifest) -> list[tuple[str, str]]:
    path = Path(args.deps) if args.deps else Path(args.data) / "deps.txt"
    if not path.is_file():
        if args.deps:
            raise UsageError(f"dependency file {path} not found")
        return []
    manifest.input(path)
    return load_dependency_edges(path)


def _lexicon(args, manifest: RunManifest):
    manifest.input(args.lexicon)
    return load_lexicon(args.lexicon)


def _alias_map(args, manifest: RunManifest) -> dict[str, str]:
    if not args.alias_map:
        return {}
    manifest.input(args.alias_map)
    return load_alias_map(args.alias_map)


def resolve_author(name: str, commits: Sequence[CommitRecord],
                   messages: Sequence[MessageRecord],
                   alias_map: dict[str, str] | None = None) -> str:
    """Map a user-supplied name, email or canonical id to one canonical author."""
    key = name.strip().lower()
    if alias_map and key in alias_map:
        return alias_map[key]
    known = {c.canonical_author for c in commits} | {m.canonical_author for m in messages}
    if name in known:
        return name
    hits = Counter(c.canonical_author for c in commits
                   if key in (c.author_name.strip().lower(), c.author_email.strip().lower()))
    if not hits:
        raise NotFoundError(f"no author matches {name!r}")
    if len(hits) > 1:
        raise IdentityError(f"{name!r} matches several identities {sorted(hits)}; "
                            f"merge them with --alias-map")
    return next(iter(hits))


def _period(args, commits: Sequence[CommitRecord], messages: Sequence[MessageRecord]) -> Window:
    instants = [c.timestamp for c in commits] + [m.timestamp for m in messages]
    if not instants and (args.start is None or args.end is None):
        raise InsufficientDataError("no records and no --from/--to given")
    start = args.start or min(instants).replace(hour=0, minute=0, second=0, microsecond=0)
    end = args.end or (max(instants) + timedelta(seconds=1))
    return Window(start, end)


def _out_path(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def _manifest_for(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


# -- commands ----------------------------------------------------------------

def cmd_ingest(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    if not (args.numstat or args.mbox or args.issues):
        raise UsageError("ingest needs at least one of --numstat, --mbox, --issues")
    out.mkdir(parents=True, exist_ok=True)
    aliases = _alias_map(args, manifest)
    diag = Diagnostics()
    commits: list[CommitRecord] = []
    messages: list[MessageRecord] = []
    for path in args.numstat or ():
        manifest.input(path)
        with open(path, encoding="utf-8", errors="replace") as fh:
            commits.extend(parse_numstat_log(fh, aliases, diag))
    for path in args.mbox or ():
        manifest.input(path)
        messages.extend(parse_mbox(Path(path).read_bytes(), aliases, diag))
    for path in args.issues or ():
        manifest.input(path)
        messages.extend(parse_issues_json(Path(path).read_bytes(), aliases, diag))
    commits.sort(key=lambda c: (c.timestamp, c.commit_id))
    messages.sort(key=lambda m: (m.timestamp, m.message_id))
    for name, records in (("commits.jsonl", commits), ("messages.jsonl", messages)):
        write_jsonl(records, out / name)
        manifest.output(out / name)
    diag_path = out / "diagnostics.json"
    diag_path.write_text(json.dumps(diag.to_json(), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    manifest.output(diag_path)
    logger.info("ingested %d commits and %d messages (%d diagnostics)",
                len(commits), len(messages), len(diag))
    return DIAGNOSED_EXIT_CODE if diag.has_errors else 0


def cmd_snapshot(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    commits, messages = _load_data(args, manifest)
    deps = _load_deps(args, manifest)
    window = _period(args, commits, messages)
    snap = build_snapshot(commits, messages, deps, window, _lexicon(args, manifest))
    out.write_text(json.dumps(snap.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.output(out)
    return 0


def _indicator_objects(args, commits, messages, authors, period, metric):
    length = timedelta(days=args.window)
    step = timedelta(days=args.step or args.window)
    if metric == "stats":
        return [author_change_stats(commits, a, period) for a in authors]
    if metric == "changes":
        return [change_series(commits, a, period) for a in authors]
    if metric == "centrality":
        return [centrality_series(commits, a, length, step, period.start, period.end,
                                  mode=args.mode) for a in authors]
    if metric == "hours":
        in_period = [c for c in commits if c.timestamp in period]
        return [hour_of_day_profile(in_period, a) for a in authors]
    raise UsageError(f"unknown metric {metric!r}")


def cmd_indicators(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    commits, messages = _load_data(args, manifest)
    aliases = _alias_map(args, manifest)
    if not args.author:
        raise UsageError("indicators needs at least one --author")
    authors = [resolve_author(a, commits, messages, aliases) for a in args.author]
    period = _period(args, commits, messages)
    if args.metric == "comm":
        graph = communication_graph(messages, _lexicon(args, manifest), period)
        obj = graph.ego(authors[0]) if authors[0] in graph.nodes else graph
    elif args.metric == "all":
        if args.format == "svg":
            raise UsageError("svg output needs a single --metric (changes, centrality, hours, comm)")
        obj = []
        for m in ("stats", "centrality", "hours"):
            obj.extend(_indicator_objects(args, commits, messages, authors, period, m))
    else:
        obj = _indicator_objects(args, commits, messages, authors, period, args.metric)
    render_report(obj, args.format, out)
    manifest.output(out)
    return 0


def cmd_cluster(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    commits, messages = _load_data(args, manifest)
    aliases = _alias_map(args, manifest)
    if not args.author or len(args.author) != 1:
        raise UsageError("cluster needs exactly one --author")
    account = resolve_author(args.author[0], commits, messages, aliases)
    period = _period(args, commits, messages)
    selected = [m for m in messages if m.timestamp in period]
    report = account_style_clusters(selected, account, _lexicon(args, manifest),
                                    args.k, args.seed)
    render_report(report, args.format, out)
    manifest.output(out)
    return 0


def cmd_detect(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    out.mkdir(parents=True, exist_ok=True)
    commits, messages = _load_data(args, manifest)
    deps = _load_deps(args, manifest)
    config = load_config(args.config)
    overrides = {}
    if args.window:
        overrides["window_days"] = args.window
        overrides["step_days"] = args.step or args.window
    elif args.step:
        overrides["step_days"] = args.step
    if overrides:
        config = replace(config, **overrides)
    run = run_detection(commits, messages, deps, config, _lexicon(args, manifest),
                        start=args.start, end=args.end)
    report_path = out / "detection.json"
    report_path.write_text(render(run, "json"), encoding="utf-8")
    ranking_path = out / "work_orders.csv"
    ranking_path.write_text(work_orders_csv(run.ranking()), encoding="utf-8")
    manifest.output(report_path)
    manifest.output(ranking_path)
    for order in run.ranking()[:args.top]:
        print(f"{order.score:10.1f}  {order.file}  "
              f"[{', '.join(sorted(order.vulnerability_classes)) or '-'}]")
    return DIAGNOSED_EXIT_CODE if run.has_errors else 0


def cmd_report(args, manifest: RunManifest) -> int:
    """Delimited indicator tables plus one SVG figure per indicator."""
    out = _out_path(args)
    out.mkdir(parents=True, exist_ok=True)
    commits, messages = _load_data(args, manifest)
    aliases = _alias_map(args, manifest)
    if not args.author:
        raise UsageError("report needs at least one --author")
    authors = [resolve_author(a, commits, messages, aliases) for a in args.author]
    period = _period(args, commits, messages)
    lexicon = _lexicon(args, manifest)
    diag = Diagnostics()

    tables = []
    for metric in ("stats", "centrality", "hours"):
        tables.extend(_indicator_objects(args, commits, messages, authors, period, metric))
    written = [render_report(tables, "csv", out / "indicators.csv"),
               render_report(tables, "json", out / "indicators.json")]
    for metric, name in (("changes", "changes.svg"), ("centrality", "centrality.svg"),
                         ("hours", "hours.svg")):
        objs = _indicator_objects(args, commits, messages, authors, period, metric)
        written.append(render_report(objs, "svg", out / name))
    graph = communication_graph(messages, lexicon, period)
    if authors[0] in graph.nodes:
        graph = graph.ego(authors[0])
    written.append(render_report(graph, "csv", out / "comm_graph.csv"))
    written.append(render_report(graph, "svg", out / "comm_graph.svg"))
    for author in authors:
        try:
            clusters = account_style_clusters([m for m in messages if m.timestamp in period],
                                              author, lexicon, args.k, args.seed)
        except InsufficientDataError as exc:
            diag.warn("cluster-skipped", f"{author}: {exc}")
            continue
        stem = "clusters-" + "".join(ch if ch.isalnum() else "_" for ch in author)
        written.append(render_report(clusters, "csv", out / f"{stem}.csv"))
        written.append(render_report(clusters, "json", out / f"{stem}.json"))
        written.append(render_report(clusters, "svg", out / f"{stem}.svg"))
    for path in written:
        manifest.output(path)
    if diag:
        path = out / "diagnostics.json"
        path.write_text(json.dumps(diag.to_json(), indent=2) + "\n", encoding="utf-8")
        manifest.output(path)
    return 0


def cmd_gen_fixture(args, manifest: RunManifest) -> int:
    out = _out_path(args)
    config = ScenarioConfig(seed=args.seed, n_authors=args.authors, n_months=args.months)
    history = generate_benign_history(config)
    truth = None
    if not args.benign:
        history, truth = inject_attack(history, AttackParams(), seed=args.seed)
    for path in write_history(history, out, truth).values():
        manifest.output(path)
    if args.numstat:
        path = out / "numstat.log"
        path.write_text(numstat_log(history.commits), encoding="utf-8")
        manifest.output(path)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "snapshot": cmd_snapshot,
    "indicators": cmd_indicators,
    "cluster": cmd_cluster,
    "detect": cmd_detect,
    "report": cmd_report,
    "gen-fixture": cmd_gen_fixture,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="TOML loop/rules config")
    common.add_argument("--alias-map", help="identity alias file (key = canonical)")
    common.add_argument("--lexicon", help="sentiment lexicon TSV")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=".", help="directory with commits.jsonl/messages.jsonl")
    data.add_argument("--deps", help="dependency edge list (default DATA/deps.txt)")
    data.add_argument("--from", dest="start", type=_instant, help="ISO start date (inclusive)")
    data.add_argument("--to", dest="end", type=_instant, help="ISO end date (exclusive)")
    data.add_argument("--window", type=_day_count, help="window length in days")
    data.add_argument("--step", type=_day_count, help="window step in days")
    data.add_argument("--author", action="append", help="author name, email or canonical id")
    data.add_argument("--k", type=_k_range, default=(2, 3, 4), help="k range, e.g. 2-4")
    data.add_argument("--format", choices=("csv", "json", "svg"), default="csv")

    parser = argparse.ArgumentParser(prog="sttwatch",
                                     description="Socio-technical supply-chain monitoring.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse git/mbox/issue exports")
    p.add_argument("--numstat", action="append", help="git log --numstat export")
    p.add_argument("--mbox", action="append", help="mailing-list mbox archive")
    p.add_argument("--issues", action="append", help="issue tracker JSON export")

    sub.add_parser("snapshot", parents=[common, data], help="build one topology snapshot")

    p = sub.add_parser("indicators", parents=[common, data], help="per-author indicators")
    p.add_argument("--metric", default="all",
                   choices=("all", "stats", "changes", "centrality", "hours", "comm"))
    p.add_argument("--mode", default="degree", choices=("degree", "eigenvector"))

    sub.add_parser("cluster", parents=[common, data], help="stylometric account clustering")

    p = sub.add_parser("detect", parents=[common, data], help="run the detection loop")
    p.add_argument("--top", type=int, default=10, help="work orders to print")

    p = sub.add_parser("report", parents=[common, data], help="tables and figures for authors")
    p.add_argument("--mode", default="degree", choices=("degree", "eigenvector"))

    p = sub.add_parser("gen-fixture", parents=[common], help="write a synthetic project")
    p.add_argument("--authors", type=int, default=20)
    p.add_argument("--months", type=int, default=24)
    p.add_argument("--benign", action="store_true", help="skip attack injection")
    p.add_argument("--numstat", action="store_true", help="also write a numstat export")
    return parser


def _colour(text: str, code: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "window", None) is None and args.command in ("indicators", "report"):
        args.window = 30
    manifest = RunManifest(args.command, args, argv)
    try:
        code = COMMANDS[args.command](args, manifest)
    except SttError as exc:
        print(_colour(f"error: {exc}", "31"), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(_colour(f"error: {exc}", "31"), file=sys.stderr)
        return IO_EXIT_CODE
    out = Path(args.out)
    try:
        manifest.write(_manifest_for(out))
    except OSError as exc:
        print(_colour(f"error: cannot write manifest: {exc}", "31"), file=sys.stderr)
        return IO_EXIT_CODE
    return code


if __name__ == "__main__":
    sys.exit(main())
