from __future__ import annotations

import io
from datetime import timedelta
from itertools import product

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttwatch.errors import ArgumentError, ConfigError, NotFoundError, SchemaError
from sttwatch.topology import (Snapshot, ThresholdConfig, TopologyDelta, build_snapshot,
                               dumps_dependency_edges, filter_influence_changes,
                               filter_relation_changes, load_dependency_edges, reachability,
                               relation, select_components, snapshot_delta)
from sttwatch.windows import Window

from conftest import T0, at, commit, message

W1 = Window(T0, T0 + timedelta(days=30))
W2 = Window(T0 + timedelta(days=30), T0 + timedelta(days=60))


def snap(window=W2, relations=None, influence=None, deps=()) -> Snapshot:
    relations = relations or {}
    influence = influence or {}
    authors = {a for rel in relations for a in rel} | {a for a, _ in influence}
    files = {s for _, s in influence} | {x for e in deps for x in e}
    return Snapshot(window=window, files=frozenset(files), dependencies=frozenset(deps),
                    authors=frozenset(authors), relations=frozenset(relations),
                    weights=dict(relations), maintainers=frozenset(influence),
                    influence=dict(influence))


# -- snapshots ---------------------------------------------------------------

def test_empty_window_gives_empty_snapshot(month):
    s = build_snapshot([], [], [], month)
    assert s.is_empty
    assert not (s.files or s.authors or s.relations or s.maintainers)


def test_influence_is_summed_per_author_and_file(month):
    commits = [commit("aaaa01", "a1", at(1), ("f1", 10, 2)),
               commit("aaaa02", "a1", at(2), ("f1", 3, 3))]
    s = build_snapshot(commits, [], [], month)
    assert s.maintainers == {("a1", "f1")}
    assert s.influence[("a1", "f1")] == (13, 5, 2)


def test_single_shared_thread_gives_one_message_pair(month):
    msgs = [message("m1", "a1", at(1), "t"), message("m2", "a2", at(2), "t", reply_to="m1")]
    s = build_snapshot([], msgs, [], month)
    assert s.relations == {("a1", "a2")}
    assert s.weights[("a1", "a2")][0] == 1


def test_lone_poster_has_no_relation(month):
    s = build_snapshot([], [message("m1", "a1", at(1), "t")], [], month)
    assert s.authors == {"a1"} and not s.relations


def test_records_outside_window_are_ignored(month):
    commits = [commit("aaaa01", "a1", at(-1), ("old", 1, 1)),
               commit("aaaa02", "a2", at(31), ("late", 1, 1))]
    s = build_snapshot(commits, [], [], month)
    assert not s.authors and not s.maintainers


def test_dependencies_restricted_to_known_files(month):
    commits = [commit("aaaa01", "a1", at(-5), ("lib.c", 1, 0)),
               commit("aaaa02", "a1", at(3), ("main.c", 1, 0))]
    deps = [("main.c", "lib.c"), ("main.c", "ghost.c")]
    s = build_snapshot(commits, [], deps, month)
    assert s.dependencies == {("main.c", "lib.c")}
    assert "lib.c" in s.files and "ghost.c" not in s.files


def test_snapshot_json_round_trip(month):
    commits = [commit("aaaa01", "a1", at(1), ("f1", 4, 1))]
    msgs = [message("m1", "a1", at(1), "t", "great work"),
            message("m2", "a2", at(2), "t", "thanks")]
    s = build_snapshot(commits, msgs, [], month)
    back = Snapshot.from_json(s.to_json())
    assert back.content_hash() == s.content_hash()
    assert back.influence == s.influence


def test_snapshot_rejects_relation_outside_authors():
    with pytest.raises(SchemaError):
        Snapshot(window=W1, relations=frozenset({("a", "b")}), weights={("a", "b"): (1.0, 0.0)})


def test_relation_needs_distinct_authors():
    assert relation("b", "a") == ("a", "b")
    with pytest.raises(ArgumentError):
        relation("a", "a")


def test_build_snapshot_requires_window():
    with pytest.raises(ConfigError):
        build_snapshot([], [], [], (T0, T0))


def test_dependency_edge_file_round_trip():
    text = "# deps\nmain.c -> lib.c\n\n  lib.c->util.h  # trailing\n"
    edges = load_dependency_edges(io.StringIO(text))
    assert edges == [("main.c", "lib.c"), ("lib.c", "util.h")]
    assert load_dependency_edges(io.StringIO(dumps_dependency_edges(edges))) == edges


# -- deltas ------------------------------------------------------------------

def test_self_delta_is_empty():
    s = snap(relations={("a", "b"): (3.0, 0.1)}, influence={("a", "f"): (1, 2, 1)})
    for eps in (0.0, 0.5, 100.0):
        assert snapshot_delta(s, s, eps).is_empty


def test_new_relation_is_reported():
    s1 = snap(W1)
    s2 = snap(W2, relations={("a1", "a2"): (1.0, 0.0)})
    assert ("a1", "a2") in snapshot_delta(s1, s2).new_or_changed_relations


def test_influence_delta_is_componentwise_difference():
    s1 = snap(W1, influence={("a1", "f1"): (10, 2, 1)})
    s2 = snap(W2, influence={("a1", "f1"): (500, 100, 3)})
    assert snapshot_delta(s1, s2).new_or_changed_influence[("a1", "f1")] == (490, 98, 2)


def test_weight_change_within_epsilon_is_ignored():
    s1 = snap(W1, relations={("a", "b"): (3.0, 0.10)})
    s2 = snap(W2, relations={("a", "b"): (3.0, 0.15)})
    assert snapshot_delta(s1, s2, 0.1).new_or_changed_relations == {}
    assert ("a", "b") in snapshot_delta(s1, s2, 0.01).new_or_changed_relations


def test_delta_set_differences():
    s1 = snap(W1, influence={("a", "old"): (1, 0, 1)})
    s2 = snap(W2, influence={("b", "new"): (1, 0, 1)})
    d = snapshot_delta(s1, s2)
    assert d.added_files == {"new"} and d.removed_files == {"old"}
    assert d.added_authors == {"b"} and d.removed_authors == {"a"}


def test_mismatched_schemas_raise():
    s1 = snap(W1)
    s2 = Snapshot(window=W2, activities=("additions",))
    with pytest.raises(SchemaError):
        snapshot_delta(s1, s2)


def test_out_of_order_snapshots_raise():
    with pytest.raises(ArgumentError):
        snapshot_delta(snap(W2), snap(W1))


# -- filters -----------------------------------------------------------------

def _delta(relations=None, influence=None) -> TopologyDelta:
    return snapshot_delta(snap(W1), snap(W2, relations=relations, influence=influence))


def test_empty_delta_selects_nothing():
    d = _delta()
    cfg = ThresholdConfig({"message_count": 0}, {"additions": 0})
    assert filter_relation_changes(d, snap(W2), cfg)[0] == frozenset()
    assert filter_influence_changes(d, cfg)[0] == frozenset()


def test_relation_filter_selects_files_of_both_members():
    s2 = snap(W2, relations={("a1", "a2"): (5.0, 0.0)},
              influence={("a1", "s1"): (1, 0, 1), ("a2", "s2"): (1, 0, 1), ("a3", "s3"): (9, 9, 9)})
    d = snapshot_delta(snap(W1), s2)
    files, prov = filter_relation_changes(d, s2, ThresholdConfig({"message_count": 3}))
    assert files == {"s1", "s2"}
    assert all(prov[s] for s in files)


def test_zero_thresholds_saturate_relation_filter():
    s2 = snap(W2, relations={("a1", "a2"): (1.0, -0.5)},
              influence={("a1", "s1"): (1, 0, 1), ("a2", "s2"): (1, 0, 1)})
    d = snapshot_delta(snap(W1), s2)
    cfg = ThresholdConfig({"message_count": 0, "mean_sentiment": 0})
    assert filter_relation_changes(d, s2, cfg)[0] == {"s1", "s2"}


def test_influence_filter_any_and_all():
    d = snapshot_delta(snap(W1, influence={("a1", "f1"): (10, 2, 1)}),
                       snap(W2, influence={("a1", "f1"): (500, 100, 3)}))
    assert filter_influence_changes(d, ThresholdConfig(influence_thresholds={"additions": 100}))[0] \
        == {"f1"}
    high = {"additions": 1000, "deletions": 1000, "file_changes": 1000}
    assert filter_influence_changes(
        d, ThresholdConfig(influence_thresholds=high, influence_aggregation="all"))[0] == frozenset()


def test_select_components_examples():
    assert select_components({"s1", "s2"}, {"s1"}).selected == {"s1"}
    assert select_components(set(), {"x", "y"}).selected == frozenset()
    assert select_components({"x", "y"}, {"x", "y"}).selected == {"x", "y"}


def test_select_components_merges_provenance():
    s2 = snap(W2, relations={("a1", "a2"): (5.0, 0.0)},
              influence={("a1", "s1"): (50, 0, 1), ("a2", "s2"): (1, 0, 1)})
    d = snapshot_delta(snap(W1), s2)
    cfg = ThresholdConfig({"message_count": 3}, {"additions": 10})
    cs = select_components(filter_relation_changes(d, s2, cfg), filter_influence_changes(d, cfg))
    assert cs.selected == {"s1"}
    assert {e.kind for e in cs.provenance["s1"]} == {"relation", "influence"}


def test_threshold_config_validation():
    with pytest.raises(ConfigError):
        ThresholdConfig(relation_aggregation="most")
    with pytest.raises(ConfigError):
        ThresholdConfig({"message_count": float("inf")})
    with pytest.raises(ConfigError):
        ThresholdConfig(weight_change_epsilon=-1)


# -- brute-force oracle ------------------------------------------------------

AUTHORS = [f"a{i}" for i in range(10)]
FILES = [f"s{i:02d}" for i in range(20)]


@st.composite
def snapshot_pairs(draw):
    def one(window):
        pairs = draw(st.sets(st.tuples(st.sampled_from(AUTHORS), st.sampled_from(AUTHORS))
                             .filter(lambda p: p[0] < p[1]), max_size=12))
        rel = {p: (float(draw(st.integers(0, 10))), draw(st.sampled_from([-0.5, 0.0, 0.5])))
               for p in pairs}
        maint = draw(st.sets(st.tuples(st.sampled_from(AUTHORS), st.sampled_from(FILES)),
                             max_size=25))
        inf = {m: tuple(draw(st.integers(0, 30)) for _ in range(3)) for m in maint}
        return snap(window, rel, inf)
    return one(W1), one(W2)


threshold_values = st.fixed_dictionaries({}, optional={
    "message_count": st.integers(0, 12), "mean_sentiment": st.sampled_from([-1.0, 0.0, 0.5])})
activity_values = st.fixed_dictionaries({}, optional={
    "additions": st.integers(-5, 30), "deletions": st.integers(-5, 30),
    "file_changes": st.integers(-2, 5)})


def oracle_relation(s1: Snapshot, s2: Snapshot, cfg: ThresholdConfig) -> set[str]:
    out = set()
    for rel, f in product(s2.relations, s2.files):
        w1, w2 = s1.weights.get(rel), s2.weights[rel]
        changed = w1 is None or any(abs(b - a) > cfg.weight_change_epsilon for a, b in zip(w1, w2))
        checks = [w2[i] >= cfg.relation_thresholds[p]
                  for i, p in enumerate(s2.parameters) if p in cfg.relation_thresholds]
        ok = bool(checks) and (any(checks) if cfg.relation_aggregation == "any" else all(checks))
        involved = (rel[0], f) in s2.maintainers or (rel[1], f) in s2.maintainers
        if changed and ok and involved:
            out.add(f)
    return out


def oracle_influence(s1: Snapshot, s2: Snapshot, cfg: ThresholdConfig) -> set[str]:
    out = set()
    for (a, f) in s2.maintainers:
        old = s1.influence.get((a, f))
        new = s2.influence[(a, f)]
        diff = [n - (o if old else 0) for n, o in zip(new, old or new)]
        if old is not None and not any(diff):
            continue
        checks = [diff[i] >= cfg.influence_thresholds[k]
                  for i, k in enumerate(s2.activities) if k in cfg.influence_thresholds]
        if checks and (any(checks) if cfg.influence_aggregation == "any" else all(checks)):
            out.add(f)
    return out


@settings(max_examples=150, deadline=None)
@given(snapshot_pairs(), threshold_values, activity_values,
       st.sampled_from(["any", "all"]), st.sampled_from(["any", "all"]))
def test_filters_match_exhaustive_enumeration(pair, rel_t, inf_t, rel_agg, inf_agg):
    s1, s2 = pair
    cfg = ThresholdConfig(rel_t, inf_t, rel_agg, inf_agg)
    d = snapshot_delta(s1, s2, cfg.weight_change_epsilon)
    s_r, prov_r = filter_relation_changes(d, s2, cfg)
    s_i, prov_i = filter_influence_changes(d, cfg)
    assert set(s_r) == oracle_relation(s1, s2, cfg)
    assert set(s_i) == oracle_influence(s1, s2, cfg)
    assert all(prov_r[s] for s in s_r) and all(prov_i[s] for s in s_i)
    cs = select_components((s_r, prov_r), (s_i, prov_i))
    assert cs.selected <= cs.s_r and cs.selected <= cs.s_i
    assert cs.selected == s_r & s_i


@settings(max_examples=100, deadline=None)
@given(snapshot_pairs(), st.integers(0, 10), st.integers(0, 10), st.integers(0, 20),
       st.integers(0, 20))
def test_raising_thresholds_never_enlarges(pair, msg_lo, msg_hi, add_lo, add_hi):
    s1, s2 = pair
    d = snapshot_delta(s1, s2)
    lo = ThresholdConfig({"message_count": msg_lo}, {"additions": add_lo})
    hi = ThresholdConfig({"message_count": msg_lo + msg_hi}, {"additions": add_lo + add_hi})
    assert filter_relation_changes(d, s2, hi)[0] <= filter_relation_changes(d, s2, lo)[0]
    assert filter_influence_changes(d, hi)[0] <= filter_influence_changes(d, lo)[0]


@settings(max_examples=60, deadline=None)
@given(snapshot_pairs(), st.floats(0, 5))
def test_self_delta_empty_property(pair, eps):
    s = pair[1]
    assert snapshot_delta(s, s, eps).is_empty


# -- reachability ------------------------------------------------------------

def test_reachability_isolated_node():
    t = reachability("s1", [], max_depth=3)
    assert t.upstream == frozenset() and t.downstream == frozenset()


def test_reachability_chain_depth_one():
    t = reachability("s2", [("s1", "s2"), ("s2", "s3")], max_depth=1)
    assert t.upstream_layers == (frozenset({"s3"}),)
    assert t.downstream_layers == (frozenset({"s1"}),)


def test_reachability_cycle_visits_once():
    t = reachability("s1", [("s1", "s2"), ("s2", "s1")], max_depth=5)
    assert t.upstream_layers == (frozenset({"s2"}),)
    assert t.downstream_layers == (frozenset({"s2"}),)


def test_reachability_unknown_origin():
    with pytest.raises(NotFoundError):
        reachability("nope", [("a", "b")], files={"a", "b"})
    with pytest.raises(ArgumentError):
        reachability("a", [], max_depth=0)


edge_lists = st.lists(st.tuples(st.sampled_from(FILES[:12]), st.sampled_from(FILES[:12]))
                      .filter(lambda e: e[0] != e[1]), max_size=40)


@settings(max_examples=150, deadline=None)
@given(edge_lists, st.sampled_from(FILES[:12]), st.integers(1, 6))
def test_reachability_matches_shortest_paths(edges, origin, depth):
    g = nx.DiGraph()
    g.add_nodes_from(FILES[:12])
    g.add_edges_from(edges)
    t = reachability(origin, edges, max_depth=depth)
    for layers, graph in ((t.upstream_layers, g), (t.downstream_layers, g.reverse())):
        dist = nx.single_source_shortest_path_length(graph, origin, cutoff=depth)
        expected: dict[int, set[str]] = {}
        for node, hop in dist.items():
            if hop:
                expected.setdefault(hop, set()).add(node)
        assert [set(layer) for layer in layers] == [expected[h] for h in sorted(expected)]
        union = set().union(*layers) if layers else set()
        assert sum(len(layer) for layer in layers) == len(union) <= 11
        assert origin not in union
