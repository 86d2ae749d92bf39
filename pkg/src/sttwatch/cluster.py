"""k-means over standardised writing-style vectors, to tell whether one
account's messages split into more than one writing style."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArgumentError, InsufficientDataError, UndefinedScoreError
from .ingest import MessageRecord
from .textmetrics import Lexicon, StyleFeatures, style_features

WEAK_SEPARATION = 0.25


class KMeansFit(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ArgumentError("points must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("points must be finite")
    return x


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centroids = [x[rng.integers(n)]]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centroids.append(x[idx])
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centroids)


def _update(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = len(centroids)
    labels = labels.copy()
    new = centroids.copy()
    for j in range(k):
        members = labels == j
        if members.any():
            continue
        # empty cluster: steal the point farthest from its own centroid
        d = ((x - centroids[labels]) ** 2).sum(axis=1)
        sizes = np.bincount(labels, minlength=k)
        d[sizes[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        labels[far] = j
    for j in range(k):
        new[j] = x[labels == j].mean(axis=0)
    return new, labels


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iters: int = 300,
          tolerance: float = 1e-10) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd iterations from ``centroids``; returns labels, centroids and
    the inertia after every assignment step."""
    centroids = np.array(centroids, dtype=float)
    labels = _sq_dists(x, centroids).argmin(axis=1)
    history = [float(_sq_dists(x, centroids)[np.arange(len(x)), labels].sum())]
    for _ in range(max_iters):
        new, labels = _update(x, labels, centroids)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        new_labels = _sq_dists(x, centroids).argmin(axis=1)
        history.append(float(_sq_dists(x, centroids)[np.arange(len(x)), new_labels].sum()))
        converged = np.array_equal(new_labels, labels) or shift < tolerance
        labels = new_labels
        if converged:
            break
    centroids, labels = _update(x, labels, centroids)
    return labels, centroids, history


def hartigan_refine(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray,
                    max_passes: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Single-point transfers that strictly lower inertia, alternated with
    Lloyd steps until neither changes anything."""
    labels = labels.copy()
    centroids = centroids.copy()
    k = len(centroids)
    counts = np.bincount(labels, minlength=k).astype(float)
    for _ in range(max_passes):
        moved = False
        for i in range(len(x)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d = ((centroids - x[i]) ** 2).sum(axis=1)
            leave = counts[a] / (counts[a] - 1) * d[a]
            join = counts / (counts + 1) * d
            join[a] = np.inf
            b = int(np.argmin(join))
            if join[b] < leave * (1 - 1e-12):
                centroids[a] = (centroids[a] * counts[a] - x[i]) / (counts[a] - 1)
                centroids[b] = (centroids[b] * counts[b] + x[i]) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
        if not moved:
            break
        labels, centroids, _ = lloyd(x, centroids)
        counts = np.bincount(labels, minlength=k).astype(float)
    return labels, centroids


def _canonical_labels(labels: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = list(dict.fromkeys(labels.tolist()))
    order += [j for j in range(len(centroids)) if j not in order]
    remap = np.empty(len(centroids), dtype=int)
    for new, old in enumerate(order):
        remap[old] = new
    return remap[labels], centroids[order]


def kmeans_fit(points, k: int, seed: int = 0, max_iters: int = 300,
               tolerance: float = 1e-10, n_init: int = 10) -> KMeansFit:
    """Best of ``n_init`` seeded k-means++ / Lloyd runs (lowest inertia, ties
    to the earliest restart). Labels are numbered by first appearance."""
    x = _as_points(points)
    if k <= 0:
        raise ArgumentError("k must be positive")
    if k > len(x):
        raise ArgumentError(f"k={k} exceeds the number of points ({len(x)})")
    best: KMeansFit | None = None
    for child in np.random.SeedSequence(seed).spawn(max(1, n_init)):
        rng = np.random.default_rng(child)
        labels, centroids, _ = lloyd(x, kmeans_plus_plus(x, k, rng), max_iters, tolerance)
        labels, centroids = hartigan_refine(x, labels, centroids)
        inertia = float(((x - centroids[labels]) ** 2).sum())
        if best is None or inertia < best.inertia - 1e-12 * max(1.0, best.inertia):
            best = KMeansFit(labels, centroids, inertia)
    labels, centroids = _canonical_labels(best.labels, best.centroids)
    return KMeansFit(labels, centroids, best.inertia)


def silhouette_score(points, labels) -> float:
    """Mean silhouette with Euclidean distance; singleton clusters score 0."""
    x = _as_points(points)
    labels = np.asarray(labels)
    if len(labels) != len(x):
        raise ArgumentError("one label per point required")
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise UndefinedScoreError("silhouette needs at least two non-empty clusters")
    dist = np.sqrt(_sq_dists(x, x))
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labels == c].mean() for c in clusters if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def standardize(matrix) -> tuple[np.ndarray, list[int], list[int]]:
    """z-score columns (sample std). Returns (z, kept column indices, dropped)."""
    x = _as_points(matrix)
    if len(x) < 2:
        raise InsufficientDataError("standardisation needs at least two rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    kept = [j for j in range(x.shape[1]) if std[j] > 1e-12 * max(1.0, abs(mean[j]))]
    dropped = [j for j in range(x.shape[1]) if j not in kept]
    z = (x[:, kept] - mean[kept]) / std[kept]
    return z, kept, dropped


def purity(labels: Sequence, truth: Sequence) -> float:
    """Fraction of points whose label's majority truth class matches theirs."""
    by_label: dict = {}
    for lab, t in zip(labels, truth):
        by_label.setdefault(lab, Counter())[t] += 1
    return sum(c.most_common(1)[0][1] for c in by_label.values()) / len(labels)


@dataclass(frozen=True)
class ClusterReport:
    account: str
    k_evaluated: tuple[tuple[int, float], ...]
    chosen_k: int
    assignments: tuple[tuple[str, int], ...]  # (message_id, label)
    centroids: tuple[tuple[float, ...], ...]
    timeline: tuple[tuple[datetime, int, float], ...]  # (timestamp, label, polarity)
    feature_columns: tuple[str, ...] = ()
    dropped_columns: tuple[str, ...] = ()
    degenerate_messages: tuple[str, ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def labels(self) -> list[int]:
        return [lab for _, lab in self.assignments]

    def to_json(self) -> dict:
        return {
            "kind": "cluster_report",
            "account": self.account,
            "k_evaluated": [{"k": k, "silhouette": s} for k, s in self.k_evaluated],
            "chosen_k": self.chosen_k,
            "feature_columns": list(self.feature_columns),
            "dropped_columns": list(self.dropped_columns),
            "degenerate_messages": list(self.degenerate_messages),
            "assignments": [{"message_id": m, "label": lab} for m, lab in self.assignments],
            "centroids": [list(c) for c in self.centroids],
            "timeline": [{"timestamp": ts.isoformat(), "label": lab, "polarity": p}
                         for ts, lab, p in self.timeline],
            "notes": list(self.notes),
        }

    def timeline_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("timestamp", "message_id", "label", "polarity"))
        for (ts, lab, pol), (mid, _) in zip(self.timeline, self.assignments):
            writer.writerow((ts.isoformat(), mid, lab, pol))
        return buf.getvalue()


def account_style_clusters(messages: Sequence[MessageRecord], account: str,
                           lexicon: Lexicon | None = None,
                           k_range: Sequence[int] = (2, 3, 4), seed: int = 0,
                           n_init: int = 10) -> ClusterReport:
    if not k_range or min(k_range) < 2 or max(k_range) > 6:
        raise ArgumentError("k_range must lie within [2, 6]")
    mine = sorted((m for m in messages if m.canonical_author == account),
                  key=lambda m: (m.timestamp, m.message_id))
    rows: list[tuple[MessageRecord, StyleFeatures]] = []
    degenerate = []
    for m in mine:
        feats = style_features(m.body, lexicon)
        if feats.degenerate:
            degenerate.append(m.message_id)
        else:
            rows.append((m, feats))
    if len(rows) < 4:
        raise InsufficientDataError(
            f"{account!r} has {len(rows)} usable messages; at least 4 are needed")

    names = StyleFeatures.names()
    z, kept, dropped = standardize([f.vector() for _, f in rows])
    if not kept:
        raise InsufficientDataError("every style feature is constant for this account")

    evaluated = []
    fits = {}
    for k in sorted(set(k_range)):
        if k > len(rows):
            continue
        fit = kmeans_fit(z, k, seed=seed, n_init=n_init)
        try:
            score = silhouette_score(z, fit.labels)
        except UndefinedScoreError:
            continue
        evaluated.append((k, score))
        fits[k] = fit
    if not evaluated:
        raise InsufficientDataError("no k in range produced a scorable clustering")
    chosen_k, best = max(evaluated, key=lambda ks: (ks[1], -ks[0]))
    fit = fits[chosen_k]
    notes = []
    if best < WEAK_SEPARATION:
        notes.append(f"weak separation: best silhouette {best:.3f} < {WEAK_SEPARATION}")
    labels = [int(v) for v in fit.labels]
    return ClusterReport(
        account=account,
        k_evaluated=tuple(evaluated),
        chosen_k=chosen_k,
        assignments=tuple((m.message_id, lab) for (m, _), lab in zip(rows, labels)),
        centroids=tuple(tuple(float(v) for v in c) for c in fit.centroids),
        timeline=tuple((m.timestamp, lab, f.polarity) for (m, f), lab in zip(rows, labels)),
        feature_columns=tuple(names[j] for j in kept),
        dropped_columns=tuple(names[j] for j in dropped),
        degenerate_messages=tuple(degenerate),
        notes=tuple(notes),
    )
