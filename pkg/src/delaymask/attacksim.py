"""Synthetic batched streams and threshold linkage attacks.

The adversary looks at posted times only. For a cutoff ``c`` it calls a
pair of events on different items "batched" when their post times are at
most ``c`` apart; precision and recall are counted over pairs. Pairs are
only formed inside a comparison scope (a group of items, say one category
or one output address family), because that is how a real observer would
narrow the candidates.

Synthetic items are named ``"<group>:<item>"`` so :func:`item_group` can
recover the scope from an event alone.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from delaymask.errors import ConfigError, EmptyTruth, MissingGroupGap
from delaymask.mechanism import Event, PostedEvent, sort_stream

Pair = frozenset


@dataclass(frozen=True)
class SyntheticConfig:
    """Per-actor Poisson arrivals; each arrival spawns a batch partner on
    another item of the same group with probability ``batch_prob``.

    ``group_weights`` sets how often each item group is picked, which is the
    easy way to get groups with very different inter-arrival gaps.
    """

    horizon: float
    base_rate: float
    n_actors: int
    n_items: int
    batch_prob: float
    intra_batch_jitter: float = 0.0
    seed: int = 0
    n_groups: int = 1
    group_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("horizon", "base_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("n_actors", "n_items", "n_groups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not 0 <= self.batch_prob <= 1:
            raise ConfigError("batch_prob must lie in [0, 1]")
        if not self.intra_batch_jitter >= 0:
            raise ConfigError("intra_batch_jitter must be non-negative")
        if self.batch_prob > 0 and self.n_items < 2 * self.n_groups:
            raise ConfigError("batching needs at least two items per group")
        if self.group_weights is not None:
            w = np.asarray(self.group_weights, dtype=float)
            if w.size != self.n_groups or np.any(w < 0) or w.sum() <= 0:
                raise ConfigError("group_weights must be n_groups non-negative numbers")

    def items_by_group(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.n_groups)]
        for k in range(self.n_items):
            groups[k % self.n_groups].append(f"g{k % self.n_groups}:i{k}")
        return groups

    def expected_events(self) -> float:
        return self.n_actors * self.base_rate * self.horizon * (1.0 + self.batch_prob)


def item_group(item: str) -> str:
    return item.split(":", 1)[0]


def event_group(e) -> str:
    ev = e.event if isinstance(e, PostedEvent) else e
    return item_group(ev.item)


def generate_stream(config: SyntheticConfig) -> tuple[list[Event], set[Pair]]:
    """Sorted events and the set of true batched id pairs."""
    rng = np.random.default_rng(config.seed)
    groups = config.items_by_group()
    weights = np.ones(config.n_groups) if config.group_weights is None else np.asarray(
        config.group_weights, dtype=float)
    weights = weights / weights.sum()
    events: list[Event] = []
    truth: set[Pair] = set()
    for a in range(config.n_actors):
        actor = f"a{a}"
        n = rng.poisson(config.base_rate * config.horizon)
        times = np.sort(rng.uniform(0.0, config.horizon, n))
        gidx = rng.choice(config.n_groups, size=n, p=weights)
        spawn = rng.random(n) < config.batch_prob
        jitter = rng.uniform(0.0, config.intra_batch_jitter, n) if config.intra_batch_jitter else np.zeros(n)
        for k in range(n):
            items = groups[gidx[k]]
            first = int(rng.integers(len(items)))
            eid = f"{actor}-{k}"
            events.append(Event(eid, actor, items[first], float(times[k])))
            if spawn[k]:
                other = int(rng.integers(len(items) - 1))
                other += other >= first
                pid = f"{eid}b"
                events.append(Event(pid, actor, items[other], float(times[k] + jitter[k])))
                truth.add(Pair((eid, pid)))
    return sort_stream(events), truth


def no_mechanism(stream: Sequence[Event]) -> list[PostedEvent]:
    """Post every event immediately; the attacker's best case."""
    return [PostedEvent(e, False, 0.0, e.t) for e in stream]


@dataclass
class AttackReport:
    curve: list[tuple[float, float, float]]
    ground_truth_counts: dict = field(default_factory=dict)

    def precision_at_recall(self, recall: float) -> float:
        """Interpolated precision: best precision at any recall ``>= recall``."""
        ok = [p for _, p, r in self.curve if r >= recall - 1e-12]
        return max(ok) if ok else 0.0

    def pr_auc(self) -> float:
        """Area under the interpolated precision/recall step curve."""
        pts = sorted({(r, p) for _, p, r in self.curve})
        if not pts:
            return 0.0
        rec = np.array([0.0] + [r for r, _ in pts])
        prec = np.array([pts[0][1]] + [p for _, p in pts])
        env = np.maximum.accumulate(prec[::-1])[::-1]
        return float(np.sum(np.diff(rec) * env[1:]))

    def to_dict(self):
        return {"curve": [{"threshold": c, "precision": p, "recall": r} for c, p, r in self.curve],
                "ground_truth_counts": dict(self.ground_truth_counts),
                "pr_auc": self.pr_auc()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for c, p, r in self.curve:
            w.writerow([repr(float(c)), repr(float(p)), repr(float(r))])
        return buf.getvalue()


def _pairs_within(t_sorted: np.ndarray, c: float) -> int:
    if not math.isfinite(c):
        n = t_sorted.size
        return n * (n - 1) // 2
    hi = np.searchsorted(t_sorted, t_sorted + c, side="right")
    return int(np.sum(hi - np.arange(t_sorted.size) - 1))


class _Scope:
    """Post times of one comparison scope, ready for pair counting."""

    def __init__(self, posted: Sequence[PostedEvent]):
        self.t = np.sort([p.post_t for p in posted])
        by_item: dict[str, list[float]] = defaultdict(list)
        for p in posted:
            by_item[p.event.item].append(p.post_t)
        self.by_item = [np.sort(v) for v in by_item.values() if len(v) > 1]

    def cross_item_within(self, c: float) -> int:
        return _pairs_within(self.t, c) - sum(_pairs_within(v, c) for v in self.by_item)

    def n_pairs(self) -> int:
        return self.cross_item_within(math.inf)


def _split(posted, scope):
    groups: dict[Hashable, list[PostedEvent]] = defaultdict(list)
    for p in posted:
        groups[None if scope is None else scope(p.event)].append(p)
    return groups


def _truth_gaps(posted, truth, scope):
    """For each in-scope true pair: (group, |post time difference|)."""
    index = {p.event.id: p for p in posted}
    out = []
    for pair in truth:
        a, b = (index.get(x) for x in pair)
        if a is None or b is None:
            raise ConfigError(f"posted stream does not cover truth pair {sorted(pair)}")
        if a.event.item == b.event.item:
            continue
        ga = None if scope is None else scope(a.event)
        gb = None if scope is None else scope(b.event)
        if ga == gb:
            out.append((ga, abs(a.post_t - b.post_t)))
    if not out:
        raise EmptyTruth("no true batched pairs inside the comparison scope")
    return out


def _sweep(posted, truth, scope, cutoffs_for: Callable[[Hashable, float], float], knobs):
    groups = _split(posted, scope)
    scopes = {g: _Scope(v) for g, v in groups.items()}
    tgaps = _truth_gaps(posted, truth, scope)
    n_true = len(tgaps)
    n_pairs = sum(s.n_pairs() for s in scopes.values())
    curve = []
    for knob in knobs:
        classified = sum(s.cross_item_within(cutoffs_for(g, knob)) for g, s in scopes.items())
        tp = sum(1 for g, d in tgaps if d <= cutoffs_for(g, knob))
        precision = tp / classified if classified else 1.0
        curve.append((float(knob), float(precision), tp / n_true))
    counts = {"n_true_pairs": n_true, "n_candidate_pairs": n_pairs, "n_groups": len(scopes)}
    return AttackReport(curve, counts)


def basic_attack(posted: Sequence[PostedEvent], truth: set[Pair], thresholds: Sequence[float],
                 scope: Callable[[Event], Hashable] | None = None) -> AttackReport:
    """Single cutoff ``c`` for every scope. ``scope=None`` compares all pairs
    of the stream."""
    return _sweep(posted, truth, scope, lambda g, c: c, sorted(thresholds))


def informed_attack(posted: Sequence[PostedEvent], truth: set[Pair],
                    per_group_gap: Mapping[Hashable, float], coeffs: Sequence[float],
                    scope: Callable[[Event], Hashable] = event_group) -> AttackReport:
    """Cutoff ``k * g(group)`` in each scope, swept over ``k``."""
    groups = _split(posted, scope)
    missing = [g for g in groups if g not in per_group_gap]
    if missing:
        raise MissingGroupGap(f"no gap for groups {sorted(map(str, missing))}")
    return _sweep(posted, truth, scope, lambda g, k: k * per_group_gap[g], sorted(coeffs))


def brute_force_attack(posted, truth, threshold, scope=None):
    """O(n^2) ``(precision, recall)`` reference for one cutoff."""
    key = (lambda e: None) if scope is None else scope
    tp = fp = 0
    for i, a in enumerate(posted):
        for b in posted[i + 1:]:
            if a.event.item == b.event.item or key(a.event) != key(b.event):
                continue
            if abs(a.post_t - b.post_t) <= threshold:
                if Pair((a.event.id, b.event.id)) in truth:
                    tp += 1
                else:
                    fp += 1
    n_true = sum(1 for _, _ in _truth_gaps(posted, truth, scope))
    return (tp / (tp + fp) if tp + fp else 1.0), tp / n_true
