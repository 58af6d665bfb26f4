"""Streaming delay mechanism for pseudonymous events.

Each event is classified as batched or unbatched and then delayed by an
independent draw from the batched or unbatched half of a
:class:`~delaymask.distributions.NoisePair` built at budget ``eps / 2``.
Three classification modes are supported:

``simultaneous``
    batched iff the same actor has another event on a different item at the
    exact same time.
``hold_window``
    every event is held for ``beta``; it is batched iff the same actor has an
    event on a different item within ``beta`` of it. The noise pair uses gap
    ``gap + beta``.
``self_report``
    the actor declares up front whether more events follow; a declaring
    event and any of the actor's events within ``beta`` after it are
    batched. The noise pair uses gap ``gap + beta`` when ``beta > 0``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from delaymask.distributions import NoisePair, build_pair
from delaymask.errors import (
    ConfigError,
    EmptyClass,
    MissingDeclaredFlag,
    MissingGroupGap,
    UnsortedStream,
)
from delaymask.frontier import eta_star

MODES = ("simultaneous", "hold_window", "self_report")


@dataclass(frozen=True)
class Event:
    id: str
    actor: str
    item: str
    t: float
    declared_batch: bool | None = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ConfigError(f"event {self.id!r}: t must be finite and non-negative")


@dataclass(frozen=True)
class PrivacyConfig:
    """Privacy budget ``eps``, neighbor gap ``gap``, batching window ``beta``,
    batched-delay weight ``w`` and classification ``mode``."""

    eps: float
    gap: float
    beta: float = 0.0
    w: float = 1.0
    mode: str = "simultaneous"

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ConfigError(f"eps must be positive, got {self.eps!r}")
        if not (math.isfinite(self.gap) and self.gap > 0):
            raise ConfigError(f"gap must be positive, got {self.gap!r}")
        if not 0 <= self.beta < self.gap:
            raise ConfigError(f"beta must satisfy 0 <= beta < gap, got beta={self.beta!r}")
        if not 0 <= self.w <= 1:
            raise ConfigError(f"w must lie in [0, 1], got {self.w!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def hold(self) -> float:
        return self.beta if self.mode == "hold_window" else 0.0

    @property
    def effective_gap(self) -> float:
        if self.mode in ("hold_window", "self_report") and self.beta > 0:
            return self.gap + self.beta
        return self.gap


@dataclass(frozen=True)
class PostedEvent:
    event: Event
    batched: bool
    delay: float
    post_t: float
    flags: tuple[str, ...] = ()

    @property
    def total_delay(self) -> float:
        return self.post_t - self.event.t


def optimal_eta(eps: float, w: float) -> float:
    """Zero-inflation parameter minimizing ``w E[B] + (1 - w) E[U]`` for a
    mechanism with privacy budget ``eps`` (the pair runs at ``eps / 2``)."""
    return eta_star(eps / 2.0, w)


def check_sorted(stream: Sequence[Event]) -> None:
    for k in range(1, len(stream)):
        a, b = stream[k - 1], stream[k]
        if (b.t, b.id) < (a.t, a.id):
            raise UnsortedStream(
                f"event {b.id!r} at t={b.t} follows {a.id!r} at t={a.t}; sort by (t, id)")


def sort_stream(events: Iterable[Event]) -> list[Event]:
    return sorted(events, key=lambda e: (e.t, e.id))


def classify_batches(stream: Sequence[Event], beta: float) -> np.ndarray:
    """Boolean label per event: True iff the same actor has another event on
    a different item within ``beta`` (closed window; ``beta = 0`` means
    exact simultaneity)."""
    check_sorted(stream)
    labels = np.zeros(len(stream), dtype=bool)
    by_actor: dict[str, list[int]] = defaultdict(list)
    for k, e in enumerate(stream):
        by_actor[e.actor].append(k)
    for idx in by_actor.values():
        if len(idx) < 2:
            continue
        t = np.array([stream[k].t for k in idx])
        items = [stream[k].item for k in idx]
        n = len(idx)
        # next_change[j]: first position after j whose item differs from item[j]
        next_change = np.full(n, n)
        for j in range(n - 2, -1, -1):
            next_change[j] = j + 1 if items[j + 1] != items[j] else next_change[j + 1]
        lo = np.searchsorted(t, t - beta, side="left")
        hi = np.searchsorted(t, t + beta, side="right")
        labels[np.asarray(idx)] = next_change[lo] < hi
    return labels


def _self_report_labels(stream, beta):
    labels = np.zeros(len(stream), dtype=bool)
    unpaired = np.zeros(len(stream), dtype=bool)
    last_declared: dict[str, float] = {}
    pending: dict[str, int] = {}
    for k, e in enumerate(stream):
        if e.declared_batch is None:
            raise MissingDeclaredFlag(f"event {e.id!r} has no declared_batch flag")
        since = last_declared.get(e.actor)
        if since is not None and e.t - since <= beta:
            labels[k] = True
            pending.pop(e.actor, None)
        if e.declared_batch:
            labels[k] = True
            last_declared[e.actor] = e.t
            pending[e.actor] = k
    # A declaration with no follow-up keeps its batched label but is flagged.
    for k in pending.values():
        unpaired[k] = True
    return labels, unpaired


def resolve_pair(config: PrivacyConfig, family: str) -> NoisePair:
    eta = optimal_eta(config.eps, config.w) if family == "ziu" else None
    return build_pair(family, config.eps / 2.0, config.effective_gap, eta)


def classify(stream: Sequence[Event], config: PrivacyConfig):
    """Labels (and self-report flags) the mechanism would assign."""
    check_sorted(stream)
    if config.mode == "self_report":
        return _self_report_labels(stream, config.beta)
    beta = config.beta if config.mode == "hold_window" else 0.0
    return classify_batches(stream, beta), np.zeros(len(stream), dtype=bool)


def _draw_delays(pair, labels, rng):
    delays = np.empty(labels.shape, dtype=float)
    nb = int(labels.sum())
    delays[labels] = pair.batched.sample(rng, nb)
    delays[~labels] = pair.unbatched.sample(rng, labels.size - nb)
    return delays


def run_mechanism(stream: Sequence[Event], config: PrivacyConfig, family: str,
                  rng: np.random.Generator) -> list[PostedEvent]:
    """Delay every event of a sorted stream and return posted events sorted by
    ``(post_t, id)``."""
    labels, unpaired = classify(stream, config)
    if not stream:
        return []
    pair = resolve_pair(config, family)
    delays = _draw_delays(pair, labels, rng)
    hold = config.hold
    posted = [
        PostedEvent(e, bool(labels[k]), float(delays[k]), e.t + hold + float(delays[k]),
                    ("unpaired_declaration",) if unpaired[k] else ())
        for k, e in enumerate(stream)
    ]
    posted.sort(key=lambda p: (p.post_t, p.event.id))
    return posted


def run_mechanism_grouped(stream: Sequence[Event], config: PrivacyConfig, family: str,
                          rng: np.random.Generator, group_key: Callable[[Event], Hashable],
                          gaps: Mapping[Hashable, float],
                          default_gap: float | None = None) -> list[PostedEvent]:
    """Run the mechanism independently per group with a group-specific gap.

    Groups are processed in sorted key order so a seeded ``rng`` gives the
    same result on every run. Groups missing from ``gaps`` use
    ``default_gap`` or raise :class:`MissingGroupGap`.
    """
    check_sorted(stream)
    groups: dict[Hashable, list[Event]] = defaultdict(list)
    for e in stream:
        groups[group_key(e)].append(e)
    out: list[PostedEvent] = []
    for key in sorted(groups, key=str):
        g = gaps.get(key, default_gap)
        if g is None:
            raise MissingGroupGap(f"no gap for group {key!r}")
        out.extend(run_mechanism(groups[key], replace(config, gap=float(g)), family, rng))
    out.sort(key=lambda p: (p.post_t, p.event.id))
    return out


def replay(stream: Sequence[Event], config: PrivacyConfig, family: str,
           rng: np.random.Generator, n_runs: int) -> np.ndarray:
    """Post times of ``n_runs`` independent runs, shape ``(n_runs, len(stream))``
    in input order. Classification is deterministic, so it is done once."""
    labels, _ = classify(stream, config)
    pair = resolve_pair(config, family)
    t = np.array([e.t for e in stream]) + config.hold
    out = np.empty((n_runs, len(stream)))
    nb = int(labels.sum())
    if nb:
        out[:, labels] = pair.batched.sample(rng, (n_runs, nb))
    if len(stream) - nb:
        out[:, ~labels] = pair.unbatched.sample(rng, (n_runs, len(stream) - nb))
    return out + t


@dataclass
class DelayStats:
    """Summary of total delays ``post_t - t`` for one class of events."""

    n: int
    mean: float
    max: float
    delays: np.ndarray = field(repr=False)

    def cdf(self, x):
        return np.searchsorted(self.delays, x, side="right") / self.n

    def cdf_points(self, n_points=101):
        p = np.linspace(0.0, 1.0, n_points)
        return np.quantile(self.delays, p, method="inverted_cdf"), p

    def to_dict(self, n_points=101):
        x, p = self.cdf_points(n_points)
        return {"n": self.n, "mean": self.mean, "max": self.max,
                "cdf": {"delay": x.tolist(), "p": p.tolist()}}


def delay_stats(posted: Sequence[PostedEvent],
                classes: Sequence[str] = ("batched", "unbatched")) -> dict[str, DelayStats]:
    out = {}
    for cls in classes:
        if cls not in ("batched", "unbatched", "all"):
            raise ConfigError(f"unknown class {cls!r}")
        sel = [p.total_delay for p in posted
               if cls == "all" or p.batched == (cls == "batched")]
        if not sel:
            raise EmptyClass(f"no {cls} events in the posted stream")
        d = np.sort(np.asarray(sel, dtype=float))
        out[cls] = DelayStats(d.size, float(d.mean()), float(d[-1]), d)
    return out
