"""Choosing the gap from data, batching statistics and linkage posteriors.

If a mechanism is ``(eps, g)``-one-sided private, any test for "these two
events were batched" has ``power <= exp(eps) / P(g) * type_I`` where ``P``
is the CDF of inter-arrival times. The error-crossover rate of such a test
is therefore at least ``P(g) / (P(g) + exp(eps))``, and :func:`choose_gap`
picks the smallest empirical quantile that guarantees a requested crossover.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Sequence

import numpy as np

from delaymask.errors import (
    ConfigError,
    EmptyStream,
    InfeasibleTarget,
    InsufficientData,
    ZeroDenominator,
)
from delaymask.mechanism import Event

DEFAULT_GAP_MINUTES = 10.0


class EmpiricalCdf:
    """Right-continuous empirical CDF of a sample of gaps."""

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise InsufficientData("empirical CDF needs at least one sample")
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ConfigError("gap samples must be finite and non-negative")
        self.samples = x

    @property
    def n(self):
        return self.samples.size

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.n

    def quantile(self, level):
        """Smallest sample value whose CDF is at least ``level``."""
        if not 0 <= level <= 1:
            raise ConfigError(f"level must lie in [0, 1], got {level!r}")
        k = max(int(math.ceil(level * self.n - 1e-9)), 1)
        return float(self.samples[k - 1])


def _key_fn(by):
    if by is None or callable(by):
        return by
    return lambda e: getattr(e, by)


def inter_arrival_samples(stream: Sequence[Event], by=None):
    """Gaps between consecutive arrival times.

    With ``by=None`` the whole stream is one scope and an array is returned.
    Otherwise ``by`` is an attribute name (``"actor"``, ``"item"``) or a
    callable, and the result maps each group with at least two events to its
    gap array.
    """
    key = _key_fn(by)
    if key is None:
        if len(stream) < 2:
            raise InsufficientData("need at least two events to measure inter-arrival gaps")
        return np.diff(np.sort([e.t for e in stream]))
    groups: dict[Hashable, list[float]] = defaultdict(list)
    for e in stream:
        groups[key(e)].append(e.t)
    return {g: np.diff(np.sort(ts)) for g, ts in groups.items() if len(ts) >= 2}


def crossover_bound(eps: float, p_g: float) -> float:
    """Guaranteed minimum error-crossover rate ``P(g) / (P(g) + exp(eps))``."""
    if not 0 < p_g <= 1:
        raise ConfigError(f"P(g) must lie in (0, 1], got {p_g!r}")
    return p_g / (p_g + math.exp(eps))


def required_level(eps: float, target_crossover: float) -> float:
    if not 0 < target_crossover < 0.5:
        raise ConfigError(f"target_crossover must lie in (0, 0.5), got {target_crossover!r}")
    return target_crossover * math.exp(eps) / (1.0 - target_crossover)


def choose_gap(cdf: EmpiricalCdf, eps: float, target_crossover: float) -> float:
    level = required_level(eps, target_crossover)
    if level > 1:
        raise InfeasibleTarget(
            f"crossover {target_crossover} needs P(g) >= {level:.4f} > 1 at eps={eps}")
    return cdf.quantile(level)


@dataclass(frozen=True)
class CalibrationReport:
    """``percentile`` is the whole-number percentile that meets ``level``
    (what one would quote, e.g. 75); ``g`` is the tight empirical quantile at
    ``level`` itself and ``p_g`` its achieved CDF value."""

    level: float
    g: float | None
    percentile: int | None
    n_samples: int
    feasible: bool
    p_g: float | None = None

    def to_dict(self):
        return {"level": self.level, "g": self.g, "percentile": self.percentile,
                "n_samples": self.n_samples, "feasible": self.feasible, "p_g": self.p_g}


def whole_percentile(level: float) -> int:
    return int(math.ceil(100.0 * level - 1e-9))


def calibrate(samples, eps: float, target_crossover: float) -> CalibrationReport:
    """Like :func:`choose_gap` but returns a report instead of raising on an
    infeasible target."""
    cdf = EmpiricalCdf(samples)
    level = required_level(eps, target_crossover)
    if level > 1:
        return CalibrationReport(level, None, None, cdf.n, False)
    g = cdf.quantile(level)
    return CalibrationReport(level, g, whole_percentile(level), cdf.n, True, float(cdf(g)))


def per_group_gaps(stream: Sequence[Event], by, eps: float, target_crossover: float,
                   default_gap: float) -> dict[Hashable, float]:
    """Calibrated gap per group; groups with fewer than two events get ``default_gap``."""
    key = _key_fn(by)
    samples = inter_arrival_samples(stream, key)
    out = {}
    for g in {key(e) for e in stream}:
        gaps = samples.get(g)
        if gaps is None or gaps.size == 0:
            out[g] = default_gap
        else:
            out[g] = choose_gap(EmpiricalCdf(gaps), eps, target_crossover)
    return out


@dataclass(frozen=True)
class BatchingStats:
    batch_rate: float
    baseline_pair_rate: float
    n_consecutive_pairs: int
    n_batched_pairs: int
    n_actor_pairs: int
    n_close_actor_pairs: int
    no_eligible_pairs: bool

    def to_dict(self):
        return dict(self.__dict__)


def consecutive_cross_item_gaps(stream: Sequence[Event]) -> np.ndarray:
    """Gaps between each actor's consecutive events that are on different items."""
    by_actor: dict[str, list[Event]] = defaultdict(list)
    for e in stream:
        by_actor[e.actor].append(e)
    gaps = []
    for evs in by_actor.values():
        evs.sort(key=lambda e: (e.t, e.id))
        for a, b in zip(evs, evs[1:]):
            if a.item != b.item:
                gaps.append(b.t - a.t)
    return np.asarray(gaps, dtype=float)


def close_actor_pairs(stream: Sequence[Event], cutoff: float) -> set[frozenset]:
    """Distinct actor pairs with at least one cross-item pair of events within ``cutoff``."""
    evs = sorted(stream, key=lambda e: e.t)
    t = np.array([e.t for e in evs])
    hi = np.searchsorted(t, t + cutoff, side="right")
    pairs = set()
    for k, e in enumerate(evs):
        for j in range(k + 1, hi[k]):
            f = evs[j]
            if f.actor != e.actor and f.item != e.item:
                pairs.add(frozenset((e.actor, f.actor)))
    return pairs


def batching_stats(stream: Sequence[Event], cutoff: float) -> BatchingStats:
    """Rate of batching among consecutive cross-item pairs, and the baseline
    rate at which two distinct actors have events within ``cutoff``."""
    if not stream:
        raise EmptyStream("batching statistics need a non-empty stream")
    gaps = consecutive_cross_item_gaps(stream)
    n_batched = int(np.sum(gaps <= cutoff))
    rate = n_batched / gaps.size if gaps.size else 0.0
    n_actors = len({e.actor for e in stream})
    n_pairs = n_actors * (n_actors - 1) // 2
    close = len(close_actor_pairs(stream, cutoff)) if n_pairs else 0
    return BatchingStats(
        batch_rate=rate,
        baseline_pair_rate=close / n_pairs if n_pairs else 0.0,
        n_consecutive_pairs=int(gaps.size),
        n_batched_pairs=n_batched,
        n_actor_pairs=n_pairs,
        n_close_actor_pairs=close,
        no_eligible_pairs=gaps.size == 0,
    )


def posterior_linkage(K: int, p_batch: float, p_base: float, observed: str) -> float:
    """Posterior that two events share an author, under a uniform prior over
    ``K`` candidates, after seeing whether they arrived together."""
    if K < 1 or int(K) != K:
        raise ConfigError(f"K must be a positive integer, got {K!r}")
    if not (0 <= p_base <= 1 and 0 <= p_batch <= 1):
        raise ConfigError("probabilities must lie in [0, 1]")
    if p_base > p_batch:
        warnings.warn("p_base exceeds p_batch; arriving together is then evidence against linkage",
                      stacklevel=2)
    if observed == "together":
        den = p_batch + (K - 1) * p_base
        num = p_batch
    elif observed == "apart":
        if K == 1:
            return 1.0
        den = (1 - p_batch) + (K - 1) * (1 - p_base)
        num = 1 - p_base
    else:
        raise ConfigError(f"observed must be 'together' or 'apart', got {observed!r}")
    if den == 0:
        raise ZeroDenominator("posterior is undefined: every hypothesis has probability zero")
    return num / den


def close_actor_pairs_bruteforce(stream: Sequence[Event], cutoff: float) -> set[frozenset]:
    """O(n^2) reference for :func:`close_actor_pairs`."""
    by_actor: dict[str, list[Event]] = defaultdict(list)
    for e in stream:
        by_actor[e.actor].append(e)
    out = set()
    for a, b in combinations(sorted(by_actor), 2):
        if any(abs(x.t - y.t) <= cutoff and x.item != y.item
               for x in by_actor[a] for y in by_actor[b]):
            out.add(frozenset((a, b)))
    return out
