"""Order-preserving queue mechanism for discrete-time streams.

At every step exactly one event is posted whenever one is available. If the
queue holds anything, its head is posted and the step's arrivals are
enqueued (in a random order when several arrive together). If the queue is
empty, one arrival chosen uniformly at random is posted and the rest are
enqueued in a random order. Under i.i.d. arrivals the posted sequence has
the same law with or without batches, at the cost of a delay equal to the
number of extra batched arrivals seen so far.

Steps with no arrivals are allowed; they drain the queue by one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np


@dataclass
class QueueState:
    pending: deque = field(default_factory=deque)
    step: int = 0


@dataclass(frozen=True)
class QueuePosting:
    item: Any
    arrival_step: int
    post_step: int

    @property
    def delay(self) -> int:
        return self.post_step - self.arrival_step


def _shuffled(items, rng):
    items = list(items)
    if len(items) > 1:
        order = rng.permutation(len(items))
        items = [items[k] for k in order]
    return items


def queue_step(state: QueueState, arrivals: Sequence[Any],
               rng: np.random.Generator) -> tuple[QueueState, list[QueuePosting]]:
    """Advance one step; returns the new state and the (at most one) posting.

    ``state`` is updated in place and also returned.
    """
    now = state.step
    tagged = [(a, now) for a in arrivals]
    posted: list[QueuePosting] = []
    if state.pending:
        item, born = state.pending.popleft()
        posted.append(QueuePosting(item, born, now))
        state.pending.extend(_shuffled(tagged, rng))
    elif tagged:
        if len(tagged) == 1:
            item, born = tagged[0]
        else:
            tagged = _shuffled(tagged, rng)
            item, born = tagged.pop(0)
            state.pending.extend(tagged)
        posted.append(QueuePosting(item, born, now))
    state.step = now + 1
    return state, posted


def run_queue(steps: Iterable[Sequence[Any]], rng: np.random.Generator,
              drain: bool = True) -> list[QueuePosting]:
    """Run the queue over per-step arrival lists (index ``k`` is step ``k``).

    With ``drain`` the queue keeps posting on empty steps after the input
    ends until it is empty, so every input item appears in the output.
    """
    state = QueueState()
    out: list[QueuePosting] = []
    for arrivals in steps:
        state, posted = queue_step(state, arrivals, rng)
        out.extend(posted)
    while drain and state.pending:
        state, posted = queue_step(state, (), rng)
        out.extend(posted)
    return out


def steps_from_times(times: Sequence[int], items: Sequence[Any]) -> list[list[Any]]:
    """Bucket items by integer arrival step, keeping input order within a step."""
    if len(times) != len(items):
        raise ValueError("times and items must have the same length")
    for t in times:
        if t < 0 or int(t) != t:
            raise ValueError(f"queue steps must be non-negative integers, got {t!r}")
    if not times:
        return []
    steps: list[list[Any]] = [[] for _ in range(int(max(times)) + 1)]
    for t, x in zip(times, items):
        steps[int(t)].append(x)
    return steps


def theta_schedule(n_steps: int, theta: Sequence[int]) -> list[int]:
    """Arrival counts per step: one per step plus one extra per entry of ``theta``."""
    counts = [1] * n_steps
    for s in theta:
        counts[s] += 1
    return counts
