import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from delaymask.attacksim import basic_attack, no_mechanism
from delaymask.calibration import (
    EmpiricalCdf,
    choose_gap,
    crossover_bound,
    posterior_linkage,
    required_level,
)
from delaymask.distributions import build_pair, verify_indistinguishable
from delaymask.frontier import analytic_frontier, discrete_optimal_pair, max_level
from delaymask.mechanism import Event, PrivacyConfig, classify_batches, run_mechanism, sort_stream
from delaymask.queuemech import run_queue

eps_st = st.floats(0.05, 6.0)
gap_st = st.floats(0.01, 100.0)


@st.composite
def streams(draw, max_n=30):
    n = draw(st.integers(0, max_n))
    actors = draw(st.lists(st.sampled_from("abc"), min_size=n, max_size=n))
    items = draw(st.lists(st.sampled_from("pqr"), min_size=n, max_size=n))
    times = draw(st.lists(st.integers(0, 40), min_size=n, max_size=n))
    return sort_stream(Event(str(k), a, i, float(t)) for k, (a, i, t) in enumerate(zip(actors, items, times)))


@settings(max_examples=40, deadline=None)
@given(family=st.sampled_from(["exponential", "staircase", "uniform"]), eps=eps_st, gap=gap_st)
def test_pairs_certify(family, eps, gap):
    pair = build_pair(family, eps, gap)
    rep = verify_indistinguishable(pair, grid_n=16)
    assert rep.passes


@settings(max_examples=40, deadline=None)
@given(eps=eps_st, gap=gap_st, frac=st.floats(0.01, 1.0))
def test_ziu_pairs_certify(eps, gap, frac):
    a = math.exp(-eps)
    eta = a + frac * (1 - a)
    assume(eta > a + 1e-6)
    rep = verify_indistinguishable(build_pair("ziu", eps, gap, eta), grid_n=16)
    assert rep.passes


@settings(max_examples=50, deadline=None)
@given(stream=streams(), beta=st.sampled_from([0.0, 1.0, 3.0]))
def test_classification_symmetric(stream, beta):
    labels = classify_batches(stream, beta)
    for k, e in enumerate(stream):
        partners = [f for f in stream if f is not e and f.actor == e.actor
                    and f.item != e.item and abs(f.t - e.t) <= beta]
        assert labels[k] == bool(partners)


@settings(max_examples=40, deadline=None)
@given(stream=streams(), seed=st.integers(0, 2**32 - 1),
       family=st.sampled_from(["exponential", "staircase", "uniform", "ziu"]),
       mode=st.sampled_from(["simultaneous", "hold_window"]))
def test_mechanism_validity(stream, seed, family, mode):
    cfg = PrivacyConfig(1.5, 4.0, 1.0 if mode == "hold_window" else 0.0, 0.3, mode)
    out = run_mechanism(stream, cfg, family, np.random.default_rng(seed))
    assert sorted(p.event.id for p in out) == sorted(e.id for e in stream)
    for p in out:
        assert math.isfinite(p.post_t) and p.post_t >= p.event.t + cfg.hold
        if p.batched:
            assert p.total_delay >= cfg.hold + cfg.effective_gap - 1e-9


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(0, 4), min_size=1, max_size=40), seed=st.integers(0, 1000))
def test_queue_invariants(counts, seed):
    steps = [[(s, j) for j in range(c)] for s, c in enumerate(counts)]
    out = run_queue(steps, np.random.default_rng(seed))
    assert sorted(p.item for p in out) == sorted(x for s in steps for x in s)
    assert len({p.post_step for p in out}) == len(out)
    extra = 0
    extras_before = []
    for c in counts:
        extra += max(c - 1, 0)
        extras_before.append(extra)
    for p in out:
        assert p.delay <= extras_before[p.arrival_step]
    if 0 not in counts:
        # the queue never shrinks, so someone waits for every extra arrival
        assert max(p.delay for p in out) == extras_before[-1]


@settings(max_examples=60, deadline=None)
@given(samples=st.lists(st.floats(0, 1e4), min_size=1, max_size=200),
       eps=st.floats(0.01, 3.0), f_hi=st.floats(0.001, 0.999), f_lo=st.floats(0.0, 1.0))
def test_choose_gap_monotone(samples, eps, f_hi, f_lo):
    cdf = EmpiricalCdf(samples)
    # the largest feasible target shrinks as eps grows, so both budgets accept hi
    hi = f_hi * crossover_bound(eps * 1.5, 1.0)
    lo = max(f_lo * hi, 1e-9)
    assert required_level(eps * 1.5, hi) <= 1
    assert choose_gap(cdf, eps, lo) <= choose_gap(cdf, eps, hi)
    assert choose_gap(cdf, eps, hi) <= choose_gap(cdf, eps * 1.5, hi)


@given(eps=st.floats(1e-6, 20), p=st.floats(1e-9, 1.0))
def test_crossover_below_half(eps, p):
    assert 0 < crossover_bound(eps, p) < 0.5


@given(k=st.integers(1, 500), pb=st.floats(0.01, 1.0), frac=st.floats(0.0, 1.0))
def test_posterior_in_unit_interval(k, pb, frac):
    v = posterior_linkage(k, pb, pb * frac, "together")
    assert 0 <= v <= 1
    assert v >= 1 / k - 1e-12


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(0.1, 6.0), gap=st.floats(0.1, 10.0))
def test_frontier_non_dominated(eps, gap):
    pts = analytic_frontier(eps, gap, 60)
    for p, q in zip(pts, pts[1:]):
        assert p.e_batched < q.e_batched and p.e_unbatched > q.e_unbatched
    assert all(p.e_batched >= gap * (1 - 1e-12) for p in pts)


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(0.2, 5.0), gap=st.floats(0.1, 10.0), i=st.integers(2, 40), frac=st.floats(0.01, 1.0))
def test_discrete_pairs_valid(eps, gap, i, frac):
    pair = discrete_optimal_pair(eps, gap, i, frac * max_level(eps, gap))
    mb, mu = pair.masses()
    assert abs(mb.sum() - 1) < 1e-9 and abs(mu.sum() - 1) < 1e-9
    assert pair.b.min() >= 0 and pair.u.min() >= 0
    assert pair.u[0] >= (1 - math.exp(-eps)) / gap * (1 - 1e-9)
    assert pair.max_log_ratio() <= eps + 1e-9


@settings(max_examples=30, deadline=None)
@given(stream=streams(40), ths=st.lists(st.floats(0, 50), min_size=1, max_size=6))
def test_recall_monotone(stream, ths):
    truth = set()
    by_key = {}
    for e in stream:
        other = by_key.get((e.actor, e.t))
        if other is not None and other.item != e.item:
            truth.add(frozenset((other.id, e.id)))
        by_key[(e.actor, e.t)] = e
    assume(truth)
    rep = basic_attack(no_mechanism(stream), truth, ths)
    rec = [r for _, _, r in rep.curve]
    assert rec == sorted(rec)
    assert all(0 <= p <= 1 and 0 <= r <= 1 for _, p, r in rep.curve)
