"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from delaymask.attacksim import (
    SyntheticConfig,
    basic_attack,
    event_group,
    generate_stream,
    informed_attack,
    no_mechanism,
)
from delaymask.calibration import (
    EmpiricalCdf,
    batching_stats,
    calibrate,
    choose_gap,
    inter_arrival_samples,
    posterior_linkage,
    required_level,
)
from delaymask.cli import main
from delaymask.distributions import build_pair, verify_indistinguishable
from delaymask.frontier import (
    brute_force_frontier,
    discrete_optimal_pair,
    eta_star,
    frontier_distance,
    max_level,
    min_weighted_cost,
    weighted_cost,
)
from delaymask.mechanism import (
    Event,
    PrivacyConfig,
    optimal_eta,
    replay,
    run_mechanism,
    run_mechanism_grouped,
)
from delaymask.queuemech import run_queue, theta_schedule

EPS_GRID = (0.1, 0.5, 1.0, 2.0)


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def ziu_etas(eps):
    a = math.exp(-eps)
    return sorted({eta_star(eps, 0.0), (a + 1.0) / 2})


@pytest.mark.slow
@pytest.mark.parametrize("family", ["exponential", "staircase", "uniform", "ziu"])
def test_c1_monte_carlo_means(family):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    start = time.perf_counter()
    for eps in EPS_GRID:
        for eta in (ziu_etas(eps) if family == "ziu" else [None]):
            pair = build_pair(family, eps, 1.0, eta)
            for spec, mean in zip((pair.batched, pair.unbatched), pair.expected()):
                got = spec.sample(rng, 1_000_000).mean()
                worst = max(worst, abs(got - mean) / mean)
    elapsed = time.perf_counter() - start
    report(1, worst < 0.01 and elapsed < 10,
           f"{family}: worst relative error {worst:.2e}, {elapsed:.2f}s")


def test_c2_certification():
    worst = -math.inf
    uniform_gap = 0.0
    for eps in EPS_GRID:
        for family in ("exponential", "staircase", "uniform", "ziu"):
            for eta in (ziu_etas(eps) if family == "ziu" else [None]):
                rep = verify_indistinguishable(build_pair(family, eps, 1.0, eta))
                assert rep.passes, (family, eps, eta, rep)
                worst = max(worst, rep.max_log_ratio - eps)
                if family == "uniform":
                    uniform_gap = max(uniform_gap, abs(rep.max_log_ratio - eps))
    report(2, worst <= 1e-9 and uniform_gap <= 1e-9,
           f"max excess {worst:.2e}, uniform tightness {uniform_gap:.2e}")


def test_c3_optimal_eta():
    worst = 0.0
    for eps in (0.5, 1.0, 2.0, 4.0):
        a = math.exp(-eps)
        grid = np.linspace(a, 1.0, 10_001)[1:]
        for w in (0.0, 0.25, 0.5, 0.9):
            _, cost = min_weighted_cost(eps, 1.0, w)
            best = weighted_cost(eps, 1.0, w, grid).min()
            worst = max(worst, abs(cost - best))
    single = all(eta_star(e, w) == 1.0
                 for e in np.linspace(0.01, math.log(2), 40) for w in (0.0, 0.25, 0.5, 0.9, 1.0))
    single &= all(optimal_eta(e, w) == 1.0
                  for e in np.linspace(0.02, 2 * math.log(2), 40) for w in (0.0, 0.5, 1.0))
    report(3, worst <= 1e-3 and single,
           f"worst grid gap {worst:.2e}, eta*=1 below ln 2 pair budget: {single}")


def test_c4_brute_force_oracle():
    eps, g, i = 2.0, 1.0, 64
    pts = brute_force_frontier(eps, g, i, 200)
    dist = max(frontier_distance(p, eps, g) for p in pts)
    floor = -math.expm1(-eps) / g
    dens_ok = True
    top = max_level(eps, g)
    for level in np.linspace(top / 200, top, 200):
        pair = discrete_optimal_pair(eps, g, i, float(level))
        mb, mu = pair.masses()
        dens_ok &= abs(mb.sum() - 1) < 1e-12 and abs(mu.sum() - 1) < 1e-12
        dens_ok &= pair.max_log_ratio() <= eps + 1e-12
        dens_ok &= pair.u[0] >= floor * (1 - 1e-12)
    report(4, dist <= 0.02 and dens_ok,
           f"{len(pts)} points, worst deviation {dist:.2%}, densities ok: {dens_ok}")


def test_c5_worked_numbers():
    post = posterior_linkage(10, 0.301, 0.0066, "together")
    level = required_level(0.8, 0.25)
    rep = calibrate(np.arange(1, 101, dtype=float), 0.8, 0.25)
    g = choose_gap(EmpiricalCdf(np.arange(1, 101, dtype=float)), 0.8, 0.25)
    minutes = [0, 5, 6, 8, 100]
    items = ["p1", "p2", "p2", "p2", "p3"]
    seq = [Event(str(k), "r", p, 60.0 * t) for k, (p, t) in enumerate(zip(items, minutes))]
    rate = batching_stats(seq, 300.0).batch_rate
    ok = (abs(post - 0.8351) <= 1e-4 and abs(level - 0.7418) <= 1e-3
          and rep.percentile == 75 and g == 75.0 and rate == 0.5)
    report(5, ok, f"posterior {post:.5f}, level {level:.4f} -> p{rep.percentile}, batch rate {rate}")


def _posted_symbols(counts, rng, n_runs, n_steps, probs):
    hist = np.zeros((n_steps, len(probs)), dtype=np.int64)
    total = sum(counts)
    for _ in range(n_runs):
        sym = rng.choice(len(probs), size=total, p=probs)
        steps, k = [], 0
        for c in counts:
            steps.append(list(sym[k:k + c]))
            k += c
        for p in run_queue(steps, rng, drain=False):
            hist[p.post_step, p.item] += 1
    return hist


@pytest.mark.slow
def test_c6_queue():
    counts = theta_schedule(30, [10, 10, 15])
    steps, n = [], 0
    for c in counts:
        steps.append(list(range(n, n + c)))
        n += c
    out = run_queue(steps, np.random.default_rng(0))
    max_delay = max(p.delay for p in out)
    single = [p.item for p in out if counts[p.arrival_step] == 1]
    order_ok = single == sorted(single)

    probs = np.array([0.5, 0.25, 0.15, 0.1])
    n_runs, n_steps = 100_000, 8
    base = [1] * n_steps
    batch = list(base)
    batch[3] = 2
    h0 = _posted_symbols(base, np.random.default_rng(1), n_runs, n_steps, probs)
    h1 = _posted_symbols(batch, np.random.default_rng(2), n_runs, n_steps, probs)
    sigma = np.sqrt(2 * n_runs * probs * (1 - probs))
    z = float(np.max(np.abs(h0 - h1) / sigma))
    report(6, max_delay == 3 and order_ok and z <= 5,
           f"max delay {max_delay}, order kept {order_ok}, worst histogram z {z:.2f}")


def _histogram_ratio(eps, g, t0, n_runs, rng, bins, min_count=2000):
    cfg = PrivacyConfig(eps, g)
    batched = [Event("x", "a", "p", 0.0), Event("y", "a", "q", 0.0)]
    apart = [Event("x", "a", "p", 0.0), Event("y", "b", "q", t0)]
    px = replay(batched, cfg, "uniform", rng, n_runs)
    py = replay(apart, cfg, "uniform", rng, n_runs)
    hx, _, _ = np.histogram2d(px[:, 0], px[:, 1], bins=[bins, bins])
    hy, _, _ = np.histogram2d(py[:, 0], py[:, 1], bins=[bins, bins])
    keep = (hx >= min_count) & (hy >= min_count)
    ratio = hx[keep] / hy[keep]
    rel_sigma = np.sqrt(1 / hx[keep] + 1 / hy[keep])
    return float(np.max(ratio / (math.exp(eps) * (1 + 5 * rel_sigma)))), int(keep.sum())


@pytest.mark.slow
def test_c7_mechanism_validity():
    ok, n_events = True, []
    g, beta = 2.0, 1.0
    for mode, b, jitter in (("simultaneous", 0.0, 0.0), ("hold_window", beta, 0.5)):
        events, _ = generate_stream(SyntheticConfig(
            horizon=800.0, base_rate=0.2, n_actors=50, n_items=40, batch_prob=0.3,
            intra_batch_jitter=jitter, seed=3))
        n_events.append(len(events))
        ok &= len(events) >= 10_000
        pc = PrivacyConfig(1.0, g, b, 0.5, mode)
        for family in ("exponential", "staircase", "uniform", "ziu"):
            out = run_mechanism(events, pc, family, np.random.default_rng(9))
            ok &= sorted(p.event.id for p in out) == sorted(e.id for e in events)
            d = np.array([p.total_delay for p in out])
            lab = np.array([p.batched for p in out])
            ok &= bool(np.all(d >= pc.hold)) and bool(lab.any())
            ok &= bool(np.all(d[lab] >= pc.hold + pc.effective_gap - 1e-9))
            if mode == "hold_window":
                ok &= bool(np.all(d[lab] >= beta + g + beta - 1e-9))
    bins = np.linspace(0, 2.5, 11)
    worst, cells = 0.0, 0
    rng = np.random.default_rng(17)
    for t0 in (0.0, 0.5, 1.0):
        r, c = _histogram_ratio(1.0, 1.0, t0, 1_000_000, rng, bins)
        worst, cells = max(worst, r), cells + c
    report(7, ok and worst <= 1.0,
           f"{n_events} events valid: {ok}, worst ratio / bound {worst:.3f} over {cells} bins")


PROTO = dict(horizon=2000.0, base_rate=0.05, n_actors=20, n_items=12, batch_prob=0.3,
             n_groups=3, group_weights=(0.7, 0.25, 0.05))


@pytest.mark.slow
def test_c8_attack_degradation():
    ths = [0.0, *np.geomspace(0.01, 500, 60), math.inf]
    coeffs = [*np.geomspace(0.01, 50, 60), math.inf]
    lines, ok = [], True
    for seed in range(5):
        events, truth = generate_stream(SyntheticConfig(**PROTO, seed=seed))
        clear = basic_attack(no_mechanism(events), truth, ths, event_group)
        g = float(np.median(inter_arrival_samples(events)))
        posted = run_mechanism(events, PrivacyConfig(1.0, g), "ziu",
                               np.random.default_rng(100 + seed))
        noisy = basic_attack(posted, truth, ths, event_group)
        gaps = {k: float(np.median(v))
                for k, v in inter_arrival_samples(events, event_group).items()}
        grouped = run_mechanism_grouped(events, PrivacyConfig(1.0, g), "ziu",
                                        np.random.default_rng(200 + seed), event_group, gaps)
        inf_auc = informed_attack(grouped, truth, gaps, coeffs).pr_auc()
        bas_auc = basic_attack(grouped, truth, ths, event_group).pr_auc()
        r0 = clear.curve[0][2]
        p_clear, p_noisy = clear.precision_at_recall(0.65), noisy.precision_at_recall(0.65)
        ok &= r0 == 1.0 and p_noisy < p_clear and inf_auc >= bas_auc
        lines.append(f"seed {seed}: P@0.65 {p_clear:.3f}->{p_noisy:.3f}, "
                     f"AUC informed {inf_auc:.3f} basic {bas_auc:.3f}")
    report(8, ok, "; ".join(lines))


def test_c9_determinism(tmp_path):
    ev, tr = tmp_path / "ev.jsonl", tmp_path / "truth.jsonl"
    assert main(["synth", "-o", str(ev), "--truth", str(tr), "--horizon", "800", "--base-rate", "0.05",
                 "--n-actors", "10", "--n-items", "9", "--n-groups", "3", "--batch-prob", "0.3",
                 "--seed", "2"]) == 0
    blobs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        out = d / "posted.jsonl"
        assert main(["delay", "-i", str(ev), "-o", str(out), "--eps", "1", "--gap", "5",
                     "--family", "ziu", "--seed", "7"]) == 0
        assert main(["attack", "--posted", str(out), "--truth", str(tr), "-o", str(d / "attack.json"),
                     "--csv", str(d / "attack.csv"), "--scope", "group",
                     "--thresholds", "0,0.5,1,2,5,10,50"]) == 0
        assert main(["frontier", "--eps", "4", "--gap", "5", "-o", str(d / "frontier.csv")]) == 0
        blobs.append([p.read_bytes() for p in sorted(d.iterdir())])
    same = blobs[0] == blobs[1] and len(blobs[0]) >= 5
    report(9, same, f"{len(blobs[0])} files byte-identical across runs: {same}")
