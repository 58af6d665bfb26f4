"""``delaymask`` command line.

Subcommands: calibrate, delay, attack, frontier, stats, plus synth for
making a labelled synthetic stream to feed the others.

Every flag can also come from a JSON file given with ``--config`` (keys are
the long flag names with dashes turned into underscores); flags on the
command line win. Time-valued flags and file times are read in ``--unit``
(seconds by default) and written back in the same unit.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 infeasible
parameters.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import zlib
from collections import Counter
from dataclasses import replace
from typing import Sequence

import numpy as np

from delaymask import attacksim, calibration, frontier, io
from delaymask.distributions import FAMILIES, pair_to_dict
from delaymask.errors import (
    ConfigError,
    DataError,
    DelayMaskError,
    EmptyClass,
    InfeasibleError,
)
from delaymask.mechanism import (
    MODES,
    PrivacyConfig,
    delay_stats,
    resolve_pair,
    run_mechanism,
    run_mechanism_grouped,
    sort_stream,
)
from delaymask.queuemech import run_queue, steps_from_times

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4
SEED_ENV = "DELAYMASK_SEED"

SCOPES = {
    "global": None,
    "actor": lambda e: e.actor,
    "item": lambda e: e.item,
    "group": attacksim.event_group,
}

DEFAULTS = {
    "unit": "seconds",
    "seed": None,
    "workers": 1,
    "eps": None,
    "gap": None,
    "gap_policy": "fixed",
    "level": 0.75,
    "group_key": "group",
    "default_gap": None,
    "beta": 0.0,
    "w": 1.0,
    "family": "ziu",
    "mode": "simultaneous",
    "target": None,
    "scope": "global",
    "cutoff": None,
    "attack": "basic",
    "thresholds": None,
    "coeffs": None,
    "n_points": 200,
    "oracle": False,
    "cells": 64,
    "levels": 200,
    "sort": False,
}


def split_rng(seed: int, name: str, worker: int = 0) -> np.random.Generator:
    """Independent generator for one named stage (and worker) of a run.

    The child key depends only on the master seed, the stage name and the
    worker index, so adding a stage never shifts the draws of another.
    """
    key = (zlib.crc32(name.encode()), worker)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _resolve_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


class Settings:
    """Command-line flags layered over a JSON config file over defaults."""

    def __init__(self, ns: argparse.Namespace):
        file_cfg = {}
        if getattr(ns, "config", None):
            try:
                with open(ns.config, encoding="utf-8") as fh:
                    file_cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {ns.config}: {exc}") from None
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        self._ns = vars(ns)
        self._file = file_cfg

    def __getattr__(self, key):
        v = self._ns.get(key)
        if v is None:
            v = self._file.get(key)
        if v is None:
            v = DEFAULTS.get(key)
        return v

    def require(self, key):
        v = getattr(self, key)
        if v is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required")
        return v

    @property
    def scale(self):
        return io.unit_scale(self.unit)

    def time(self, key, required=True):
        v = self.require(key) if required else getattr(self, key)
        return None if v is None else float(v) * self.scale


def _emit(obj, path):
    if path:
        io.write_json(path, obj)
    else:
        print(json.dumps(obj, indent=2))


def _scope(name):
    if name not in SCOPES:
        raise ConfigError(f"scope must be one of {sorted(SCOPES)}, got {name!r}")
    return SCOPES[name]


def _load_sorted(s: Settings):
    events = io.read_events(s.require("input"), s.unit)
    return sort_stream(events) if s.sort else events


def cmd_calibrate(s: Settings):
    events = io.read_events(s.require("input"), s.unit)
    eps, target = float(s.require("eps")), float(s.require("target"))
    key = _scope(s.scope)
    if key is None:
        reports = {"global": calibration.calibrate(
            calibration.inter_arrival_samples(events), eps, target)}
    else:
        samples = calibration.inter_arrival_samples(events, key)
        if not samples:
            raise calibration.InsufficientData("no group has two or more events")
        reports = {str(g): calibration.calibrate(v, eps, target)
                   for g, v in sorted(samples.items(), key=lambda kv: str(kv[0]))}
    out = {}
    for g, r in reports.items():
        d = r.to_dict()
        if d["g"] is not None:
            d["g"] = d["g"] / s.scale
        out[g] = d
    _emit(out["global"] if key is None else out, s.output)
    if not all(r.feasible for r in reports.values()):
        return EXIT_INFEASIBLE
    return EXIT_OK


def _gaps(s: Settings, events):
    """Global gap (seconds) and optional per-group map (seconds)."""
    policy = s.gap_policy
    if policy == "fixed":
        return s.time("gap"), None
    level = float(s.level)
    if policy == "percentile":
        cdf = calibration.EmpiricalCdf(calibration.inter_arrival_samples(events))
        return cdf.quantile(level), None
    if policy == "per_group_percentile":
        key = _scope(s.group_key)
        if key is None:
            raise ConfigError("per_group_percentile needs a non-global --group-key")
        default = s.time("default_gap")
        samples = calibration.inter_arrival_samples(events, key)
        gaps = {}
        for g in {key(e) for e in events}:
            v = samples.get(g)
            gaps[g] = calibration.EmpiricalCdf(v).quantile(level) if v is not None and v.size else default
        return default, gaps
    raise ConfigError(f"unknown gap policy {policy!r}")


def _write_stats(path, posted, extra):
    out = dict(extra)
    for cls in ("batched", "unbatched", "all"):
        try:
            out[cls] = delay_stats(posted, (cls,))[cls].to_dict()
        except EmptyClass:
            out[cls] = None
    io.write_json(path, out)


def _scaled_stats(posted, scale):
    if scale == 1.0:
        return posted
    return [replace(p, delay=p.delay / scale, post_t=p.post_t / scale,
                    event=replace(p.event, t=p.event.t / scale)) for p in posted]


def cmd_delay(s: Settings):
    events = _load_sorted(s)
    out_path = s.require("output")
    seed = _resolve_seed(s.seed)
    stats_path = s.stats or f"{out_path}.stats.json"
    meta = {"seed": seed, "workers": int(s.workers), "mode": s.mode, "unit": s.unit}
    if s.mode == "queue":
        times = [e.t / s.scale for e in events]
        if any(t != int(t) for t in times):
            raise ConfigError("queue mode needs integer step times")
        steps = steps_from_times([int(t) for t in times], events)
        postings = run_queue(steps, split_rng(seed, "queue"))
        per_step = Counter(int(t) for t in times)
        io.write_jsonl(out_path, (io.queue_record(q, per_step[q.arrival_step] > 1, s.scale)
                                  for q in postings))
        d = np.array([q.delay for q in postings], dtype=float)
        meta.update(n=int(d.size), mean=float(d.mean()) if d.size else None,
                    max=float(d.max()) if d.size else None)
        io.write_json(stats_path, meta)
        return EXIT_OK
    if s.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES + ('queue',)}, got {s.mode!r}")
    if s.family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {s.family!r}")
    gap, group_gaps = _gaps(s, events)
    beta = s.time("beta")
    eps, w = float(s.require("eps")), float(s.w)
    rng = split_rng(seed, "mechanism")
    if group_gaps is None:
        config = PrivacyConfig(eps, gap, beta, w, s.mode)
        posted = run_mechanism(events, config, s.family, rng)
        meta["pair"] = pair_to_dict(resolve_pair(config, s.family))
        meta["gap"] = gap / s.scale
    else:
        base = PrivacyConfig(eps, max(group_gaps.values()), beta, w, s.mode)
        posted = run_mechanism_grouped(events, base, s.family, rng, _scope(s.group_key), group_gaps)
        meta["gaps"] = {str(k): v / s.scale for k, v in sorted(group_gaps.items(), key=lambda kv: str(kv[0]))}
    io.write_posted(out_path, posted, s.unit)
    _write_stats(stats_path, _scaled_stats(posted, s.scale), meta)
    if s.cdf:
        st = delay_stats(_scaled_stats(posted, s.scale), ("all",))["all"]
        x, p = st.cdf_points()
        io.write_csv(s.cdf, ["delay", "p"], zip(map(float, x), map(float, p)))
    return EXIT_OK


def _float_list(v, name):
    if v is None:
        raise ConfigError(f"--{name} is required")
    if isinstance(v, str):
        v = v.split(",")
    try:
        return [math.inf if str(x).strip() in ("inf", "Infinity") else float(x) for x in v]
    except ValueError:
        raise ConfigError(f"--{name} must be a comma-separated list of numbers") from None


def cmd_attack(s: Settings):
    posted = io.read_posted(s.require("posted"), s.unit)
    truth = io.read_truth(s.require("truth"))
    scope = _scope(s.scope)
    if s.attack == "basic":
        thresholds = [c * s.scale for c in _float_list(s.thresholds, "thresholds")]
        report = attacksim.basic_attack(posted, truth, thresholds, scope)
        report.curve = [(c / s.scale, p, r) for c, p, r in report.curve]
    elif s.attack == "informed":
        if scope is None:
            raise ConfigError("the informed attack needs a non-global --scope")
        gaps_path = s.require("gaps")
        try:
            with open(gaps_path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read gaps {gaps_path}: {exc}") from None
        raw = raw.get("gaps", raw)
        gaps = {k: float(v) * s.scale for k, v in raw.items()}
        report = attacksim.informed_attack(posted, truth, gaps, _float_list(s.coeffs, "coeffs"), scope)
    else:
        raise ConfigError(f"attack must be basic or informed, got {s.attack!r}")
    _emit(report.to_dict(), s.output)
    if s.csv:
        with open(s.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    return EXIT_OK


def cmd_frontier(s: Settings):
    eps = float(s.require("eps"))
    gap = float(s.gap) if s.gap is not None else 1.0
    eps_ind = eps / 2.0
    pts = frontier.analytic_frontier(eps_ind, gap, int(s.n_points))
    rows = [(p.eta, p.e_batched, p.e_unbatched) for p in pts]
    out = s.output
    if out:
        io.write_csv(out, ["eta", "E_B", "E_U"], rows)
    else:
        print("eta,E_B,E_U")
        for r in rows:
            print(",".join(repr(float(x)) for x in r))
    if s.oracle:
        bf = frontier.brute_force_frontier(eps_ind, gap, int(s.cells), int(s.levels))
        path = s.oracle_output or (f"{out}.oracle.csv" if out else None)
        if path is None:
            raise ConfigError("--oracle needs --output or --oracle-output")
        io.write_csv(path, ["eta", "E_B", "E_U"], [(p.eta, p.e_batched, p.e_unbatched) for p in bf])
    return EXIT_OK


def cmd_stats(s: Settings):
    events = io.read_events(s.require("input"), s.unit)
    st = calibration.batching_stats(events, s.time("cutoff"))
    _emit(st.to_dict(), s.output)
    return EXIT_OK


def cmd_synth(s: Settings):
    seed = _resolve_seed(s.seed)
    weights = s.group_weights
    if isinstance(weights, str):
        weights = _float_list(weights, "group-weights")
    cfg = attacksim.SyntheticConfig(
        horizon=s.time("horizon"), base_rate=float(s.require("base_rate")) / s.scale,
        n_actors=int(s.require("n_actors")), n_items=int(s.require("n_items")),
        batch_prob=float(s.require("batch_prob")),
        intra_batch_jitter=s.time("jitter", required=False) or 0.0,
        seed=int(split_rng(seed, "synth").integers(2**63)),
        n_groups=int(s.n_groups or 1),
        group_weights=tuple(weights) if weights else None)
    events, truth = attacksim.generate_stream(cfg)
    io.write_jsonl(s.require("output"),
                   ({"id": e.id, "actor": e.actor, "item": e.item, "t": e.t / s.scale} for e in events))
    io.write_truth(s.require("truth"), truth)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaymask", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default values for any flag")
        sp.add_argument("--unit", choices=sorted(io.UNITS), default=None)
        sp.add_argument("--output", "-o")
        return sp

    c = common(sub.add_parser("calibrate", help="choose g from inter-arrival data"))
    c.add_argument("--input", "-i")
    c.add_argument("--eps", type=float)
    c.add_argument("--target", type=float, help="target error-crossover rate in (0, 0.5)")
    c.add_argument("--scope", choices=sorted(SCOPES))

    d = common(sub.add_parser("delay", help="run the delay mechanism over a stream"))
    d.add_argument("--input", "-i")
    d.add_argument("--eps", type=float)
    d.add_argument("--gap", type=float)
    d.add_argument("--gap-policy", choices=["fixed", "percentile", "per_group_percentile"])
    d.add_argument("--level", type=float, help="CDF level for percentile gap policies")
    d.add_argument("--group-key", choices=sorted(SCOPES))
    d.add_argument("--default-gap", type=float)
    d.add_argument("--beta", type=float)
    d.add_argument("--w", type=float)
    d.add_argument("--family", choices=FAMILIES)
    d.add_argument("--mode", choices=MODES + ("queue",))
    d.add_argument("--seed", type=int)
    d.add_argument("--workers", type=int)
    d.add_argument("--stats", help="delay statistics sidecar (default: OUTPUT.stats.json)")
    d.add_argument("--cdf", help="write the delay CDF as CSV")
    d.add_argument("--sort", action="store_true", default=None, help="sort input by (t, id) first")

    a = common(sub.add_parser("attack", help="threshold linkage attack on a posted stream"))
    a.add_argument("--posted")
    a.add_argument("--truth")
    a.add_argument("--attack", choices=["basic", "informed"])
    a.add_argument("--thresholds", help="comma-separated cutoffs (basic)")
    a.add_argument("--coeffs", help="comma-separated multiples of g (informed)")
    a.add_argument("--gaps", help="JSON map group -> gap (informed)")
    a.add_argument("--scope", choices=sorted(SCOPES))
    a.add_argument("--csv", help="also write the PR curve as CSV")

    f = common(sub.add_parser("frontier", help="privacy/delay Pareto frontier as CSV"))
    f.add_argument("--eps", type=float, help="mechanism epsilon; the pair uses eps/2")
    f.add_argument("--gap", type=float)
    f.add_argument("--n-points", type=int)
    f.add_argument("--oracle", action="store_true", default=None)
    f.add_argument("--oracle-output")
    f.add_argument("--cells", type=int, help="cells per gap for the oracle")
    f.add_argument("--levels", type=int, help="level grid size for the oracle")

    st = common(sub.add_parser("stats", help="batching statistics of a stream"))
    st.add_argument("--input", "-i")
    st.add_argument("--cutoff", type=float)

    y = common(sub.add_parser("synth", help="write a synthetic stream and its true batch pairs"))
    y.add_argument("--truth")
    y.add_argument("--horizon", type=float)
    y.add_argument("--base-rate", type=float, help="events per actor per unit time")
    y.add_argument("--n-actors", type=int)
    y.add_argument("--n-items", type=int)
    y.add_argument("--n-groups", type=int)
    y.add_argument("--group-weights")
    y.add_argument("--batch-prob", type=float)
    y.add_argument("--jitter", type=float)
    y.add_argument("--seed", type=int)
    return p


COMMANDS = {
    "calibrate": cmd_calibrate,
    "delay": cmd_delay,
    "attack": cmd_attack,
    "frontier": cmd_frontier,
    "stats": cmd_stats,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return COMMANDS[ns.command](Settings(ns))
    except InfeasibleError as exc:
        print(f"delaymask: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataError as exc:
        print(f"delaymask: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DelayMaskError) as exc:
        print(f"delaymask: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"delaymask: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
