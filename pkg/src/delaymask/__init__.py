"""One-sided differentially private random delays for pseudonymous event streams."""

from delaymask.distributions import (
    NoisePair,
    build_pair,
    expected_delay,
    sample,
    verify_indistinguishable,
)
from delaymask.mechanism import (
    Event,
    PostedEvent,
    PrivacyConfig,
    classify_batches,
    delay_stats,
    optimal_eta,
    run_mechanism,
)
from delaymask.queuemech import queue_step, run_queue
from delaymask.calibration import (
    EmpiricalCdf,
    batching_stats,
    choose_gap,
    crossover_bound,
    inter_arrival_samples,
    posterior_linkage,
)
from delaymask.attacksim import SyntheticConfig, basic_attack, generate_stream, informed_attack
from delaymask.frontier import analytic_frontier, brute_force_frontier, min_weighted_cost

__version__ = "0.1.0"

__all__ = [
    "NoisePair", "build_pair", "expected_delay", "sample", "verify_indistinguishable",
    "Event", "PostedEvent", "PrivacyConfig", "classify_batches", "delay_stats",
    "optimal_eta", "run_mechanism", "queue_step", "run_queue", "EmpiricalCdf",
    "batching_stats", "choose_gap", "crossover_bound", "inter_arrival_samples",
    "posterior_linkage", "SyntheticConfig", "basic_attack", "generate_stream",
    "informed_attack", "analytic_frontier", "brute_force_frontier", "min_weighted_cost",
]
