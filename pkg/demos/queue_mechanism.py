"""
Perfect batching privacy with a queue
=====================================

In discrete time, posting exactly one event per step hides batches
completely. The price is a delay equal to the number of extra batched
arrivals seen so far.
"""

import numpy as np

from delaymask.queuemech import run_queue, theta_schedule

# one arrival per step, plus extra arrivals at steps 10, 10 and 15
counts = theta_schedule(30, [10, 10, 15])
steps, n = [], 0
for c in counts:
    steps.append([f"e{k}" for k in range(n, n + c)])
    n += c

out = run_queue(steps, np.random.default_rng(0))
delays = [p.delay for p in out]
print("delay by post step:", delays)
print("max delay:", max(delays))
