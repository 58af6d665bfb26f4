"""
Choosing a delay distribution
=============================

Each family gives a pair of delay distributions: one for events that are
part of a batch and one for everything else. Both pairs are private at the
same budget, but they spend their delay very differently.
"""

import numpy as np

from delaymask import build_pair, optimal_eta, verify_indistinguishable

# the mechanism budget; each noise pair runs at half of it
eps = 2.0
gap = 1.0

for family in ("exponential", "staircase", "uniform", "ziu"):
    eta = optimal_eta(eps, 0.2) if family == "ziu" else None
    pair = build_pair(family, eps / 2, gap, eta)
    e_b, e_u = pair.expected()
    rep = verify_indistinguishable(pair)
    print(f"{family:12s} E[B]={e_b:6.3f}  E[U]={e_u:6.3f}  "
          f"max log ratio={rep.max_log_ratio:.4f} (budget {pair.eps_ind})")

# The zero-inflated uniform posts most unbatched events right away.
pair = build_pair("ziu", eps / 2, gap, optimal_eta(eps, 0.0))
u = pair.unbatched.sample(np.random.default_rng(0), 100_000)
print(f"\nziu with w=0: eta={pair.eta:.4f}, share posted instantly={np.mean(u == 0):.3f}")
