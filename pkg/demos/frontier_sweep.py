"""
The privacy-delay frontier
==========================

Sweeping eta traces every Pareto-optimal trade between the delay paid by
batched events and the delay paid by everyone else. A brute-force search
over step densities lands on the same curve.
"""

import math

from delaymask.frontier import analytic_frontier, brute_force_frontier, frontier_distance

eps_ind, gap = 2.0, 1.0

arc = analytic_frontier(eps_ind, gap, 9)
print("eta     E[B]    E[U]")
for p in arc:
    print(f"{p.eta:.3f}  {p.e_batched:.3f}  {p.e_unbatched:.3f}")

oracle = brute_force_frontier(eps_ind, gap, i=64, L_grid=100)
worst = max(frontier_distance(p, eps_ind, gap) for p in oracle)
print(f"\n{len(oracle)} oracle points, worst distance to the arc {worst:.2%}")

# Below a pair budget of ln 2 the frontier is a single point.
print("points at eps_ind = 0.6:", len(analytic_frontier(0.6, gap, 50)), "(ln 2 =", round(math.log(2), 4), ")")
