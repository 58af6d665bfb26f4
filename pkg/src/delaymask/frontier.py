"""Privacy/delay Pareto frontier of the zero-inflated uniform pair.

For an indistinguishability budget ``eps`` (write ``a = exp(-eps)``) and
gap ``g``, the zero-inflated uniform pair with parameter ``eta`` in
``(a, 1]`` has

    E[B] = g/2 * (1 + eta / (eta - a))
    E[U] = g/2 * eta**2 / (eta - a)

``E[B]`` falls monotonically in ``eta`` while ``E[U]`` is minimized at
``eta = 2a``, so the frontier is the arc ``eta in [min(2a, 1), 1]``; when
``2a >= 1`` it collapses to the single plain-uniform point.

:func:`brute_force_frontier` is an independent check: it builds the exact
optimal step-density pairs on a grid of width ``g / i`` and evaluates their
expectations by midpoint sums, never touching the closed forms above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from delaymask.errors import ConfigError, InvalidLevel, NonPositiveParam



@dataclass(frozen=True)
class FrontierPoint:
    eta: float
    e_batched: float
    e_unbatched: float


def _check(eps_ind, gap):
    if not (math.isfinite(eps_ind) and eps_ind > 0):
        raise NonPositiveParam(f"eps_ind must be positive, got {eps_ind!r}")
    if not (math.isfinite(gap) and gap > 0):
        raise NonPositiveParam(f"gap must be positive, got {gap!r}")


def ziu_expectations(eps_ind, gap, eta):
    """``(E[B], E[U])`` of the zero-inflated uniform pair; vectorized over ``eta``."""
    a = math.exp(-eps_ind)
    eta = np.asarray(eta, dtype=float)
    e_b = 0.5 * gap * (1.0 + eta / (eta - a))
    e_u = 0.5 * gap * eta ** 2 / (eta - a)
    return e_b, e_u


def weighted_cost(eps_ind, gap, w, eta):
    e_b, e_u = ziu_expectations(eps_ind, gap, eta)
    return w * e_b + (1.0 - w) * e_u


def eta_star(eps_ind: float, w: float) -> float:
    """Minimizer of ``w E[B] + (1 - w) E[U]`` over ``eta in (exp(-eps_ind), 1]``.

    Setting the derivative to zero gives
    ``eta_hat = a (1 + sqrt(1 + w / (a (1 - w))))``; the cost is convex, so
    the answer is ``min(eta_hat, 1)``. ``w = 1`` is the limit ``eta = 1``.
    """
    if not (math.isfinite(eps_ind) and eps_ind > 0):
        raise NonPositiveParam(f"eps must be positive, got {eps_ind!r}")
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"w must lie in [0, 1], got {w!r}")
    if w == 1.0:
        return 1.0
    a = math.exp(-eps_ind)
    eta_hat = a * (1.0 + math.sqrt(1.0 + w / (a * (1.0 - w))))
    return min(eta_hat, 1.0)


def min_weighted_cost(eps_ind: float, gap: float, w: float) -> tuple[float, float]:
    _check(eps_ind, gap)
    eta = eta_star(eps_ind, w)
    return eta, float(weighted_cost(eps_ind, gap, w, eta))


def non_dominated(points):
    """Points not weakly dominated in ``(e_batched, e_unbatched)``, sorted by ``e_batched``."""
    pts = sorted(points, key=lambda p: (p.e_batched, p.e_unbatched))
    out = []
    best_u = math.inf
    for p in pts:
        if p.e_unbatched < best_u:
            out.append(p)
            best_u = p.e_unbatched
    return out


def analytic_frontier(eps_ind: float, gap: float, n_points: int = 200) -> list[FrontierPoint]:
    """Points of the Pareto arc ``eta in [min(2a, 1), 1]`` with ``a = exp(-eps_ind)``.

    Below ``2a`` both expected delays grow, so those etas are dominated. When
    ``2a >= 1`` the frontier is the single point ``eta = 1``.
    """
    _check(eps_ind, gap)
    if n_points < 1:
        raise NonPositiveParam("n_points must be positive")
    lo = 2.0 * math.exp(-eps_ind)
    if lo >= 1.0 or n_points == 1:
        eta = np.array([1.0])
    else:
        eta = np.linspace(lo, 1.0, n_points)
    e_b, e_u = ziu_expectations(eps_ind, gap, eta)
    return non_dominated(FrontierPoint(float(h), float(b), float(u)) for h, b, u in zip(eta, e_b, e_u))


@dataclass(frozen=True)
class DiscretePair:
    """Step densities ``b[k]``, ``u[k]`` on ``[k h, (k+1) h)`` with ``h = gap / i``."""

    eps_ind: float
    gap: float
    i: int
    level: float
    b: np.ndarray
    u: np.ndarray

    @property
    def width(self):
        return self.gap / self.i

    def masses(self):
        return self.b * self.width, self.u * self.width

    def expectations(self):
        h = self.width
        mid = (np.arange(self.b.size) + 0.5) * h
        return float(np.sum(self.b * h * mid)), float(np.sum(self.u * h * mid))

    def max_log_ratio(self):
        """Largest ``log(b[k] / u[k - l])`` over ``l in [0, i]`` where ``b[k] > 0``."""
        worst = -math.inf
        for k in np.nonzero(self.b > 0)[0]:
            lo = max(0, k - self.i)
            den = self.u[lo:k + 1]
            if np.any(den <= 0):
                return math.inf
            worst = max(worst, math.log(self.b[k]) - math.log(den.min()))
        return worst


def max_level(eps_ind, gap):
    """Largest admissible step height of ``b``: ``(1 - a) / (a g)``."""
    return -math.expm1(-eps_ind) / (math.exp(-eps_ind) * gap)


def discrete_optimal_pair(eps_ind: float, gap: float, i: int, level: float) -> DiscretePair:
    """The unique Pareto-optimal step pair with ``b[i] = level``.

    ``b`` holds ``level`` on the ``n = floor(i / (gap level))`` cells starting
    at index ``i`` and the leftover mass in the next cell. ``u`` is
    ``a level`` on cells ``1 .. i+n-1``, ``a`` times the leftover on cell
    ``i+n``, and whatever mass remains on cell 0.
    """
    _check(eps_ind, gap)
    if i < 2:
        raise ConfigError(f"i must be at least 2, got {i!r}")
    top = max_level(eps_ind, gap)
    if not (0 < level <= top * (1 + 1e-12)):
        raise InvalidLevel(f"level must lie in (0, {top:.6g}], got {level!r}")
    level = min(level, top)
    a = math.exp(-eps_ind)
    h = gap / i
    n = int(math.floor(1.0 / (level * h) + 1e-12))
    rest = max(0.0, (1.0 - n * level * h) / h)
    size = i + n + 1
    b = np.zeros(size)
    b[i:i + n] = level
    b[i + n] = rest
    u = np.zeros(size)
    u[1:i + n] = a * level
    u[i + n] = a * rest
    u[0] = (1.0 - a - a * (i - 1) * level * h) / h
    return DiscretePair(eps_ind, gap, i, level, b, u)


def level_to_eta(eps_ind, gap, level):
    """Zero-inflation parameter the step pair converges to as ``i`` grows."""
    a = math.exp(-eps_ind)
    return a * (1.0 + level * gap)


def brute_force_frontier(eps_ind: float, gap: float, i: int = 64,
                         L_grid: int = 200) -> list[FrontierPoint]:
    """Frontier traced by the exact optimal step pairs over a grid of levels."""
    top = max_level(eps_ind, gap)
    pts = []
    for level in np.linspace(top / L_grid, top, L_grid):
        pair = discrete_optimal_pair(eps_ind, gap, i, float(level))
        e_b, e_u = pair.expectations()
        pts.append(FrontierPoint(level_to_eta(eps_ind, gap, float(level)), e_b, e_u))
    return non_dominated(pts)


def frontier_distance(point: FrontierPoint, eps_ind: float, gap: float,
                      n_dense: int = 200_001) -> float:
    """Smallest worst-coordinate relative deviation between ``point`` and the
    analytic frontier arc."""
    a = math.exp(-eps_ind)
    eta = np.linspace(min(2 * a, 1.0), 1.0, n_dense)
    e_b, e_u = ziu_expectations(eps_ind, gap, eta)
    dev = np.maximum(np.abs(e_b - point.e_batched) / e_b, np.abs(e_u - point.e_unbatched) / e_u)
    return float(dev.min())
