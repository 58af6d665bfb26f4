"""Non-negative delay distributions and one-sided indistinguishable pairs.

A delay distribution is one of five small frozen dataclasses
(:class:`Exponential`, :class:`StaircaseAbs`, :class:`Uniform`,
:class:`ZeroInflatedUniform`, :class:`Shifted`). They all share the same
duck-typed surface: ``sample``, ``mean``, ``atoms``, ``breakpoints`` and
``piece_density``. The last two describe the density as a sequence of
analytic pieces, which is what :func:`verify_indistinguishable` needs to
certify the sup-over-sets ratio without sampling.

A :class:`NoisePair` couples a distribution for batched events with one for
unbatched events. :func:`build_pair` constructs the four standard families
at an indistinguishability budget ``eps_ind`` and a gap ``gap``; the
mechanism layer is responsible for passing half of its own epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Union

import numpy as np

from delaymask.errors import EtaOutOfRange, NonPositiveParam, UnsupportedSpec, ConfigError

FAMILIES = ("exponential", "staircase", "uniform", "ziu")

# Reject eta this close to exp(-eps): the uniform upper end blows up there.
ETA_GUARD = 1e-9
RATIO_TOL = 1e-9
CUT_MERGE_REL = 1e-10


def _check_positive(name, value):
    if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
        raise NonPositiveParam(f"{name} must be a positive finite number, got {value!r}")


def _draw_uniform(rng, size):
    return rng.random(size) if size is not None else float(rng.random())


@dataclass(frozen=True)
class Exponential:
    """Exponential delay parameterized by its rate (1/time)."""

    rate: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        _check_positive("rate", self.rate)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def mean(self):
        return 1.0 / self.rate

    def atoms(self):
        return ()

    def support_end(self):
        return math.inf

    def tail_length(self):
        return 1.0 / self.rate

    def breakpoints(self, upto):
        return [0.0]

    def piece_density(self, x, ref):
        x = np.asarray(x, dtype=float)
        ref = np.asarray(ref, dtype=float)
        return np.where(ref > 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)


@dataclass(frozen=True)
class StaircaseAbs:
    """Absolute value of the staircase distribution.

    Density on ``[k*delta, (k+1)*delta)`` is ``2a * exp(-k*eps)`` over the
    first ``gamma`` fraction of the period and ``2a * exp(-(k+1)*eps)`` over
    the rest, with ``a = (1 - e^-eps) / (2 delta (gamma + e^-eps (1 - gamma)))``.
    """

    eps: float
    delta: float
    gamma: float
    family: ClassVar[str] = "staircase_abs"

    def __post_init__(self):
        _check_positive("eps", self.eps)
        _check_positive("delta", self.delta)
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma!r}")

    @classmethod
    def optimal(cls, eps, delta):
        return cls(eps, delta, 1.0 / (1.0 + math.exp(eps / 2.0)))

    @property
    def _decay(self):
        return math.exp(-self.eps)

    @property
    def _height(self):
        r = self._decay
        return -math.expm1(-self.eps) / (self.delta * (self.gamma + r * (1.0 - self.gamma)))

    def sample(self, rng, size=None):
        r = self._decay
        shape = () if size is None else size
        # numpy's geometric counts trials, so subtract one to get the period index
        k = rng.geometric(-math.expm1(-self.eps), shape) - 1
        p_first = self.gamma / (self.gamma + r * (1.0 - self.gamma))
        first = rng.random(shape) < p_first
        v = rng.random(shape)
        frac = np.where(first, v * self.gamma, self.gamma + v * (1.0 - self.gamma))
        out = (k + frac) * self.delta
        return float(out) if size is None else out

    def mean(self):
        r = self._decay
        g = self.gamma
        p_first = g / (g + r * (1.0 - g))
        within = p_first * g / 2.0 + (1.0 - p_first) * (1.0 + g) / 2.0
        return self.delta * (r / -math.expm1(-self.eps) + within)

    def atoms(self):
        return ()

    def support_end(self):
        return math.inf

    def tail_length(self):
        return self.delta

    def breakpoints(self, upto):
        pts = []
        k = 0
        while k * self.delta <= upto:
            pts.append(k * self.delta)
            pts.append((k + self.gamma) * self.delta)
            k += 1
        return pts

    def piece_density(self, x, ref):
        ref = np.asarray(ref, dtype=float)
        pos = np.maximum(ref, 0.0) / self.delta
        k = np.floor(pos)
        in_first = (pos - k) < self.gamma
        level = 2.0 * self._height * np.exp(-self.eps * k) * np.where(in_first, 1.0, self._decay)
        return np.where(ref > 0, level, 0.0)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.lo) and self.lo >= 0):
            raise NonPositiveParam(f"lo must be finite and non-negative, got {self.lo!r}")
        if not (math.isfinite(self.hi) and self.hi > self.lo):
            raise NonPositiveParam(f"hi must be finite and exceed lo, got {self.hi!r}")

    def sample(self, rng, size=None):
        return self.lo + (self.hi - self.lo) * _draw_uniform(rng, size)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def atoms(self):
        return ()

    def support_end(self):
        return self.hi

    def breakpoints(self, upto):
        return [self.lo, self.hi]

    def piece_density(self, x, ref):
        ref = np.asarray(ref, dtype=float)
        return np.where((ref > self.lo) & (ref < self.hi), 1.0 / (self.hi - self.lo), 0.0)


@dataclass(frozen=True)
class ZeroInflatedUniform:
    """Zero with probability ``1 - eta``, otherwise ``Uniform(0, hi)``."""

    eta: float
    hi: float
    family: ClassVar[str] = "zero_inflated_uniform"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise EtaOutOfRange(f"eta must lie in (0, 1], got {self.eta!r}")
        _check_positive("hi", self.hi)

    def sample(self, rng, size=None):
        # One uniform per draw: values below eta are rescaled onto the uniform
        # branch, so eta == 1 reproduces Uniform(0, hi) draw for draw.
        u = rng.random(size) if size is not None else float(rng.random())
        out = np.where(u < self.eta, u / self.eta * self.hi, 0.0)
        return float(out) if size is None else out

    def mean(self):
        return 0.5 * self.eta * self.hi

    def atoms(self):
        return ((0.0, 1.0 - self.eta),) if self.eta < 1.0 else ()

    def support_end(self):
        return self.hi

    def breakpoints(self, upto):
        return [0.0, self.hi]

    def piece_density(self, x, ref):
        ref = np.asarray(ref, dtype=float)
        return np.where((ref > 0) & (ref < self.hi), self.eta / self.hi, 0.0)


@dataclass(frozen=True)
class Shifted:
    offset: float
    inner: "DelaySpec"
    family: ClassVar[str] = "shifted"

    def __post_init__(self):
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise NonPositiveParam(f"offset must be finite and non-negative, got {self.offset!r}")

    def sample(self, rng, size=None):
        return self.offset + self.inner.sample(rng, size)

    def mean(self):
        return self.offset + self.inner.mean()

    def atoms(self):
        return tuple((loc + self.offset, m) for loc, m in self.inner.atoms())

    def support_end(self):
        return self.offset + self.inner.support_end()

    def tail_length(self):
        return self.inner.tail_length()

    def breakpoints(self, upto):
        return [b + self.offset for b in self.inner.breakpoints(upto - self.offset)]

    def piece_density(self, x, ref):
        return self.inner.piece_density(np.asarray(x, dtype=float) - self.offset,
                                        np.asarray(ref, dtype=float) - self.offset)


DelaySpec = Union[Exponential, StaircaseAbs, Uniform, ZeroInflatedUniform, Shifted]
_SPEC_TYPES = (Exponential, StaircaseAbs, Uniform, ZeroInflatedUniform, Shifted)


def sample(spec: DelaySpec, rng: np.random.Generator, size=None):
    """Draw one delay (or an array of ``size`` delays) from ``spec``."""
    return spec.sample(rng, size)


def expected_delay(spec: DelaySpec) -> float:
    """Closed-form mean of ``spec``."""
    return float(spec.mean())


@dataclass(frozen=True)
class NoisePair:
    """Distributions for batched and unbatched events.

    ``eps_ind`` is the indistinguishability budget of the pair, which is half
    of the epsilon the posting mechanism advertises.
    """

    batched: DelaySpec
    unbatched: DelaySpec
    eps_ind: float
    gap: float
    family: str | None = None
    eta: float | None = None

    def expected(self):
        return expected_delay(self.batched), expected_delay(self.unbatched)

    def verify(self, grid_n=64):
        return verify_indistinguishable(self, grid_n)


def build_pair(family: str, eps_ind: float, gap: float, eta: float | None = None) -> NoisePair:
    """Construct the standard ``(eps_ind, gap)``-indistinguishable pair for ``family``.

    ``family`` is one of ``exponential``, ``staircase``, ``uniform`` or
    ``ziu`` (zero-inflated uniform, which needs ``exp(-eps_ind) < eta <= 1``).
    With ``eta == 1`` the ziu pair is exactly the uniform pair.
    """
    _check_positive("eps_ind", eps_ind)
    _check_positive("gap", gap)
    eps_ind = float(eps_ind)
    gap = float(gap)
    if family == "exponential":
        core = Exponential(eps_ind / gap)
        return NoisePair(Shifted(gap, core), core, eps_ind, gap, family)
    if family == "staircase":
        core = StaircaseAbs.optimal(eps_ind, gap)
        return NoisePair(Shifted(gap, core), core, eps_ind, gap, family)
    if family == "uniform":
        hi = gap / -math.expm1(-eps_ind)
        return NoisePair(Uniform(gap, hi), Uniform(0.0, hi), eps_ind, gap, family, 1.0)
    if family == "ziu":
        if eta is None:
            raise EtaOutOfRange("family 'ziu' requires eta")
        floor = math.exp(-eps_ind)
        if not (floor + ETA_GUARD < eta <= 1.0):
            raise EtaOutOfRange(
                f"eta must lie in (exp(-eps_ind), 1] = ({floor:.6g}, 1], got {eta!r}")
        if eta == 1.0:
            base = build_pair("uniform", eps_ind, gap)
            return NoisePair(base.batched, base.unbatched, eps_ind, gap, family, 1.0)
        hi = eta * gap / (eta - floor)
        return NoisePair(Uniform(gap, hi), ZeroInflatedUniform(eta, hi), eps_ind, gap, family,
                         float(eta))
    raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class IndistinguishabilityReport:
    max_log_ratio: float
    witness_interval: tuple[float, float]
    witness_shift: float
    eps_ind: float
    passes: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passes", bool(self.max_log_ratio <= self.eps_ind + RATIO_TOL))


def _horizon(spec, gap):
    end = spec.support_end()
    if math.isfinite(end):
        return end
    # Exponential and staircase ratios repeat with the tail period, so a few
    # periods past the gap cover every distinct configuration.
    first = min(spec.breakpoints(0.0) or [0.0])
    return first + gap + 4.0 * spec.tail_length()


def verify_indistinguishable(pair: NoisePair, grid_n: int = 64) -> IndistinguishabilityReport:
    """Certify ``Pr[B in S] <= exp(eps) Pr[U in S - t0]`` for all ``S`` and ``t0 in [0, gap]``.

    The sup over sets equals the essential sup of the density ratio
    ``b(x) / u(x - t0)``. For each candidate shift the real line is cut at
    every breakpoint of ``b`` and of the shifted ``u`` plus ``grid_n``
    uniform cells; inside each cell both densities are a single analytic
    piece (constant or exponential), so the ratio is monotone there and its
    sup is attained at a cell endpoint. Shifts are ``0``, ``gap``, ``grid_n``
    intermediate values and every shift that aligns a breakpoint of ``u``
    with one of ``b``.
    """
    if not isinstance(grid_n, int) or grid_n < 1:
        raise NonPositiveParam(f"grid_n must be a positive integer, got {grid_n!r}")
    for spec in (pair.batched, pair.unbatched):
        if not isinstance(spec, _SPEC_TYPES):
            raise UnsupportedSpec(f"cannot analyse {type(spec).__name__}")
    b_spec, u_spec, gap = pair.batched, pair.unbatched, pair.gap

    upto = max(_horizon(b_spec, gap), _horizon(u_spec, gap) + gap)
    b_bp = sorted(set(b_spec.breakpoints(upto)))
    u_bp = sorted(set(u_spec.breakpoints(upto)))

    shifts = set(np.linspace(0.0, gap, grid_n + 2).tolist())
    for xb in b_bp:
        for xu in u_bp:
            d = xb - xu
            if 0.0 <= d <= gap:
                shifts.add(d)
    shifts = np.array(sorted(shifts))

    # Atoms of B can only be matched by atoms of U at every shift in [0, gap].
    for loc, mass in b_spec.atoms():
        if mass <= 0:
            continue
        u_atoms = {a for a, m in u_spec.atoms() if m > 0}
        for t0 in (0.0, gap, 0.5 * gap):
            if loc - t0 not in u_atoms:
                return IndistinguishabilityReport(math.inf, (loc, loc), float(t0), pair.eps_ind)

    b_lo = b_bp[0] if b_bp else 0.0
    grid = np.linspace(b_lo, upto, grid_n + 1)

    best = -math.inf
    witness = ((math.nan, math.nan), math.nan)
    for t0 in shifts:
        cuts = np.unique(np.concatenate([grid, b_bp, np.asarray(u_bp) + t0]))
        cuts = cuts[(cuts >= b_lo) & (cuts <= upto)]
        # Breakpoints that coincide mathematically can differ by rounding;
        # the sliver between them would be read with mismatched pieces.
        if cuts.size > 1:
            keep = np.concatenate([[True], np.diff(cuts) > CUT_MERGE_REL * max(upto, 1.0)])
            cuts = cuts[keep]
        if cuts.size < 2:
            continue
        left, right = cuts[:-1], cuts[1:]
        keep = right > left
        left, right = left[keep], right[keep]
        mid = 0.5 * (left + right)
        for edge in (left, right):
            bd = b_spec.piece_density(edge, mid)
            ud = u_spec.piece_density(edge - t0, mid - t0)
            with np.errstate(divide="ignore", invalid="ignore"):
                lr = np.where(bd > 0, np.where(ud > 0, np.log(bd) - np.log(ud), np.inf), -np.inf)
            j = int(np.argmax(lr))
            if lr[j] > best:
                best = float(lr[j])
                witness = ((float(left[j]), float(right[j])), float(t0))
    return IndistinguishabilityReport(best, witness[0], witness[1], pair.eps_ind)


def spec_to_dict(spec: DelaySpec) -> dict[str, Any]:
    """Serialize a spec to the JSON object described in ``schema/delay_spec.schema.json``."""
    if isinstance(spec, Exponential):
        return {"family": "exponential", "rate": spec.rate}
    if isinstance(spec, StaircaseAbs):
        return {"family": "staircase_abs", "eps": spec.eps, "delta": spec.delta, "gamma": spec.gamma}
    if isinstance(spec, Uniform):
        return {"family": "uniform", "lo": spec.lo, "hi": spec.hi}
    if isinstance(spec, ZeroInflatedUniform):
        return {"family": "zero_inflated_uniform", "eta": spec.eta, "hi": spec.hi}
    if isinstance(spec, Shifted):
        return {"family": "shifted", "offset": spec.offset, "inner": spec_to_dict(spec.inner)}
    raise UnsupportedSpec(f"cannot serialize {type(spec).__name__}")


def spec_from_dict(obj: dict[str, Any]) -> DelaySpec:
    try:
        fam = obj["family"]
        if fam == "exponential":
            return Exponential(float(obj["rate"]))
        if fam == "staircase_abs":
            return StaircaseAbs(float(obj["eps"]), float(obj["delta"]), float(obj["gamma"]))
        if fam == "uniform":
            return Uniform(float(obj["lo"]), float(obj["hi"]))
        if fam == "zero_inflated_uniform":
            return ZeroInflatedUniform(float(obj["eta"]), float(obj["hi"]))
        if fam == "shifted":
            return Shifted(float(obj["offset"]), spec_from_dict(obj["inner"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed delay spec {obj!r}: {exc}") from exc
    raise UnsupportedSpec(f"unknown delay spec family {obj.get('family')!r}")


def pair_to_dict(pair: NoisePair) -> dict[str, Any]:
    return {
        "batched": spec_to_dict(pair.batched),
        "unbatched": spec_to_dict(pair.unbatched),
        "eps_ind": pair.eps_ind,
        "gap": pair.gap,
        "family": pair.family,
        "eta": pair.eta,
    }
