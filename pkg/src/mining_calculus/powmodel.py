"""Closed-form model of a synchronized s-miner mining race.

Each of ``s`` miners owns a disjoint slice of ``lam = 2^r // s`` nonces and
hashes one nonce per round; a hash is a proof of work with probability
``2^-d``. Rounds are 0-based: outcome ``k`` means k failed rounds and then a
success, so the race took ``k + 1`` rounds.

Every probability below is evaluated in the log domain through
:mod:`mining_calculus.numerics`; exponents such as ``s * (lam + 1)`` are
formed with exact integers first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .numerics import FAST, PrecisionTier, ops_for


@dataclass(frozen=True)
class HashSpec:
    """Hash function h: {0,1}^p -> {0,1}^n taking ``T`` seconds per call."""

    n: int = 256
    p: int = 640
    T: float = 0.02e-9

    def __post_init__(self):
        if not (0 < self.n <= self.p):
            raise ValueError(f"need 0 < n <= p, got n={self.n}, p={self.p}")
        if not self.T > 0:
            raise ValueError("T must be positive")


def nonce_share(r: int, s: int) -> int:
    """Per-miner nonce count floor(2^r / s), exact for any r."""
    if r < 1 or s < 1:
        raise ValueError(f"need r >= 1 and s >= 1, got r={r}, s={s}")
    return (1 << r) // s


@dataclass(frozen=True)
class MiningDesign:
    s: int
    r: int
    d: int
    lam: int = field(init=False)

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"miner count must be positive, got {self.s}")
        if self.r < 1:
            raise ValueError(f"nonce bits must be positive, got {self.r}")
        if self.d < 1:
            raise ValueError(f"difficulty must be positive, got {self.d}")
        object.__setattr__(self, "lam", nonce_share(self.r, self.s))

    def check_against(self, spec: HashSpec):
        if not self.d < spec.n:
            raise ValueError(f"difficulty {self.d} must be below output size {spec.n}")
        if not self.r < spec.p:
            raise ValueError(f"nonce bits {self.r} must be below input size {spec.p}")


class Inapplicable:
    """A closed form whose side condition fails.

    Returned instead of a probability so feasibility checks can treat it as
    a violated constraint without exception handling.
    """

    __slots__ = ("reason",)

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Inapplicable({self.reason!r})"

    def __bool__(self):
        return False


def is_inapplicable(value) -> bool:
    return isinstance(value, Inapplicable)


# Round counts derived from wall-clock thresholds. Float division on purpose:
# constants arrive as doubles and these are the values the constraints use.

def rounds_above(th: float, T: float) -> int:
    """ceil(th/T - 1): last round index that still finishes within th."""
    return math.ceil(th / T - 1)


def rounds_below(th_prime: float, T: float) -> int:
    """floor(th'/T - 1)."""
    return math.floor(th_prime / T - 1)


def hashes_within(mu: float, T: float) -> int:
    """floor(mu/T): hashes one miner computes in mu seconds."""
    return math.floor(mu / T)


def _ln_y(design: MiningDesign, ops):
    return ops.scale(ops.ln_base(design.d), design.s)


def survival_per_round(design: MiningDesign, tier: PrecisionTier = FAST):
    """y = (1 - 2^-d)^s, the chance that a whole round produces no proof."""
    ops = ops_for(tier)
    return ops.exp(_ln_y(design, ops))


def round_pmf(k: int, design: MiningDesign, tier: PrecisionTier = FAST):
    """Probability that the race succeeds exactly in round ``k``."""
    if not 0 <= k <= design.lam:
        raise IndexError(f"round {k} outside 0..{design.lam}")
    ops = ops_for(tier)
    ln_y = _ln_y(design, ops)
    return ops.exp(ops.scale(ln_y, k)) * -ops.expm1(ln_y)


def failure_prob(design: MiningDesign, tier: PrecisionTier = FAST):
    """(1 - 2^-d)^(s * (lam + 1))."""
    ops = ops_for(tier)
    return ops.pow_from_log(ops.scale(ops.ln_base(design.d), design.s * (design.lam + 1))).value


def expected_rounds(design: MiningDesign, tier: PrecisionTier = FAST):
    """Closed form of sum_{k=0}^{lam} pmf(k) * (k + 1).

    Written as (1 - y^(L)) / (1 - y) - L * y^L with L = lam + 1, which is
    the textbook expression with the common factor divided out; it avoids
    subtracting nearly equal terms when y is 1 - 1e-19.
    """
    ops = ops_for(tier)
    ln_y = _ln_y(design, ops)
    count = design.lam + 1
    ln_tail = ops.scale(ln_y, count)
    tail = ops.exp(ln_tail)
    return ops.expm1(ln_tail) / ops.expm1(ln_y) - ops.num(count) * tail


def expected_pow_time(design: MiningDesign, T: float, tier: PrecisionTier = FAST):
    if not T > 0:
        raise ValueError("T must be positive")
    return ops_for(tier).num(T) * expected_rounds(design, tier)


def prob_time_gt(design: MiningDesign, T: float, th: float, tier: PrecisionTier = FAST):
    """P(PoW takes longer than ``th``) = y^(a+1) - y^(lam+1), a = ceil(th/T - 1).

    Needs ``a < lam``; otherwise returns :class:`Inapplicable`.
    """
    a = rounds_above(th, T)
    if not a < design.lam:
        return Inapplicable(f"ceil(th/T - 1) = {a} is not below lam = {design.lam}")
    ops = ops_for(tier)
    ln_y = _ln_y(design, ops)
    head = ops.exp(ops.scale(ln_y, a + 1))
    # y^(a+1) * (1 - y^(lam - a)) keeps the difference accurate
    return head * -ops.expm1(ops.scale(ln_y, design.lam - a))


def prob_time_lt(design: MiningDesign, T: float, th_prime: float, tier: PrecisionTier = FAST):
    """P(PoW takes less than ``th'``) = 1 - y^(b+1), b = floor(th'/T - 1) > 0.

    Exact for b <= lam. For larger b the geometric sum runs past the nonce
    space and the value exceeds 1 - y^(lam+1), approaching the success rate
    conditional on not failing.
    """
    b = rounds_below(th_prime, T)
    if not b > 0:
        return Inapplicable(f"floor(th'/T - 1) = {b} is not positive")
    ops = ops_for(tier)
    return -ops.expm1(ops.scale(_ln_y(design, ops), b + 1))


def dispute_prob(design: MiningDesign, T: float, mu: float, tier: PrecisionTier = FAST):
    """P(two or more miners find a proof within ``mu`` seconds).

    With w = (1 - 2^-d)^(floor(mu/T) + 1) this is 1 + (s-1) w^s - s w^(s-1),
    evaluated here as (1 - w^s) - s w^(s-1) (1 - w).
    """
    m = hashes_within(mu, T)
    if m < 0:
        return Inapplicable(f"floor(mu/T) = {m} is negative")
    s = design.s
    ops = ops_for(tier)
    ln_w = ops.scale(ops.ln_base(design.d), m + 1)
    none_found = -ops.expm1(ops.scale(ln_w, s))
    one_found = ops.num(s) * ops.exp(ops.scale(ln_w, s - 1)) * -ops.expm1(ln_w)
    value = none_found - one_found
    # s = 1 is exactly zero in real arithmetic
    return ops.zero if s == 1 else max(value, ops.zero)


def pool_win_prob(l: int, s: int, c: int) -> float:
    """Chance that ``l`` colluding miners out of ``s`` win ``c`` races in a row."""
    if not 1 <= l < s:
        raise ValueError(f"pool size must satisfy 1 <= l < s, got l={l}, s={s}")
    if c < 1:
        raise ValueError(f"need c >= 1, got {c}")
    return (l / s) ** c


def pool_bound_holds(l: int, s: int, c: int, delta3) -> bool:
    """l^c <= delta3 * s^c, compared exactly."""
    return Fraction(l) ** c <= Fraction(delta3) * Fraction(s) ** c


@dataclass(frozen=True)
class RaceDistribution:
    design: MiningDesign
    y: float
    failure_prob: float
    expected_rounds: float


def race_distribution(design: MiningDesign, tier: PrecisionTier = FAST) -> RaceDistribution:
    return RaceDistribution(
        design,
        survival_per_round(design, tier),
        failure_prob(design, tier),
        expected_rounds(design, tier),
    )
