"""Survival powers (1 - 2^-d)^E for exponents far beyond double range.

Two precision tiers are offered. The fast tier works on doubles in the log
domain (``log1p``/``expm1``); the exact tier uses mpmath at a configurable
number of decimal mantissa digits. Expressions such as
``(1 - 2^-41)^(2^48)`` are the reason both exist: naive double arithmetic
rounds the base to 1.0 and silently reports the power as 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import mpmath

DEFAULT_DIGITS = 60
MIN_DIGITS = 30
# Smallest decimal exponent the exact tier will represent (mirrors the
# stdlib decimal module's MIN_EMIN); anything smaller is reported as 0.
EXACT_MIN_LOG10 = -999_999_999_999_999_999

Number = Union[float, "mpmath.mpf"]


@dataclass(frozen=True)
class PrecisionTier:
    """Fast (IEEE doubles) when ``digits`` is None, otherwise exact."""

    digits: int | None = None

    def __post_init__(self):
        if self.digits is not None and self.digits < MIN_DIGITS:
            raise ValueError(f"exact tier needs at least {MIN_DIGITS} digits, got {self.digits}")

    @property
    def is_exact(self) -> bool:
        return self.digits is not None

    def __str__(self):
        return "fast" if self.digits is None else f"exact({self.digits})"


FAST = PrecisionTier()


def exact(digits: int = DEFAULT_DIGITS) -> PrecisionTier:
    return PrecisionTier(digits)


class Survival(NamedTuple):
    value: Number
    underflow: bool


class FastOps:
    """Double-precision backend."""

    tier = FAST
    zero = 0.0
    one = 1.0

    @staticmethod
    def num(x) -> float:
        return float(x)

    @staticmethod
    def ln_base(d: int) -> float:
        return math.log1p(-math.ldexp(1.0, -d))

    @staticmethod
    def exp(x: float) -> float:
        return math.exp(x)

    @staticmethod
    def expm1(x: float) -> float:
        return math.expm1(x)

    @staticmethod
    def log1p(x: float) -> float:
        return math.log1p(x)

    @staticmethod
    def scale(ln_value, k: int):
        # k may be a huge int; float(k) keeps 53 bits which is all a double
        # product can use anyway.
        return ln_value * float(k)

    def pow_from_log(self, ln_value: float) -> Survival:
        v = math.exp(ln_value)
        return Survival(v, v == 0.0 and ln_value != -math.inf)


class ExactOps:
    """mpmath backend at a fixed number of decimal digits."""

    zero: "mpmath.mpf"
    one: "mpmath.mpf"

    def __init__(self, digits: int):
        self.tier = PrecisionTier(digits)
        self.ctx = mpmath.MPContext()
        # guard digits absorb the error of exp(E * ln b) for large |E * ln b|
        self.ctx.dps = digits + 20
        self.zero = self.ctx.mpf(0)
        self.one = self.ctx.mpf(1)

    def num(self, x):
        return self.ctx.mpf(x)

    def ln_base(self, d: int):
        return self.ctx.log1p(-self.ctx.ldexp(1, -d))

    def exp(self, x):
        return self.ctx.exp(x)

    def expm1(self, x):
        return self.ctx.expm1(x)

    def log1p(self, x):
        return self.ctx.log1p(x)

    def scale(self, ln_value, k: int):
        return ln_value * self.ctx.mpf(k)

    def pow_from_log(self, ln_value) -> Survival:
        if ln_value / self.ctx.ln10 < EXACT_MIN_LOG10:
            return Survival(self.zero, True)
        return Survival(self.ctx.exp(ln_value), False)


_FAST_OPS = FastOps()


@lru_cache(maxsize=None)
def _exact_ops(digits: int) -> ExactOps:
    return ExactOps(digits)


def ops_for(tier: PrecisionTier = FAST):
    """Arithmetic backend for ``tier``."""
    if tier.digits is None:
        return _FAST_OPS
    return _exact_ops(tier.digits)


def _check_d(d: int):
    if d <= 0:
        raise ValueError(f"difficulty must be positive, got {d}")


def ln_one_minus_pow2(d: int, tier: PrecisionTier = FAST) -> Number:
    """ln(1 - 2^-d), computed through log1p so large d keeps full precision."""
    _check_d(d)
    return ops_for(tier).ln_base(d)


def survival_pow(d: int, exponent: int, tier: PrecisionTier = FAST) -> Survival:
    """(1 - 2^-d)^exponent as ``Survival(value, underflow)``.

    The exponent must be an exact integer; it is never rounded before it
    meets the logarithm of the base.
    """
    _check_d(d)
    if exponent < 0:
        raise ValueError(f"exponent must be non-negative, got {exponent}")
    ops = ops_for(tier)
    if exponent == 0:
        return Survival(ops.one, False)
    return ops.pow_from_log(ops.scale(ops.ln_base(d), exponent))


def tiers_agree(d: int, exponent: int, rel_tol: float, digits: int = DEFAULT_DIGITS) -> bool:
    """Whether the fast tier matches the exact tier within ``rel_tol``."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    fast = survival_pow(d, exponent, FAST)
    slow = survival_pow(d, exponent, exact(digits))
    if fast.underflow and (slow.underflow or slow.value < 2.0 ** -1074):
        return True
    if slow.value == 0:
        return fast.value == 0
    ops = _exact_ops(digits)
    return abs(ops.num(fast.value) - slow.value) <= rel_tol * abs(slow.value)
