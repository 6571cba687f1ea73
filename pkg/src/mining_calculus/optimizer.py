"""Constraint system, robust feasibility and the top-p enumeration.

The search space is tiny in the number of variables (s, r, d) but the
constraints involve powers like (1 - 2^-44)^(2^48), so instead of handing the
problem to a MINLP solver we enumerate every triple within the bounds, filter
with the fast tier, and confirm the handful of reported tuples with the
exact tier.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from decimal import ROUND_CEILING, Decimal

from . import powmodel as pm
from .numerics import DEFAULT_DIGITS, FAST, PrecisionTier, exact, ops_for

log = logging.getLogger(__name__)

INT_FIELDS = ("s_l", "s_u", "r_l", "r_u", "d_l", "d_u", "report_count", "u_d", "u_s", "c", "l")
PROB_FIELDS = ("delta", "delta1", "delta2", "delta3", "epsilon")


@dataclass(frozen=True)
class ScenarioConstants:
    s_l: int
    s_u: int
    r_l: int
    r_u: int
    d_l: int
    d_u: int
    TVC: float
    TFC: float
    alpha: float
    T: float
    th: float
    th_prime: float
    delta: float
    delta1: float
    delta2: float
    delta3: float
    tau_l: float
    tau_u: float
    mu: float
    epsilon: float
    report_count: int
    u_d: int
    u_s: int
    c: int
    l: int

    def __post_init__(self):
        problems = []
        for name in INT_FIELDS:
            if not isinstance(getattr(self, name), int):
                problems.append(f"{name} must be an integer")
        if not 0 < self.s_l <= self.s_u:
            problems.append("need 0 < s_l <= s_u")
        if not 0 < self.r_l <= self.r_u:
            problems.append("need 0 < r_l <= r_u")
        if not 0 < self.d_l <= self.d_u:
            problems.append("need 0 < d_l <= d_u")
        if not self.alpha >= 1:
            problems.append("alpha must be >= 1")
        if not self.T > 0:
            problems.append("T must be positive")
        for name in PROB_FIELDS:
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name} must lie in [0, 1]")
        if not self.tau_l <= self.tau_u:
            problems.append("need tau_l <= tau_u")
        if self.report_count < 1:
            problems.append("report_count must be positive")
        if self.u_d < 0 or self.u_s < 0:
            problems.append("uncertainty radii u_d, u_s must be non-negative")
        if self.c < 1 or self.l < 1:
            problems.append("c and l must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    def with_(self, **changes) -> "ScenarioConstants":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def base_scenario(tau_u: float = 1454 / 7, **overrides) -> ScenarioConstants:
    """Constants of the reference experiments (configuration C1)."""
    values = dict(
        s_l=4, s_u=80, r_l=24, r_u=64, d_l=4, d_u=64,
        TVC=2e-12, TFC=3000.0, alpha=1.5, T=0.02e-9, th=300.0, th_prime=300.0,
        delta=1e-9, delta1=1.0, delta2=0.001, delta3=0.001,
        tau_l=0.0, tau_u=tau_u, mu=1 / 10000, epsilon=2.0 ** -64,
        report_count=5, u_d=3, u_s=5, c=6, l=4,
    )
    values.update(overrides)
    return ScenarioConstants(**values)


CONFIGURATIONS = {
    "C1": dict(delta=1e-9, delta2=0.001, delta3=0.001),
    "C2": dict(delta=2.0 ** -64, delta2=0.001, delta3=0.001),
    "C3": dict(delta=2.0 ** -64, delta2=0.001, delta3=0.0001),
}

CONSTRAINTS = (
    "s_bounds", "r_bounds", "d_bounds", "failure", "th_rounds", "th_prime_rounds",
    "tau_lower", "tau_upper", "time_lt", "time_gt", "dispute", "mu_rounds",
    "pool_size", "pool_power",
)


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    violated: tuple
    tier: PrecisionTier


@dataclass(frozen=True)
class CandidateResult:
    s: int
    r: int
    d: int
    cost: float
    robust_cost: float

    @property
    def triple(self):
        return (self.s, self.r, self.d)


def ceil3(value) -> Decimal:
    """Round up at the third decimal place (display only)."""
    return Decimal(value).quantize(Decimal("0.001"), rounding=ROUND_CEILING)


def cost(s: int, r: int, d: int, constants: ScenarioConstants, tier: PrecisionTier = FAST):
    """TVC * E(rounds) * s + TFC * s."""
    design = pm.MiningDesign(s, r, d)
    ops = ops_for(tier)
    E = pm.expected_rounds(design, tier)
    return ops.num(constants.TVC) * E * s + ops.num(constants.TFC) * s


def _box(s: int, d: int, constants: ScenarioConstants):
    for s2 in range(s - constants.u_s, s + 1):
        for d2 in range(d - constants.u_d, d + constants.u_d + 1):
            yield s2, d2


def robust_cost(s: int, r: int, d: int, constants: ScenarioConstants, tier: PrecisionTier = FAST):
    """Worst cost over s - u_s <= s' <= s and |d - d'| <= u_d."""
    return max(cost(s2, r, d2, constants, tier)
               for s2, d2 in _box(s, d, constants) if s2 >= 1 and d2 >= 1)


def _violations(s, r, d, k: ScenarioConstants, tier: PrecisionTier, stop_early: bool):
    out = []
    if not k.s_l <= s <= k.s_u:
        out.append("s_bounds")
    if not k.r_l <= r <= k.r_u:
        out.append("r_bounds")
    if not k.d_l <= d <= k.d_u:
        out.append("d_bounds")
    if out and stop_early:
        return out
    if s < 1 or r < 1 or d < 1:
        # closed forms are undefined here; the bound violations say why
        return out

    ops = ops_for(tier)
    num = ops.num
    design = pm.MiningDesign(s, r, d)

    def fail(name):
        out.append(name)
        return stop_early

    if pm.failure_prob(design, tier) > num(k.epsilon) and fail("failure"):
        return out
    if pm.hashes_within(k.mu, k.T) < 0 and fail("mu_rounds"):
        return out
    if not (1 <= k.l < s) and fail("pool_size"):
        return out
    if not pm.pool_bound_holds(k.l, s, k.c, k.delta3) and fail("pool_power"):
        return out
    dispute = pm.dispute_prob(design, k.T, k.mu, tier)
    if dispute > num(k.delta2) and fail("dispute"):
        return out

    tail = pm.prob_time_gt(design, k.T, k.th, tier)
    if pm.is_inapplicable(tail):
        if fail("th_rounds"):
            return out
    elif tail > num(k.delta) and fail("time_gt"):
        return out

    head = pm.prob_time_lt(design, k.T, k.th_prime, tier)
    if pm.is_inapplicable(head):
        if fail("th_prime_rounds"):
            return out
    elif head > num(k.delta1) and fail("time_lt"):
        return out

    t = pm.expected_pow_time(design, k.T, tier)
    if t > num(k.tau_u) and fail("tau_upper"):
        return out
    if t < num(k.tau_l) and fail("tau_lower"):
        return out
    return out


def check_feasible(s: int, r: int, d: int, constants: ScenarioConstants,
                   tier: PrecisionTier = FAST) -> FeasibilityVerdict:
    """Evaluate every constraint on (s, r, d) and list the violated ones."""
    violated = tuple(_violations(s, r, d, constants, tier, stop_early=False))
    return FeasibilityVerdict(not violated, violated, tier)


def is_feasible(s, r, d, constants, tier: PrecisionTier = FAST) -> bool:
    return not _violations(s, r, d, constants, tier, stop_early=True)


def robust_feasible(s: int, r: int, d: int, constants: ScenarioConstants,
                    tier: PrecisionTier = FAST, _cache: dict | None = None) -> bool:
    """Feasible for every (s', r, d') in the uncertainty box around (s, r, d)."""
    for s2, d2 in _box(s, d, constants):
        key = (s2, r, d2)
        if _cache is not None and key in _cache:
            ok = _cache[key]
        else:
            ok = is_feasible(s2, r, d2, constants, tier)
            if _cache is not None:
                _cache[key] = ok
        if not ok:
            return False
    return True


def _feasible_slice(args):
    s, constants = args
    rows = []
    for r in range(constants.r_l, constants.r_u + 1):
        for d in range(constants.d_l, constants.d_u + 1):
            if is_feasible(s, r, d, constants):
                rows.append((s, r, d))
    return rows


def feasible_grid(constants: ScenarioConstants, workers: int = 1) -> list:
    """All fast-tier feasible triples, ordered by s, then r, then d."""
    jobs = [(s, constants) for s in range(constants.s_l, constants.s_u + 1)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            slices = list(pool.map(_feasible_slice, jobs))
    else:
        slices = [_feasible_slice(job) for job in jobs]
    return [row for part in slices for row in part]


def _dominance_key(entry):
    s, r, d, c = entry
    return (c, r, s)


def enumerate_optimal(constants: ScenarioConstants, workers: int = 1,
                      digits: int = DEFAULT_DIGITS) -> list:
    """Report up to ``report_count`` robustly feasible tuples, largest d first.

    Steps: fast-feasible grid, fast robust filter, one tuple per d (lowest
    cost, then lowest r, then lowest s), cost tolerance alpha * c_m, cut to
    ``report_count`` in descending d, then exact-tier robust confirmation.
    """
    feasible = feasible_grid(constants, workers)
    cache = {t: True for t in feasible}
    robust = [(s, r, d) for s, r, d in feasible if robust_feasible(s, r, d, constants, FAST, cache)]
    priced = [(s, r, d, cost(s, r, d, constants)) for s, r, d in robust]

    best = {}
    for entry in priced:
        d = entry[2]
        if d not in best or _dominance_key(entry) < _dominance_key(best[d]):
            best[d] = entry
    if not best:
        return []
    c_m = min(entry[3] for entry in best.values())
    kept = [best[d] for d in sorted(best, reverse=True) if best[d][3] <= constants.alpha * c_m]
    shortlist = kept[:constants.report_count]

    tier = exact(digits)
    results = []
    for s, r, d, c in shortlist:
        if robust_feasible(s, r, d, constants, tier):
            results.append(CandidateResult(s, r, d, c, robust_cost(s, r, d, constants)))
        else:
            log.warning("fast tier accepted (%d, %d, %d) but %s rejected it", s, r, d, tier)
    return results


def feasible_r_range(s: int, d: int, constants: ScenarioConstants,
                     tier: PrecisionTier | None = None) -> list:
    """Every r in [r_l, r_u] for which (s, r, d) is robustly feasible.

    Returned as an explicit list: feasibility need not be monotone in r.
    """
    tier = exact() if tier is None else tier
    cache: dict = {}
    return [r for r in range(constants.r_l, constants.r_u + 1)
            if robust_feasible(s, r, d, constants, tier, cache)]


def scenario_field_names():
    return [f.name for f in fields(ScenarioConstants)]
