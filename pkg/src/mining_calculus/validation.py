"""Compare the analytic race model with simulated campaigns.

Per-triple errors (expected rounds, failure probability, time tails) and a
database of dispute-probability errors over a grid of (mu, T) pairs, which
can be interrogated with ``query(A, B)``: how many entries satisfy A, and
how many of those also satisfy B.
"""
from __future__ import annotations

import csv
import math
import operator
import re
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import powmodel as pm
from .simulator import FAILURE, CampaignRecord

THRESHOLDS = tuple(round(0.01 + b * 0.05, 2) for b in range(21))
MU_GRID = tuple(0.02 * 10 ** -j for j in range(1, 9)) + (1, 2, 10, 100)
T_GRID = tuple(0.02 * 10 ** -j for j in range(1, 9))


@dataclass(frozen=True)
class EmpiricalStats:
    race_count: int
    success_count: int
    failure_freq: float
    mean_winner_rounds: float | None
    time_gt_freq: float | None
    time_lt_freq: float | None
    dispute_freq: float


def _second_smallest(entries: np.ndarray) -> np.ndarray:
    """Per race, the second earliest success round (inf if fewer than two)."""
    e = np.where(entries == FAILURE, np.inf, entries.astype(float))
    if e.shape[1] < 2:
        return np.full(e.shape[0], np.inf)
    return np.partition(e, 1, axis=1)[:, 1]


def dispute_count(campaign: CampaignRecord, within: int, one_based: bool = False) -> int:
    """Races where two or more miners succeed in rounds 0..within.

    ``one_based`` compares the round count k + 1 with ``within`` instead,
    the convention of campaign files that store successes as positive
    round numbers.
    """
    bound = within - 1 if one_based else within
    return int((_second_smallest(campaign.entries) <= bound).sum())


def empirical_stats(campaign: CampaignRecord, mu: float, T: float, th: float, th_prime: float) -> EmpiricalStats:
    n = campaign.race_count
    rounds = campaign.winner_rounds()
    l = len(rounds)
    times = T * rounds.astype(float)
    return EmpiricalStats(
        race_count=n,
        success_count=l,
        failure_freq=(n - l) / n,
        mean_winner_rounds=float(rounds.mean()) if l else None,
        time_gt_freq=int((times > th).sum()) / l if l else None,
        time_lt_freq=int((times < th_prime).sum()) / l if l else None,
        dispute_freq=dispute_count(campaign, pm.hashes_within(mu, T)) / n,
    )


class RoundsError(NamedTuple):
    abs: float
    rel: float


def rounds_errors(campaign: CampaignRecord) -> RoundsError | None:
    """|E(rounds) - mean winner rounds| and its relative form; None without successes."""
    rounds = campaign.winner_rounds()
    if not len(rounds):
        return None
    expected = pm.expected_rounds(campaign.config.design)
    err = abs(expected - float(rounds.mean()))
    return RoundsError(err, err / expected)


def failure_error(campaign: CampaignRecord) -> float:
    n = campaign.race_count
    empirical = (n - campaign.success_count()) / n
    return abs(pm.failure_prob(campaign.config.design) - empirical)


class TailErrors(NamedTuple):
    gt_abs: float | None
    lt_abs: float | None
    skipped: str | None


def tail_errors(campaign: CampaignRecord, T: float = 1.0) -> TailErrors:
    """Errors of P(time > 1.2 T 2^d) and P(time < 0.8 T 2^d).

    The upper-tail error is skipped when ceil(th/T - 1) >= lam, where the
    closed form does not apply; both are None when no race succeeded.
    """
    design = campaign.config.design
    th = 1.2 * T * 2 ** design.d
    th_prime = 0.8 * T * 2 ** design.d
    rounds = campaign.winner_rounds()
    if not len(rounds):
        return TailErrors(None, None, "no successful races")
    times = T * rounds.astype(float)
    l = len(rounds)
    skipped = None
    gt = pm.prob_time_gt(design, T, th)
    if pm.is_inapplicable(gt):
        gt_abs, skipped = None, gt.reason
    else:
        gt_abs = abs(gt - int((times > th).sum()) / l)
    lt = pm.prob_time_lt(design, T, th_prime)
    if pm.is_inapplicable(lt):
        lt_abs = None
        skipped = lt.reason if skipped is None else f"{skipped}; {lt.reason}"
    else:
        lt_abs = abs(lt - int((times < th_prime).sum()) / l)
    return TailErrors(gt_abs, lt_abs, skipped)


@dataclass(frozen=True)
class TripleSummary:
    design: pm.MiningDesign
    failure_theory: float
    failure_empirical: float
    rounds: RoundsError | None
    tails: TailErrors

    @property
    def failure_abs(self) -> float:
        return abs(self.failure_theory - self.failure_empirical)


def summarize(campaign: CampaignRecord) -> TripleSummary:
    n = campaign.race_count
    return TripleSummary(
        campaign.config.design,
        pm.failure_prob(campaign.config.design),
        (n - campaign.success_count()) / n,
        rounds_errors(campaign),
        tail_errors(campaign),
    )


class CurvePoint(NamedTuple):
    x: float
    count: int
    max: float | None
    mean: float | None


def _below(summary: TripleSummary, x: float) -> bool:
    return summary.failure_theory < x or summary.failure_empirical < x


def threshold_curves(summaries: Iterable[TripleSummary], x_grid=THRESHOLDS,
                     metric: Callable[[TripleSummary], float | None] = None) -> list:
    """For each x, max and mean of the metric over triples with failure < x.

    A triple qualifies when its analytic or empirical failure probability is
    below x. The default metric is the absolute expected-rounds error.
    Empty sets give ``None`` for max and mean.
    """
    if metric is None:
        metric = lambda t: t.rounds.abs if t.rounds else None  # noqa: E731
    summaries = list(summaries)
    out = []
    for x in x_grid:
        values = [v for t in summaries if _below(t, x) for v in (metric(t),) if v is not None]
        if values:
            out.append(CurvePoint(x, len(values), max(values), sum(values) / len(values)))
        else:
            out.append(CurvePoint(x, 0, None, None))
    return out


@lru_cache(maxsize=None)
def _failure(s: int, r: int, d: int) -> float:
    return pm.failure_prob(pm.MiningDesign(s, r, d))


@dataclass(frozen=True)
class ErrorEntry:
    s: int
    r: int
    d: int
    mu: float
    T: float
    theoretical: float
    empirical: float
    abs_error: float

    @property
    def ratio(self) -> int:
        """floor(mu / T) in double arithmetic."""
        return pm.hashes_within(self.mu, self.T)

    @property
    def failure(self) -> float:
        return _failure(self.s, self.r, self.d)


ENTRY_FIELDS = [f.name for f in fields(ErrorEntry)]


def build_database(corpus: Iterable[CampaignRecord], mu_grid=MU_GRID, T_grid=T_GRID,
                   one_based: bool = False) -> list:
    """One dispute-error entry per campaign and (mu, T) pair.

    ``one_based`` as in :func:`dispute_count`.
    """
    shift = 1 if one_based else 0
    db = []
    for campaign in corpus:
        design = campaign.config.design
        second = np.sort(_second_smallest(campaign.entries))
        n = campaign.race_count
        for mu in mu_grid:
            for T in T_grid:
                m = pm.hashes_within(mu, T)
                theory = float(pm.dispute_prob(design, T, mu))
                empirical = int(np.searchsorted(second, m - shift, side="right")) / n
                db.append(ErrorEntry(design.s, design.r, design.d, mu, T,
                                     theory, empirical, abs(theory - empirical)))
    return db


def write_database(db: Iterable[ErrorEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENTRY_FIELDS)
        for e in db:
            w.writerow([e.s, e.r, e.d, repr(e.mu), repr(e.T),
                        repr(e.theoretical), repr(e.empirical), repr(e.abs_error)])


def read_database(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ErrorEntry(int(row["s"]), int(row["r"]), int(row["d"]), float(row["mu"]), float(row["T"]),
                       float(row["theoretical"]), float(row["empirical"]), float(row["abs_error"]))
            for row in rows]


_OPS = {
    "=": operator.eq, "==": operator.eq, "!=": operator.ne,
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}
_FIELDS = set(ENTRY_FIELDS) | {"ratio", "failure"}
_CLAUSE = re.compile(r"^\s*(\w+)\s*(==|!=|<=|>=|=|<|>)\s*(\S+)\s*$")


def predicate(text: str) -> Callable[[ErrorEntry], bool]:
    """Conjunction of ``field op constant`` clauses joined by ``&``.

    Fields are the entry fields plus ``ratio`` (floor(mu/T)) and
    ``failure`` (analytic failure probability of the triple). ``true``
    matches everything.
    """
    text = text.strip()
    if text.lower() in ("", "true"):
        return lambda e: True
    clauses = []
    for part in text.split("&"):
        m = _CLAUSE.match(part)
        if not m or m.group(1) not in _FIELDS:
            raise ValueError(f"cannot parse clause {part!r}")
        clauses.append((m.group(1), _OPS[m.group(2)], float(m.group(3))))
    return lambda e: all(op(getattr(e, name), const) for name, op, const in clauses)


class QueryResult(NamedTuple):
    a: int
    b: int

    @property
    def percent(self) -> int | None:
        """floor(100 b / a); None when nothing satisfies A."""
        return None if self.a == 0 else (100 * self.b) // self.a


def query(database: Iterable[ErrorEntry], A, B) -> QueryResult:
    A = predicate(A) if isinstance(A, str) else A
    B = predicate(B) if isinstance(B, str) else B
    a = b = 0
    for e in database:
        if A(e):
            a += 1
            if B(e):
                b += 1
    return QueryResult(a, b)


def corpus_summary(summaries: list) -> dict:
    """Aggregate error figures over a corpus."""
    fail = [t.failure_abs for t in summaries]
    low = [t for t in summaries if _below(t, 0.35)]
    rel = [t.rounds.rel for t in low if t.rounds]
    absr = [t.rounds.abs for t in low if t.rounds]
    gt = [t.tails.gt_abs for t in summaries if t.tails.gt_abs is not None]
    lt = [t.tails.lt_abs for t in summaries if t.tails.lt_abs is not None]
    lt_low = [t.tails.lt_abs for t in low if t.tails.lt_abs is not None]

    def stats(xs):
        return (max(xs), sum(xs) / len(xs)) if xs else (math.nan, math.nan)

    return {
        "failure_abs": stats(fail),
        "rounds_abs_below_0.35": stats(absr),
        "rounds_rel_below_0.35": stats(rel),
        "gt_abs": stats(gt),
        "lt_abs": stats(lt),
        "lt_abs_below_0.35": stats(lt_low),
    }
