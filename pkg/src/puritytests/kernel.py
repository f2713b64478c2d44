"""Tail probabilities and tie-aware ranking shared by every test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import special

SIDEDNESS = ("two-sided", "greater", "less")
METHODS = ("exact", "normal-approx", "chi-square-approx", "permutation")


@dataclass(frozen=True)
class PValue:
    value: float
    sidedness: str = "two-sided"
    method: str = "exact"

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"p-value {self.value!r} outside [0, 1]")
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"unknown sidedness {self.sidedness!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {"value": self.value, "sidedness": self.sidedness, "method": self.method}


@dataclass
class RankAssignment:
    """Average ranks (1-based) plus the index groups that share a rank.

    ``doubled`` holds ``2 * rank`` as integers; tie averages of consecutive
    integers are always multiples of one half, so this is exact.
    """

    ranks: np.ndarray
    doubled: np.ndarray
    tie_groups: list[list[int]] = field(default_factory=list)

    @property
    def tie_sizes(self) -> list[int]:
        return [len(g) for g in self.tie_groups]

    def tie_term(self) -> int:
        """Sum of t^3 - t over tie groups, used by the variance corrections."""
        return sum(t**3 - t for t in self.tie_sizes)


def check_sidedness(sidedness: str) -> str:
    if sidedness not in SIDEDNESS:
        raise ValueError(f"sidedness must be one of {SIDEDNESS}, got {sidedness!r}")
    return sidedness


def tail_from_counts(lower: int, upper: int, total: int, sidedness: str) -> float:
    """Turn integer null-distribution counts into a p-value.

    ``lower`` counts outcomes <= observed, ``upper`` counts outcomes >= observed.
    """
    if sidedness == "greater":
        num = upper
    elif sidedness == "less":
        num = lower
    else:
        num = min(total, 2 * min(lower, upper))
    return float(Fraction(num, total))


def binomial_tail(m: int, t: int, sidedness: str = "two-sided") -> PValue:
    """Exact tail of Binomial(m, 1/2) at ``t``."""
    check_sidedness(sidedness)
    if m == 0:
        raise ValueError("no informative pairs")
    if m < 0 or not 0 <= t <= m:
        raise ValueError(f"need 0 <= t <= m, got t={t}, m={m}")
    lower = sum(math.comb(m, i) for i in range(t + 1))
    upper = sum(math.comb(m, i) for i in range(t, m + 1))
    return PValue(tail_from_counts(lower, upper, 2**m, sidedness), sidedness, "exact")


def std_normal_sf(z: float) -> float:
    """P(Z >= z) for a standard normal variate."""
    if not math.isfinite(z):
        raise ValueError(f"std_normal_sf needs a finite argument, got {z!r}")
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_pvalue(z: float, sidedness: str = "two-sided") -> PValue:
    check_sidedness(sidedness)
    if sidedness == "greater":
        p = std_normal_sf(z)
    elif sidedness == "less":
        p = std_normal_sf(-z)
    else:
        p = min(1.0, 2.0 * std_normal_sf(abs(z)))
    return PValue(p, sidedness, "normal-approx")


def chi_square_sf(h: float, df: int) -> float:
    """Upper tail of the chi-square distribution with ``df`` degrees of freedom."""
    if not math.isfinite(h) or h < 0:
        raise ValueError(f"chi-square statistic must be finite and >= 0, got {h!r}")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    return float(special.gammaincc(df / 2.0, h / 2.0))


def rank_with_ties(values: Sequence[float]) -> RankAssignment:
    """Rank from smallest to largest; tied values share the averaged rank."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("rank_with_ties needs a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("rank_with_ties needs finite values")
    n = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # block boundaries in sorted order
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    # doubled average rank of a block spanning 1-based ranks s+1..e is s+1+e
    block_doubled = starts + 1 + ends
    doubled = np.empty(n, dtype=np.int64)
    doubled[order] = np.repeat(block_doubled, ends - starts)
    ties = [sorted(order[s:e].tolist()) for s, e in zip(starts, ends) if e - s > 1]
    return RankAssignment(ranks=doubled / 2.0, doubled=doubled, tie_groups=ties)
