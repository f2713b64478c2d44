"""Non-parametric compatibility tests: sign family, runs family, rank family.

Every test returns a :class:`TestResult`.  Small samples get exact p-values
from the full null distribution (computed by counting, never by tables);
larger samples fall back to the usual normal or chi-square approximations.
Sizes at which the switch happens live in :class:`TestOptions`.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .kernel import (
    PValue,
    binomial_tail,
    check_sidedness,
    chi_square_sf,
    normal_pvalue,
    rank_with_ties,
    tail_from_counts,
)

TEST_NAMES = (
    "sign",
    "mcnemar",
    "cox-stuart",
    "runs",
    "wald-wolfowitz",
    "mann-whitney",
    "wilcoxon",
    "kruskal-wallis",
)


class DegenerateTestError(ValueError):
    """The data carry no information for the test (all ties, one symbol, ...)."""


@dataclass
class Sample:
    run_id: str
    values: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError(f"sample {self.run_id!r} must be a non-empty 1-d series")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"sample {self.run_id!r} contains non-finite values")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class TestOptions:
    __test__ = False

    tie_correction: bool = False
    continuity_correction: bool = False
    exact_binomial: int = 50
    exact_runs: int = 20
    exact_mann_whitney: int = 16
    exact_wilcoxon: int = 20
    exact_kruskal_wallis: int = 10

    def to_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULT_OPTIONS = TestOptions()


@dataclass
class SignCoding:
    plus: int
    minus: int
    ties: int

    @property
    def m(self) -> int:
        return self.plus + self.minus


@dataclass
class TestResult:
    __test__ = False

    test_name: str
    statistic: float
    statistic_name: str
    p: PValue
    n_used: tuple[int, ...]
    ties_skipped: int = 0
    notes: list[str] = field(default_factory=list)
    alternatives: list[PValue] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "statistic_name": self.statistic_name,
            "p": self.p.to_dict(),
            "n_used": list(self.n_used),
            "ties_skipped": self.ties_skipped,
            "notes": list(self.notes),
            "alternatives": [a.to_dict() for a in self.alternatives],
            "details": dict(self.details),
        }


def _values(x) -> np.ndarray:
    if isinstance(x, Sample):
        return x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d series")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def _corrected(diff: float, half_step: float, enabled: bool) -> float:
    if not enabled:
        return diff
    return math.copysign(max(abs(diff) - half_step, 0.0), diff)


# -- sign family -----------------------------------------------------------


def _sign_result(name: str, coding: SignCoding, sidedness: str,
                 options: TestOptions) -> TestResult:
    check_sidedness(sidedness)
    m, t = coding.m, coding.plus
    if m == 0:
        raise DegenerateTestError("degenerate: no informative pairs")
    z = _corrected(2 * t - m, 1.0, options.continuity_correction) / math.sqrt(m)
    approx = normal_pvalue(z, sidedness)
    if m <= options.exact_binomial:
        p, alternatives = binomial_tail(m, t, sidedness), [approx]
    else:
        p, alternatives = approx, []
    notes = [f"{coding.ties} tied pairs skipped"] if coding.ties else []
    return TestResult(
        test_name=name,
        statistic=float(t),
        statistic_name="T",
        p=p,
        n_used=(m,),
        ties_skipped=coding.ties,
        notes=notes,
        alternatives=alternatives,
        details={"plus": coding.plus, "minus": coding.minus, "z": z},
    )


def sign_test(x, y, sidedness: str = "two-sided",
              options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Paired sign test; T counts pairs with x > y."""
    xv, yv = _values(x), _values(y)
    if xv.size != yv.size:
        raise ValueError(f"sign test needs paired samples, got lengths {xv.size} and {yv.size}")
    plus = int(np.sum(xv > yv))
    minus = int(np.sum(xv < yv))
    return _sign_result("sign", SignCoding(plus, minus, xv.size - plus - minus),
                        sidedness, options)


def mcnemar_test(pairs: Iterable[tuple[int, int]], sidedness: str = "two-sided",
                 options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """McNemar test: (0,1) counts as +1, (1,0) as -1, concordant pairs are ties."""
    plus = minus = ties = 0
    for a, b in pairs:
        if a not in (0, 1) or b not in (0, 1):
            raise ValueError(f"McNemar pairs must be binary, got {(a, b)!r}")
        if (a, b) == (0, 1):
            plus += 1
        elif (a, b) == (1, 0):
            minus += 1
        else:
            ties += 1
    return _sign_result("mcnemar", SignCoding(plus, minus, ties), sidedness, options)


def cox_stuart_test(series, sidedness: str = "two-sided",
                    options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Cox-Stuart trend test.

    Pairs (x_i, x_{i+k}) across the half-series gap; +1 marks an increase.
    With odd length the middle observation is dropped.
    """
    z = _values(series)
    n = z.size
    if n < 2:
        raise ValueError("Cox-Stuart test needs at least 2 observations")
    k = n // 2
    first, second = z[:k], z[n - k:]
    plus = int(np.sum(first < second))
    minus = int(np.sum(first > second))
    res = _sign_result("cox-stuart", SignCoding(plus, minus, k - plus - minus),
                       sidedness, options)
    if n % 2:
        res.notes.append("odd length: middle observation dropped")
    return res


# -- runs family -----------------------------------------------------------


def runs_count(seq: Sequence) -> int:
    """Number of maximal blocks of like elements."""
    items = list(seq)
    if not items:
        raise ValueError("runs_count needs a non-empty sequence")
    if len(set(items)) > 2:
        raise ValueError("runs_count needs a sequence over at most 2 symbols")
    return 1 + sum(1 for a, b in zip(items, items[1:]) if a != b)


def runs_expectation(n1: int, n2: int) -> float:
    return 2.0 * n1 * n2 / (n1 + n2) + 1.0


def runs_variance(n1: int, n2: int) -> float:
    n = n1 + n2
    return 2.0 * n1 * n2 * (2.0 * n1 * n2 - n1 - n2) / (n * n * (n - 1))


def runs_null_counts(n1: int, n2: int) -> dict[int, int]:
    """Number of arrangements of n1 and n2 symbols yielding each runs count."""
    if n1 < 1 or n2 < 1:
        raise ValueError("runs null distribution needs n1, n2 >= 1")
    counts = {}
    for r in range(2, n1 + n2 + 1):
        k = r // 2
        if r % 2 == 0:
            c = 2 * math.comb(n1 - 1, k - 1) * math.comb(n2 - 1, k - 1)
        else:
            c = (math.comb(n1 - 1, k) * math.comb(n2 - 1, k - 1)
                 + math.comb(n1 - 1, k - 1) * math.comb(n2 - 1, k))
        if c:
            counts[r] = c
    return counts


def dichotomize(values) -> np.ndarray:
    """Map a series to two symbols.

    Two-valued series are returned unchanged.  Otherwise observations are
    coded 1 above the median and 0 below it; values equal to the median
    are dropped.
    """
    z = _values(values)
    if np.unique(z).size <= 2:
        return z
    med = np.median(z)
    keep = z != med
    return (z[keep] > med).astype(float)


def runs_test(binary_seq, sidedness: str = "two-sided",
              options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Runs test for randomness of a two-symbol sequence.

    ``less`` tests for too few runs (clustering), ``greater`` for too many
    (alternation).
    """
    check_sidedness(sidedness)
    seq = list(binary_seq.values if isinstance(binary_seq, Sample) else binary_seq)
    if not seq:
        raise ValueError("runs test needs a non-empty sequence")
    symbols = sorted(set(seq))
    if len(symbols) > 2:
        raise ValueError("runs test needs a sequence over at most 2 symbols")
    if len(symbols) < 2:
        raise DegenerateTestError("runs test undefined: only one symbol present")
    n1 = sum(1 for s in seq if s == symbols[0])
    n2 = len(seq) - n1
    r = runs_count(seq)
    mean, var = runs_expectation(n1, n2), runs_variance(n1, n2)
    details = {"n1": n1, "n2": n2, "expected": mean, "variance": var}
    alternatives = []
    if var > 0:
        z = _corrected(r - mean, 0.5, options.continuity_correction) / math.sqrt(var)
        details["z"] = z
        approx = normal_pvalue(z, sidedness)
    if n1 + n2 <= options.exact_runs:
        counts = runs_null_counts(n1, n2)
        lower = sum(c for rr, c in counts.items() if rr <= r)
        upper = sum(c for rr, c in counts.items() if rr >= r)
        p = PValue(tail_from_counts(lower, upper, math.comb(n1 + n2, n1), sidedness),
                   sidedness, "exact")
        if var > 0:
            alternatives.append(approx)
    else:
        p = approx
    return TestResult(
        test_name="runs",
        statistic=float(r),
        statistic_name="R",
        p=p,
        n_used=(n1, n2),
        alternatives=alternatives,
        details=details,
    )


def wald_wolfowitz_test(s1, s2, sidedness: str = "two-sided",
                        options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Two-sample runs test on the pooled ordering (s1 coded 0, s2 coded 1).

    Tied values across the samples are ordered with s1 first inside each
    tied block; a note records that the ordering was forced.
    """
    a, b = _values(s1), _values(s2)
    if a.size == 0 or b.size == 0:
        raise ValueError("Wald-Wolfowitz test needs two non-empty samples")
    pooled = np.concatenate([a, b])
    codes = np.r_[np.zeros(a.size), np.ones(b.size)]
    order = np.lexsort((codes, pooled))
    seq = codes[order].astype(int).tolist()
    cross_ties = int(np.intersect1d(a, b).size)
    res = runs_test(seq, sidedness, options)
    res.test_name = "wald-wolfowitz"
    res.details["cross_sample_ties"] = cross_ties
    if cross_ties:
        res.notes.append(
            f"{cross_ties} values tied across samples; s1 placed first within tied blocks"
        )
    return res


# -- rank family -----------------------------------------------------------


def _subset_sum_counts(weights: Sequence[int], size: int | None) -> np.ndarray:
    """Count subsets by sum of integer weights.

    With ``size`` given, only subsets of exactly that size are counted.
    Returns an array indexed by the sum.
    """
    total = int(sum(weights))
    if size is None:
        dp = np.zeros(total + 1, dtype=np.int64)
        dp[0] = 1
        for w in weights:
            if w:
                dp[w:] = dp[w:] + dp[:-w].copy()
            else:
                dp = dp * 2
        return dp
    dp = np.zeros((size + 1, total + 1), dtype=np.int64)
    dp[0, 0] = 1
    for i, w in enumerate(weights):
        for k in range(min(i + 1, size), 0, -1):
            if w:
                dp[k, w:] += dp[k - 1, :-w]
            else:
                dp[k] += dp[k - 1]
    return dp[size]


def mann_whitney_test(s1, s2, sidedness: str = "two-sided",
                      options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Mann-Whitney U test.

    ``U = n1*n2 + n1*(n1+1)/2 - R1`` counts pairs in which the s1
    observation ranks below the s2 observation (ties count one half), so
    ``greater`` is the alternative that s1 tends to be smaller.
    """
    check_sidedness(sidedness)
    a, b = _values(s1), _values(s2)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("Mann-Whitney test needs two non-empty samples")
    n = n1 + n2
    ranking = rank_with_ties(np.concatenate([a, b]))
    if len(ranking.tie_groups) == 1 and ranking.tie_sizes[0] == n:
        raise DegenerateTestError("degenerate: all observations tied")
    r1_doubled = int(ranking.doubled[:n1].sum())
    u = (2 * n1 * n2 + n1 * (n1 + 1) - r1_doubled) / 2.0
    mean = n1 * n2 / 2.0
    var = n1 * n2 * (n + 1) / 12.0
    tie_term = ranking.tie_term()
    if options.tie_correction and tie_term:
        var *= 1.0 - tie_term / (n**3 - n)
    z = _corrected(u - mean, 0.5, options.continuity_correction) / math.sqrt(var)
    approx = normal_pvalue(z, sidedness)
    notes = []
    n_tied = sum(ranking.tie_sizes)
    if n_tied:
        notes.append(f"{n_tied} observations in {len(ranking.tie_groups)} tie groups")
    if n <= options.exact_mann_whitney:
        dist = _subset_sum_counts(ranking.doubled.tolist(), n1)
        # large U <=> small R1
        lower = int(dist[r1_doubled:].sum())
        upper = int(dist[: r1_doubled + 1].sum())
        p = PValue(tail_from_counts(lower, upper, math.comb(n, n1), sidedness),
                   sidedness, "exact")
        alternatives = [approx]
    else:
        p, alternatives = approx, []
    return TestResult(
        test_name="mann-whitney",
        statistic=u,
        statistic_name="U",
        p=p,
        n_used=(n1, n2),
        notes=notes,
        alternatives=alternatives,
        details={"R1": r1_doubled / 2.0, "expected": mean, "variance": var, "z": z,
                 "tie_groups": len(ranking.tie_groups)},
    )


def wilcoxon_signed_rank_test(x, y, sidedness: str = "two-sided",
                              options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Wilcoxon signed-rank test on paired differences x - y.

    Zero differences are dropped before ranking.  The reported statistic is
    T = min(R+, R-); one-sided p-values are taken on R+ (``greater``: x
    tends to exceed y).
    """
    check_sidedness(sidedness)
    xv, yv = _values(x), _values(y)
    if xv.size != yv.size:
        raise ValueError(f"Wilcoxon test needs paired samples, got lengths {xv.size} and {yv.size}")
    d = xv - yv
    nonzero = d != 0
    zeros = int(d.size - nonzero.sum())
    d = d[nonzero]
    n = d.size
    if n == 0:
        raise DegenerateTestError("degenerate: all differences are zero")
    ranking = rank_with_ties(np.abs(d))
    pos = d > 0
    r_plus_doubled = int(ranking.doubled[pos].sum())
    total_doubled = n * (n + 1)
    r_plus = r_plus_doubled / 2.0
    r_minus = (total_doubled - r_plus_doubled) / 2.0
    t = min(r_plus, r_minus)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    tie_term = ranking.tie_term()
    if options.tie_correction and tie_term:
        var -= tie_term / 48.0
    notes = [f"{zeros} zero differences dropped"] if zeros else []
    if var <= 0:
        raise DegenerateTestError("degenerate: zero variance of the signed-rank statistic")
    z = _corrected(r_plus - mean, 0.5, options.continuity_correction) / math.sqrt(var)
    approx = normal_pvalue(z, sidedness)
    if n <= options.exact_wilcoxon:
        dist = _subset_sum_counts(ranking.doubled.tolist(), None)
        lower = int(dist[: r_plus_doubled + 1].sum())
        upper = int(dist[r_plus_doubled:].sum())
        p = PValue(tail_from_counts(lower, upper, 2**n, sidedness), sidedness, "exact")
        alternatives = [approx]
    else:
        p, alternatives = approx, []
    return TestResult(
        test_name="wilcoxon",
        statistic=t,
        statistic_name="T_wilcoxon",
        p=p,
        n_used=(n,),
        ties_skipped=zeros,
        notes=notes,
        alternatives=alternatives,
        details={"R_plus": r_plus, "R_minus": r_minus, "expected": mean,
                 "variance": var, "z": (t - mean) / math.sqrt(var)},
    )


def _kw_exact_counts(doubled: Sequence[int], sizes: Sequence[int], observed: int) -> tuple[int, int]:
    """Count group-label assignments whose integer H-score reaches ``observed``.

    The score is sum_j (2 R_j)^2 * (L / n_j) with L = lcm(n_j), a strictly
    increasing affine image of H.  Returns (count >= observed, total).
    """
    lcm = math.lcm(*sizes)
    n = len(doubled)
    states: dict[int, Counter] = {0: Counter({0: 1})}
    for size in sizes:
        nxt: dict[int, Counter] = defaultdict(Counter)
        for mask, scores in states.items():
            free = [i for i in range(n) if not mask >> i & 1]
            for combo in combinations(free, size):
                bits = mask
                r = 0
                for i in combo:
                    bits |= 1 << i
                    r += doubled[i]
                add = r * r * (lcm // size)
                target = nxt[bits]
                for s, c in scores.items():
                    target[s + add] += c
        states = nxt
    (final,) = states.values()
    hits = sum(c for s, c in final.items() if s >= observed)
    return hits, sum(final.values())


def kruskal_wallis_test(samples: Sequence, options: TestOptions = DEFAULT_OPTIONS) -> TestResult:
    """Kruskal-Wallis H test across k >= 2 samples (upper tail)."""
    groups = [_values(s) for s in samples]
    k = len(groups)
    if k < 2:
        raise ValueError(f"Kruskal-Wallis test needs at least 2 samples, got {k}")
    sizes = [g.size for g in groups]
    if min(sizes) == 0:
        raise ValueError("Kruskal-Wallis test needs non-empty samples")
    n = sum(sizes)
    ranking = rank_with_ties(np.concatenate(groups))
    if len(ranking.tie_groups) == 1 and ranking.tie_sizes[0] == n:
        raise DegenerateTestError("degenerate: all observations tied")
    bounds = np.cumsum([0] + sizes)
    doubled_sums = [int(ranking.doubled[lo:hi].sum()) for lo, hi in zip(bounds, bounds[1:])]
    h = 12.0 / (n * (n + 1)) * sum(rd * rd / (4.0 * nj) for rd, nj in zip(doubled_sums, sizes))
    h -= 3.0 * (n + 1)
    h = max(h, 0.0)
    tie_term = ranking.tie_term()
    if options.tie_correction and tie_term:
        h /= 1.0 - tie_term / (n**3 - n)
    notes = []
    if min(sizes) < 5:
        notes.append("some sample has fewer than 5 observations: chi-square approximation unreliable")
    n_tied = sum(ranking.tie_sizes)
    if n_tied:
        notes.append(f"{n_tied} observations in {len(ranking.tie_groups)} tie groups")
    approx = PValue(chi_square_sf(h, k - 1), "greater", "chi-square-approx")
    if n <= options.exact_kruskal_wallis:
        lcm = math.lcm(*sizes)
        observed = sum(rd * rd * (lcm // nj) for rd, nj in zip(doubled_sums, sizes))
        hits, total = _kw_exact_counts(ranking.doubled.tolist(), sizes, observed)
        p = PValue(hits / total, "greater", "exact")
        alternatives = [approx]
    else:
        p, alternatives = approx, []
    return TestResult(
        test_name="kruskal-wallis",
        statistic=h,
        statistic_name="H",
        p=p,
        n_used=tuple(sizes),
        notes=notes,
        alternatives=alternatives,
        details={"df": k - 1, "rank_sums": [rd / 2.0 for rd in doubled_sums],
                 "tie_groups": len(ranking.tie_groups)},
    )
