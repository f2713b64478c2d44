"""Purity protocol: are all runs of one experiment draws from one population?

The battery is a Kruskal-Wallis omnibus over all runs, pairwise
Mann-Whitney and Wald-Wolfowitz tests, and a runs test plus Cox-Stuart
trend test on every single run.  All p-values of the battery form one
family for the multiple-comparison correction, so the verdict controls the
family-wise error rate.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .kernel import PValue
from .nptests import (
    DEFAULT_OPTIONS,
    DegenerateTestError,
    Sample,
    TestOptions,
    TestResult,
    cox_stuart_test,
    dichotomize,
    kruskal_wallis_test,
    mann_whitney_test,
    runs_test,
    wald_wolfowitz_test,
)
from .rng import make_rng

CORRECTIONS = ("holm", "bonferroni", "none")
STRATEGIES = ("random-without-replacement", "block-contiguous")
VERDICTS = ("consistent-with-pure", "purity-rejected", "inconclusive")

PAIRWISE_TESTS = ("mann-whitney", "wald-wolfowitz")
PER_RUN_TESTS = ("runs", "cox-stuart")

MIN_RUN_LENGTH = 5
MIN_PART_LENGTH = 10


@dataclass
class RunSet:
    experiment_id: str
    runs: list[Sample]
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.runs)

    @classmethod
    def from_arrays(cls, experiment_id: str, arrays: Sequence, **metadata) -> "RunSet":
        runs = [Sample(run_id=str(i), values=a) for i, a in enumerate(arrays)]
        return cls(experiment_id, runs, dict(metadata))


@dataclass
class Outcome:
    """One test in the battery, successful or degenerate."""

    test: str
    subjects: tuple[str, ...]
    result: TestResult | None = None
    error: str | None = None
    in_family: bool = True
    corrected_p: float | None = None

    @property
    def degenerate(self) -> bool:
        return self.result is None

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "subjects": list(self.subjects),
            "result": self.result.to_dict() if self.result else None,
            "error": self.error,
            "in_family": self.in_family,
            "corrected_p": self.corrected_p,
        }


@dataclass
class PurityReport:
    experiment_id: str
    omnibus: Outcome
    pairwise: dict[str, dict[tuple[int, int], Outcome]]
    per_run: dict[str, list[Outcome]]
    correction: str
    alpha: float
    verdict: str = "inconclusive"
    warnings: list[str] = field(default_factory=list)

    def outcomes(self) -> list[Outcome]:
        out = [self.omnibus]
        for name in PAIRWISE_TESTS:
            out.extend(self.pairwise[name][key] for key in sorted(self.pairwise[name]))
        for name in PER_RUN_TESTS:
            out.extend(self.per_run[name])
        return out

    def family(self) -> list[Outcome]:
        return [o for o in self.outcomes() if o.result is not None and o.in_family]

    def pair(self, test: str, i: int, j: int) -> Outcome:
        """Pairwise outcome for runs ``i`` and ``j`` in either order."""
        return self.pairwise[test][(min(i, j), max(i, j))]

    def pairwise_matrix(self, test: str) -> np.ndarray:
        """Symmetric matrix of raw two-sided p-values (NaN on the diagonal or if degenerate)."""
        k = 1 + max((j for _, j in self.pairwise[test]), default=0)
        mat = np.full((k, k), np.nan)
        for (i, j), o in self.pairwise[test].items():
            if o.result is not None:
                mat[i, j] = mat[j, i] = o.result.p.value
        return mat

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "alpha": self.alpha,
            "correction": self.correction,
            "verdict": self.verdict,
            "omnibus": self.omnibus.to_dict(),
            "pairwise": {
                name: [
                    {"pair": [i, j], **self.pairwise[name][(i, j)].to_dict()}
                    for i, j in sorted(self.pairwise[name])
                ]
                for name in PAIRWISE_TESTS
            },
            "per_run": {name: [o.to_dict() for o in self.per_run[name]] for name in PER_RUN_TESTS},
            "warnings": list(self.warnings),
        }


def correct_pvalues(ps: Sequence, method: str = "holm") -> list:
    """Adjust a family of p-values for multiple comparisons.

    Accepts floats or :class:`PValue` objects and returns the same kind.
    """
    if method not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {method!r}")
    raw = [p.value if isinstance(p, PValue) else float(p) for p in ps]
    m = len(raw)
    if method == "none":
        adj = list(raw)
    elif method == "bonferroni":
        adj = [min(1.0, p * m) for p in raw]
    else:
        adj = [0.0] * m
        running = 0.0
        for rank, idx in enumerate(sorted(range(m), key=raw.__getitem__)):
            running = max(running, min(1.0, (m - rank) * raw[idx]))
            adj[idx] = running
    return [
        PValue(a, p.sidedness, p.method) if isinstance(p, PValue) else a
        for a, p in zip(adj, ps)
    ]


def _attempt(test: str, subjects: tuple[str, ...], fn: Callable[[], TestResult]) -> Outcome:
    try:
        return Outcome(test, subjects, result=fn())
    except DegenerateTestError as exc:
        return Outcome(test, subjects, error=str(exc))


def _randomness(values: np.ndarray, options: TestOptions) -> TestResult:
    coded = dichotomize(values)
    if coded.size == 0:
        raise DegenerateTestError("runs test undefined: every value equals the median")
    return runs_test(coded, "two-sided", options)


def _decide(outcomes: list[Outcome], family: list[Outcome], alpha: float,
            correction: str) -> tuple[str, list[str]]:
    """Correct the family in place and return (verdict, warnings).

    Rejection wins whenever a corrected p-value reaches ``alpha``; otherwise
    the result is inconclusive if more than half the tests were degenerate.
    """
    if family:
        for o, c in zip(family, correct_pvalues([o.result.p.value for o in family], correction)):
            o.corrected_p = c
    n_degenerate = sum(o.degenerate for o in outcomes)
    if any(o.corrected_p <= alpha for o in family):
        verdict = "purity-rejected"
    elif not family or n_degenerate * 2 > len(outcomes):
        verdict = "inconclusive"
    else:
        verdict = "consistent-with-pure"
    warnings = [f"{n_degenerate} of {len(outcomes)} tests degenerate"] if n_degenerate else []
    return verdict, warnings


def assign_verdict(report: PurityReport) -> PurityReport:
    """Apply the correction to the family and set the verdict in place."""
    report.verdict, warnings = _decide(report.outcomes(), report.family(), report.alpha,
                                       report.correction)
    report.warnings.extend(warnings)
    return report


def purity_test(
    rs: RunSet,
    alpha: float = 0.05,
    correction: str = "holm",
    options: TestOptions = DEFAULT_OPTIONS,
    workers: int = 1,
) -> PurityReport:
    """Run the whole battery on ``rs`` and decide on the purity hypothesis."""
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    runs = rs.runs
    if len(runs) < 2:
        raise ValueError(f"purity test needs at least 2 runs, got {len(runs)}")
    short = [r.run_id for r in runs if len(r) < MIN_RUN_LENGTH]
    if short:
        raise ValueError(f"runs shorter than {MIN_RUN_LENGTH} observations: {short}")

    ids = [r.run_id for r in runs]
    pairs = list(combinations(range(len(runs)), 2))
    jobs: list[tuple[str, tuple, Callable[[], TestResult]]] = [
        ("kruskal-wallis", tuple(ids),
         lambda: kruskal_wallis_test([r.values for r in runs], options)),
    ]
    for i, j in pairs:
        a, b = runs[i].values, runs[j].values
        jobs.append(("mann-whitney", (ids[i], ids[j]),
                     lambda a=a, b=b: mann_whitney_test(a, b, "two-sided", options)))
        jobs.append(("wald-wolfowitz", (ids[i], ids[j]),
                     lambda a=a, b=b: wald_wolfowitz_test(a, b, "two-sided", options)))
    for r in runs:
        v = r.values
        jobs.append(("runs", (r.run_id,), lambda v=v: _randomness(v, options)))
        jobs.append(("cox-stuart", (r.run_id,),
                     lambda v=v: cox_stuart_test(v, "two-sided", options)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda job: _attempt(*job), jobs))
    else:
        outcomes = [_attempt(*job) for job in jobs]

    it = iter(outcomes)
    omnibus = next(it)
    pairwise = {name: {} for name in PAIRWISE_TESTS}
    for key in pairs:
        pairwise["mann-whitney"][key] = next(it)
        pairwise["wald-wolfowitz"][key] = next(it)
    per_run = {name: [] for name in PER_RUN_TESTS}
    for _ in runs:
        per_run["runs"].append(next(it))
        per_run["cox-stuart"].append(next(it))

    warnings = []
    tied_ww = 0
    for o in pairwise["wald-wolfowitz"].values():
        if o.result is not None and o.result.details.get("cross_sample_ties"):
            o.in_family = False
            tied_ww += 1
    if tied_ww:
        warnings.append(
            f"{tied_ww} Wald-Wolfowitz comparisons have cross-sample ties; "
            "their forced ordering makes them uninformative and they are excluded from the verdict"
        )
    report = PurityReport(rs.experiment_id, omnibus, pairwise, per_run, correction, alpha,
                          warnings=warnings)
    return assign_verdict(report)


@dataclass(frozen=True)
class SubEnsembleSpec:
    seed: int
    fraction: float = 1.0
    strategy: str = "random-without-replacement"

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")


def split_sample(s: Sample, spec: SubEnsembleSpec, parts: int,
                 min_part: int = MIN_PART_LENGTH) -> RunSet:
    """Split one long run into ``parts`` sub-ensembles, reproducibly from the spec."""
    if parts < 2:
        raise ValueError(f"need at least 2 parts, got {parts}")
    n = len(s)
    if n < parts * min_part:
        raise ValueError(f"sample of length {n} too short for {parts} parts of >= {min_part}")
    m = int(spec.fraction * n)
    if m < parts * min_part:
        raise ValueError(f"fraction {spec.fraction} leaves {m} observations, "
                         f"fewer than {parts} parts of >= {min_part}")
    rng = make_rng(spec.seed)
    if spec.strategy == "random-without-replacement":
        chosen = rng.permutation(n)[:m]
        chunks = [np.sort(c) for c in np.array_split(chosen, parts)]
    else:
        start = int(rng.integers(0, n - m + 1)) if m < n else 0
        chunks = np.array_split(np.arange(start, start + m), parts)
    runs = [Sample(f"{s.run_id}:part{k}", s.values[idx], s.label) for k, idx in enumerate(chunks)]
    meta = {"source": s.run_id, "strategy": spec.strategy, "fraction": spec.fraction,
            "seed": spec.seed, "parts": parts}
    return RunSet(f"{s.run_id}:sub-ensembles", runs, meta)


def sub_ensemble_purity(
    s: Sample,
    spec: SubEnsembleSpec,
    parts: int = 4,
    alpha: float = 0.05,
    correction: str = "holm",
    options: TestOptions = DEFAULT_OPTIONS,
    min_part: int = MIN_PART_LENGTH,
) -> PurityReport:
    """Purity of the sub-ensembles of a single long run.

    Contiguous blocks expose drift over time; random splits calibrate the
    null because they destroy any temporal structure across parts.
    """
    return purity_test(split_sample(s, spec, parts, min_part), alpha, correction, options)


@dataclass
class RandomnessReport:
    """Per-run randomness checks: runs test, Cox-Stuart trend, acf whiteness."""

    runs: list[dict]
    correction: str
    alpha: float
    verdict: str = "inconclusive"
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "correction": self.correction,
            "verdict": self.verdict,
            "runs": [
                {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in r.items()}
                for r in self.runs
            ],
            "warnings": list(self.warnings),
        }


def _value_key(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def randomness_check(rs: RunSet, alpha: float = 0.05, correction: str = "holm",
                     options: TestOptions = DEFAULT_OPTIONS, lags: int = 20) -> RandomnessReport:
    """Runs test and Cox-Stuart test on every run, corrected as one family.

    Lag-1..``lags`` autocorrelation whiteness (fraction inside +-2/sqrt(n))
    and outcome frequencies are reported alongside but do not enter the
    verdict.
    """
    from .finestructure import acf  # local: finestructure imports nptests only

    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    entries = []
    outcomes: list[Outcome] = []
    for r in rs.runs:
        v = r.values
        runs_o = _attempt("runs", (r.run_id,), lambda: _randomness(v, options))
        trend_o = _attempt("cox-stuart", (r.run_id,), lambda: cox_stuart_test(v, "two-sided", options))
        outcomes += [runs_o, trend_o]
        values, counts = np.unique(v, return_counts=True)
        entry = {
            "run_id": r.run_id,
            "n": int(v.size),
            "frequencies": {_value_key(x): c / v.size for x, c in zip(values, counts)},
            "runs": runs_o,
            "cox-stuart": trend_o,
        }
        max_lag = min(lags, (v.size - 1) // 2)
        try:
            rho = acf(v, max_lag)[1:]
            band = 2.0 / np.sqrt(v.size)
            entry["acf"] = {"lags": rho.tolist(), "band": band,
                            "whiteness": float(np.mean(np.abs(rho) <= band)) if rho.size else 1.0}
        except ValueError as exc:
            entry["acf"] = {"error": str(exc)}
        entries.append(entry)
    family = [o for o in outcomes if o.result is not None]
    verdict, warnings = _decide(outcomes, family, alpha, correction)
    return RandomnessReport(entries, correction, alpha, verdict, warnings)
