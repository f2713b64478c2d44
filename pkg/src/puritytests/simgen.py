"""Seeded generators for pure and contaminated ensembles, plus power studies.

Outcomes are integers 0..k-1.  Two-outcome series are emitted as +1
(outcome 0) and -1 (outcome 1); wider alphabets keep the integer codes.
Every draw consumes exactly one uniform from the spec's stream, so kinds
with zero contamination reproduce the pure-iid output bit for bit.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .nptests import (
    DEFAULT_OPTIONS,
    DegenerateTestError,
    Sample,
    TestOptions,
    cox_stuart_test,
    dichotomize,
    kruskal_wallis_test,
    mann_whitney_test,
    runs_test,
    sign_test,
    wald_wolfowitz_test,
    wilcoxon_signed_rank_test,
)
from .purity import RunSet, purity_test
from .rng import ALGORITHM, make_rng

KINDS = ("pure-iid", "run-mixture", "drift", "periodic", "markov")
PERIODIC_CLAMP = (0.01, 0.99)
_TOL = 1e-12


def _check_probs(probs, what: str) -> tuple[float, ...]:
    p = tuple(float(v) for v in probs)
    if len(p) < 2:
        raise ValueError(f"{what} needs at least 2 outcomes")
    if any(not math.isfinite(v) or v < 0 for v in p):
        raise ValueError(f"{what} must be non-negative, got {p}")
    if abs(sum(p) - 1.0) > _TOL:
        raise ValueError(f"{what} must sum to 1, got {sum(p)!r}")
    return p


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic RunSet.

    ``contamination`` keys by kind:

    * run-mixture: ``alt_probs`` (second outcome distribution), ``weight``
      (probability that a run uses it)
    * drift: ``slope`` (change of the first outcome's probability over a run)
    * periodic: ``period``, ``amplitude`` (sinusoidal modulation of the
      first outcome's probability)
    * markov: ``transition`` (k x k row-stochastic matrix, default rows
      equal to ``outcome_probs``), optional ``start``
    """

    kind: str = "pure-iid"
    outcome_probs: tuple[float, ...] = (0.5, 0.5)
    contamination: dict = field(default_factory=dict)
    runs: int = 10
    run_length: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "outcome_probs", _check_probs(self.outcome_probs, "outcome_probs"))
        if self.runs < 1 or self.run_length < 1:
            raise ValueError("runs and run_length must be positive")
        if self.seed is None or int(self.seed) < 0:
            raise ValueError("an explicit non-negative seed is required")
        k = len(self.outcome_probs)
        c = self.contamination
        if self.kind == "run-mixture":
            alt = _check_probs(c.get("alt_probs", self.outcome_probs), "alt_probs")
            if len(alt) != k:
                raise ValueError("alt_probs must have as many outcomes as outcome_probs")
            if not 0.0 <= float(c.get("weight", 0.0)) <= 1.0:
                raise ValueError("mixing weight must lie in [0, 1]")
        elif self.kind == "drift":
            end = self.outcome_probs[0] + float(c.get("slope", 0.0))
            if not 0.0 <= end <= 1.0:
                raise ValueError(f"drift takes the first probability to {end}, outside [0, 1]")
        elif self.kind == "periodic":
            if float(c.get("period", 2.0)) <= 0:
                raise ValueError("modulation period must be positive")
        elif self.kind == "markov":
            mat = _transition(self)
            if mat.shape != (k, k):
                raise ValueError(f"transition matrix must be {k}x{k}")
            for row in mat:
                _check_probs(row, "transition matrix row")
            start = c.get("start")
            if start is not None and not 0 <= int(start) < k:
                raise ValueError(f"start state must lie in 0..{k - 1}")

    def with_magnitude(self, magnitude: float) -> "GeneratorSpec":
        """Same spec with its contamination scaled to a single magnitude.

        run-mixture shifts the first probability of the alternative
        distribution by ``magnitude`` (weight 0.5 unless set); drift uses it
        as the slope; periodic as the amplitude; markov as the persistence
        ``m`` in ``(1 - m) * iid + m * identity``.
        """
        c = dict(self.contamination)
        p = list(self.outcome_probs)
        if self.kind == "run-mixture":
            alt = [p[0] + magnitude, p[1] - magnitude] + p[2:]
            c["alt_probs"] = alt
            c.setdefault("weight", 0.5)
        elif self.kind == "drift":
            c["slope"] = magnitude
        elif self.kind == "periodic":
            c["amplitude"] = magnitude
            c.setdefault("period", 20)
        elif self.kind == "markov":
            k = len(p)
            c["transition"] = [
                [(1 - magnitude) * p[j] + (magnitude if i == j else 0.0) for j in range(k)]
                for i in range(k)
            ]
        return replace(self, contamination=c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outcome_probs"] = list(self.outcome_probs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        d["outcome_probs"] = tuple(d.get("outcome_probs", (0.5, 0.5)))
        d["contamination"] = dict(d.get("contamination") or {})
        return cls(**d)


def _transition(spec: GeneratorSpec) -> np.ndarray:
    k = len(spec.outcome_probs)
    default = [list(spec.outcome_probs)] * k
    return np.asarray(spec.contamination.get("transition", default), dtype=float)


@dataclass
class GeneratedRunSet:
    runset: RunSet
    spec: GeneratorSpec
    ground_truth: str
    contamination: dict


def _draw(u: np.ndarray, first: np.ndarray, probs: tuple[float, ...]) -> np.ndarray:
    """Inverse-CDF categorical draws where outcome 0 has probability ``first[t]``.

    The remaining outcomes keep their relative weights from ``probs``.
    """
    rest = np.asarray(probs[1:])
    rest_total = rest.sum()
    share = rest / rest_total if rest_total > 0 else np.full(rest.size, 1.0 / rest.size)
    bounds = first[:, None] + (1.0 - first)[:, None] * np.cumsum(share)[None, :-1]
    cum = np.concatenate([first[:, None], bounds], axis=1)
    return (u[:, None] >= cum).sum(axis=1)


def _categorical(u: float, probs: np.ndarray) -> int:
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), probs.size - 1))


def _encode(outcomes: np.ndarray, k: int) -> np.ndarray:
    if k == 2:
        return np.where(outcomes == 0, 1.0, -1.0)
    return outcomes.astype(float)


def ground_truth(spec: GeneratorSpec) -> tuple[str, dict]:
    c = spec.contamination
    if spec.kind == "run-mixture":
        alt = tuple(float(v) for v in c.get("alt_probs", spec.outcome_probs))
        mixed = float(c.get("weight", 0.0)) > 0 and alt != spec.outcome_probs
    elif spec.kind == "drift":
        mixed = float(c.get("slope", 0.0)) != 0.0
    elif spec.kind == "periodic":
        mixed = float(c.get("amplitude", 0.0)) != 0.0
    elif spec.kind == "markov":
        mat = _transition(spec)
        mixed = not np.allclose(mat, np.asarray(spec.outcome_probs)[None, :], atol=_TOL, rtol=0)
    else:
        mixed = False
    return ("mixed" if mixed else "pure"), {"kind": spec.kind, **c}


def generate(spec: GeneratorSpec) -> GeneratedRunSet:
    """Draw a RunSet from ``spec``; identical specs give identical output."""
    rng = make_rng(spec.seed)
    k = len(spec.outcome_probs)
    L = spec.run_length
    c = spec.contamination
    p0 = spec.outcome_probs[0]
    t = np.arange(L, dtype=float)

    if spec.kind == "run-mixture":
        weight = float(c.get("weight", 0.0))
        alt = tuple(float(v) for v in c.get("alt_probs", spec.outcome_probs))
        use_alt = rng.random(spec.runs) < weight
    arrays = []
    labels = []
    for i in range(spec.runs):
        u = rng.random(L)
        probs = spec.outcome_probs
        label = "base"
        if spec.kind == "pure-iid":
            first = np.full(L, p0)
        elif spec.kind == "run-mixture":
            if use_alt[i]:
                probs, label = alt, "alt"
            first = np.full(L, probs[0])
        elif spec.kind == "drift":
            slope = float(c.get("slope", 0.0))
            first = p0 + slope * t / (L - 1) if L > 1 else np.full(L, p0)
            if slope == 0.0:
                first = np.full(L, p0)
        elif spec.kind == "periodic":
            amp = float(c.get("amplitude", 0.0))
            first = p0 + amp * np.sin(2 * np.pi * t / float(c.get("period", 2.0)))
            if amp != 0.0:
                first = np.clip(first, *PERIODIC_CLAMP)
        if spec.kind == "markov":
            mat = _transition(spec)
            start = c.get("start")
            state = int(start) if start is not None else _categorical(u[0], np.asarray(probs))
            out = np.empty(L, dtype=int)
            out[0] = state
            for j in range(1, L):
                state = _categorical(u[j], mat[state])
                out[j] = state
        else:
            out = _draw(u, first, probs)
        arrays.append(_encode(out, k))
        labels.append(label)

    runs = [Sample(str(i), a, labels[i]) for i, a in enumerate(arrays)]
    truth, descriptor = ground_truth(spec)
    meta = {"generator": spec.to_dict(), "rng": ALGORITHM}
    return GeneratedRunSet(RunSet(f"sim-{spec.kind}-{spec.seed}", runs, meta), spec, truth, descriptor)


# -- power studies ---------------------------------------------------------


SELECTORS = ("purity", "kruskal-wallis", "mann-whitney", "wald-wolfowitz", "sign",
             "wilcoxon", "runs", "cox-stuart")


def _p_of(result) -> float:
    return result.p.value


def selected_pvalue(selector: str, rs: RunSet, options: TestOptions = DEFAULT_OPTIONS,
                    alpha: float = 0.05) -> float:
    """p-value of one test (or the whole battery, as 0/1) on a generated RunSet.

    Two-sample tests compare runs 0 and 1; single-series tests use run 0.
    Degenerate data count as no rejection (p = 1).
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown test selector {selector!r}; choose from {SELECTORS}")
    runs = rs.runs
    paired = {
        "mann-whitney": mann_whitney_test,
        "wald-wolfowitz": wald_wolfowitz_test,
        "sign": sign_test,
        "wilcoxon": wilcoxon_signed_rank_test,
    }
    try:
        if selector == "purity":
            return 0.0 if purity_test(rs, alpha, options=options).verdict == "purity-rejected" else 1.0
        if selector == "kruskal-wallis":
            return _p_of(kruskal_wallis_test([r.values for r in runs], options))
        a = runs[0].values
        if selector == "runs":
            return _p_of(runs_test(dichotomize(a), options=options))
        if selector == "cox-stuart":
            return _p_of(cox_stuart_test(a, options=options))
        return _p_of(paired[selector](a, runs[1].values, options=options))
    except DegenerateTestError:
        return 1.0


def replication_spec(spec: GeneratorSpec, index: int) -> GeneratorSpec:
    """Spec for replication ``index``; its seed depends only on (spec.seed, index)."""
    state = np.random.SeedSequence([int(spec.seed), int(index)]).generate_state(1, np.uint32)
    return replace(spec, seed=int(state[0]))


@dataclass
class PowerEstimate:
    test: str
    alpha: float
    replications: int
    rejections: int
    power: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("wilson_interval needs at least one trial")
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def _replicate(args) -> bool:
    spec, index, selector, alpha, options = args
    rs = generate(replication_spec(spec, index)).runset
    if callable(selector):
        return bool(selector(rs))
    return selected_pvalue(selector, rs, options, alpha) <= alpha


def power_study(spec: GeneratorSpec, test_selector: str | Callable[[RunSet], bool] = "purity",
                alpha: float = 0.05, replications: int = 1000,
                options: TestOptions = DEFAULT_OPTIONS, workers: int = 1) -> PowerEstimate:
    """Fraction of replications in which the selected test rejects at ``alpha``.

    ``test_selector`` is a name from :data:`SELECTORS` or a callable taking
    a RunSet and returning True on rejection.
    """
    if replications < 100:
        raise ValueError(f"power_study needs at least 100 replications, got {replications}")
    if isinstance(test_selector, str) and test_selector not in SELECTORS:
        raise ValueError(f"unknown test selector {test_selector!r}; choose from {SELECTORS}")
    jobs = [(spec, i, test_selector, alpha, options) for i in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(_replicate, jobs, chunksize=max(1, replications // (4 * workers))))
    else:
        hits = [_replicate(j) for j in jobs]
    rejections = int(sum(hits))
    lo, hi = wilson_interval(rejections, replications)
    name = test_selector if isinstance(test_selector, str) else getattr(test_selector, "__name__", "custom")
    return PowerEstimate(name, alpha, replications, rejections, rejections / replications, lo, hi)
