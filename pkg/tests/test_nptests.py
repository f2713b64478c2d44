import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from puritytests.nptests import (
    DegenerateTestError,
    TestOptions,
    cox_stuart_test,
    dichotomize,
    kruskal_wallis_test,
    mann_whitney_test,
    mcnemar_test,
    runs_count,
    runs_expectation,
    runs_null_counts,
    runs_test,
    runs_variance,
    sign_test,
    wald_wolfowitz_test,
    wilcoxon_signed_rank_test,
)
import oracles

SIDES = ["two-sided", "greater", "less"]


class TestSign:
    def test_all_plus(self):
        r = sign_test([1, 2, 3], [0, 0, 0])
        assert (r.statistic, r.n_used, r.p.value) == (3, (3,), 0.25)

    def test_all_ties(self):
        with pytest.raises(DegenerateTestError, match="no informative pairs"):
            sign_test([1, 2, 3], [1, 2, 3])

    def test_large_center(self):
        x = np.r_[np.ones(50), np.zeros(50)]
        r = sign_test(x, 1 - x)
        assert r.details["z"] == 0 and r.p.value == 1.0 and r.p.method == "normal-approx"

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sign_test([1, 2], [1])

    def test_both_methods_reported(self):
        r = sign_test([1, 2, 3, 4], [0, 0, 0, 5])
        assert r.p.method == "exact"
        assert r.alternatives[0].method == "normal-approx"

    def test_continuity_correction_shrinks_z(self):
        x, y = np.arange(60.0), np.r_[np.zeros(40), np.full(20, 100.0)]
        res = sign_test(x, y)
        corrected = sign_test(x, y, options=TestOptions(continuity_correction=True)).details["z"]
        (m,) = res.n_used
        assert m == 59
        assert abs(corrected) == pytest.approx(abs(res.details["z"]) - 1 / math.sqrt(m))


class TestMcNemar:
    def test_mixed(self):
        r = mcnemar_test([(0, 1), (0, 1), (1, 0)])
        assert (r.statistic, r.n_used, r.p.value) == (2, (3,), 1.0)

    def test_concordant_only(self):
        with pytest.raises(DegenerateTestError):
            mcnemar_test([(0, 0)] * 10)

    def test_all_discordant(self):
        r = mcnemar_test([(0, 1)] * 8)
        assert r.statistic == 8 and r.p.value == pytest.approx(0.0078125)

    def test_non_binary(self):
        with pytest.raises(ValueError):
            mcnemar_test([(0, 2)])


class TestCoxStuart:
    def test_increasing(self):
        r = cox_stuart_test(np.arange(10.0))
        assert (r.statistic, r.n_used, r.p.value) == (5, (5,), 0.0625)

    def test_constant(self):
        with pytest.raises(DegenerateTestError):
            cox_stuart_test([4.0] * 9)

    def test_worked_series(self):
        r = cox_stuart_test([3, 1, 4, 1, 5, 9, 2, 6])
        assert (r.statistic, r.n_used, r.p.value) == (3, (4,), 0.625)

    def test_odd_drops_middle(self):
        r = cox_stuart_test([1, 2, 100, 3, 4])
        assert r.n_used == (2,) and "middle" in r.notes[-1]

    def test_too_short(self):
        with pytest.raises(ValueError):
            cox_stuart_test([1.0])


class TestRunsCount:
    def test_worked_examples(self):
        assert runs_count("10110001001101110") == 10
        assert runs_count("11111100000") == 2
        assert runs_count("1") == 1

    def test_three_symbols(self):
        with pytest.raises(ValueError):
            runs_count("0120")

    @given(st.lists(st.sampled_from("ab"), min_size=1, max_size=80))
    def test_adjacent_identity(self, seq):
        assert runs_count(seq) == 1 + sum(a != b for a, b in zip(seq, seq[1:]))


class TestRuns:
    def test_moments_n5(self):
        assert runs_expectation(5, 5) == 6
        assert runs_variance(5, 5) == pytest.approx(2000 / 900)

    def test_alternating_maximum(self):
        seq = [1, -1] * 15
        r = runs_test(seq)
        assert r.statistic == 30 and r.p.method == "normal-approx"

    def test_two_runs_exact(self):
        r = runs_test("11111100000")
        assert r.statistic == 2 and r.n_used == (5, 6)
        assert r.p.value == pytest.approx(2 / 231, abs=1e-15)  # 2 * P(R <= 2) = 2 * 2/462

    def test_single_symbol(self):
        with pytest.raises(DegenerateTestError, match="undefined"):
            runs_test("1111")

    @pytest.mark.parametrize("n1,n2", [(n1, n2) for n1 in range(1, 9) for n2 in range(1, 9)])
    def test_null_moments(self, n1, n2):
        counts = runs_null_counts(n1, n2)
        total = sum(counts.values())
        assert total == math.comb(n1 + n2, n1)
        mean = sum(r * c for r, c in counts.items()) / total
        var = sum((r - mean) ** 2 * c for r, c in counts.items()) / total
        assert mean == pytest.approx(runs_expectation(n1, n2), abs=1e-10)
        assert var == pytest.approx(runs_variance(n1, n2), abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.sampled_from([0, 1]), min_size=2, max_size=14), st.sampled_from(SIDES))
    def test_exact_matches_oracle(self, seq, side):
        if len(set(seq)) < 2:
            return
        assert runs_test(seq, side).p.value == pytest.approx(
            float(oracles.runs_oracle(seq, side)), abs=1e-12)

    def test_dichotomize(self):
        assert dichotomize([3, 1, 2, 5, 4]).tolist() == [0, 0, 1, 1]
        assert dichotomize([1, -1, 1]).tolist() == [1, -1, 1]


class TestWaldWolfowitz:
    def test_separated(self):
        r = wald_wolfowitz_test([1, 2, 3], [10, 20, 30])
        assert r.statistic == 2

    def test_interleaved(self):
        assert wald_wolfowitz_test([1, 3, 5], [2, 4, 6]).statistic == 6

    def test_small_exact(self):
        assert wald_wolfowitz_test([1, 2], [3, 4], "less").p.value == pytest.approx(1 / 3)

    def test_cross_ties_warn(self):
        r = wald_wolfowitz_test([1, 2, 2], [2, 3])
        assert r.details["cross_sample_ties"] == 1
        assert any("tied" in n for n in r.notes)
        # s1 observations first inside the tied block: 0 0 0 | 1 1
        assert r.statistic == 2


class TestMannWhitney:
    def test_moments_n4(self):
        r = mann_whitney_test([1, 2, 3, 4], [5, 6, 7, 8])
        assert r.details["expected"] == 8 and r.details["variance"] == 12

    def test_full_separation(self):
        r = mann_whitney_test([1, 2, 3], [4, 5, 6])
        assert r.details["R1"] == 6 and r.statistic == 9
        assert mann_whitney_test([4, 5, 6], [1, 2, 3]).statistic == 0

    def test_interleaved(self):
        r = mann_whitney_test([1, 4], [2, 3])
        assert r.details["R1"] == 5 and r.statistic == 2

    def test_empty(self):
        with pytest.raises(ValueError):
            mann_whitney_test([], [1.0])

    def test_statistic_counts_pairs(self):
        rng = np.random.default_rng(4)
        a, b = rng.integers(0, 6, 12), rng.integers(0, 6, 9)
        assert mann_whitney_test(a, b).statistic == oracles.u_by_pairs(a, b)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.integers(0, 8), min_size=1, max_size=30),
           st.lists(st.integers(0, 8), min_size=1, max_size=30))
    def test_swap(self, a, b):
        if len(set(a + b)) == 1:
            return
        r, s = mann_whitney_test(a, b), mann_whitney_test(b, a)
        assert 0 <= r.statistic <= len(a) * len(b)
        assert s.statistic == len(a) * len(b) - r.statistic
        assert r.p.value == pytest.approx(s.p.value, abs=1e-15)

    def test_tie_correction_only_when_asked(self):
        a, b = [1, 1, 2, 2, 3] * 5, [2, 2, 3, 3, 4] * 5
        plain = mann_whitney_test(a, b)
        corrected = mann_whitney_test(a, b, options=TestOptions(tie_correction=True))
        assert corrected.details["variance"] < plain.details["variance"]
        assert plain.details["tie_groups"] == 4

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 5), min_size=1, max_size=6),
           st.lists(st.integers(0, 5), min_size=1, max_size=6), st.sampled_from(SIDES))
    def test_exact_matches_oracle(self, a, b, side):
        if len(set(a + b)) == 1:
            return
        assert mann_whitney_test(a, b, side).p.value == pytest.approx(
            float(oracles.mann_whitney_oracle(a, b, side)), abs=1e-12)


class TestWilcoxon:
    def test_moments_n10(self):
        r = wilcoxon_signed_rank_test(np.arange(1, 11.0), np.zeros(10))
        assert r.details["expected"] == 27.5 and r.details["variance"] == 96.25

    def test_all_positive(self):
        r = wilcoxon_signed_rank_test([1, 2, 3], [0, 0, 0], "greater")
        assert (r.details["R_plus"], r.details["R_minus"], r.statistic) == (6, 0, 0)
        assert r.p.value == 0.125

    def test_all_zero(self):
        with pytest.raises(DegenerateTestError):
            wilcoxon_signed_rank_test([1, 2], [1, 2])

    def test_zero_differences_dropped(self):
        r = wilcoxon_signed_rank_test([1, 2, 3, 4], [1, 0, 0, 0])
        assert r.n_used == (3,) and r.ties_skipped == 1

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=10),
           st.sampled_from(SIDES))
    def test_exact_matches_oracle(self, pairs, side):
        x, y = [p[0] for p in pairs], [p[1] for p in pairs]
        if x == y:
            return
        assert wilcoxon_signed_rank_test(x, y, side).p.value == pytest.approx(
            float(oracles.wilcoxon_oracle(x, y, side)), abs=1e-12)


class TestKruskalWallis:
    def test_worked_example(self):
        r = kruskal_wallis_test([[1, 2], [3, 4], [5, 6]])
        assert r.statistic == pytest.approx(12 / 42 * (4.5 + 24.5 + 60.5) - 21, abs=1e-12)
        assert r.details["df"] == 2
        assert r.p.value == pytest.approx(1 / 15)  # 6 of 90 label assignments reach H
        assert r.alternatives[0].value == pytest.approx(math.exp(-r.statistic / 2))
        assert any("unreliable" in n for n in r.notes)

    def test_equal_rank_sums(self):
        r = kruskal_wallis_test([[1, 6], [2, 5], [3, 4]])
        assert r.statistic == pytest.approx(0.0, abs=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            kruskal_wallis_test([[1, 2, 3]])

    def test_h_is_z_squared(self):
        rng = np.random.default_rng(9)
        a, b = rng.normal(size=7), rng.normal(size=11)
        h = kruskal_wallis_test([a, b]).statistic
        z = mann_whitney_test(a, b).details["z"]
        assert abs(h - z * z) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 4), min_size=1, max_size=4), min_size=2, max_size=3))
    def test_exact_matches_oracle(self, groups):
        if sum(map(len, groups)) > 10 or len({v for g in groups for v in g}) == 1:
            return
        assert kruskal_wallis_test(groups).p.value == pytest.approx(
            float(oracles.kruskal_oracle(groups)), abs=1e-12)


MONOTONE = [np.exp, lambda x: 3 * x + 7, lambda x: np.arctan(x), lambda x: x**3]


@pytest.mark.parametrize("f", MONOTONE)
def test_monotone_invariance(f):
    rng = np.random.default_rng(12)
    a, b, c = rng.normal(size=25), rng.normal(size=30), rng.normal(size=12)
    checks = [
        lambda g: mann_whitney_test(g(a), g(b)),
        lambda g: kruskal_wallis_test([g(a), g(b), g(c)]),
        lambda g: wald_wolfowitz_test(g(a), g(b)),
        lambda g: runs_test(dichotomize(g(b))),
        lambda g: cox_stuart_test(g(b)),
        lambda g: sign_test(g(a), g(b[:25])),
    ]
    for check in checks:
        plain, mapped = check(lambda x: x), check(f)
        assert plain.statistic == mapped.statistic
        assert plain.p.value == mapped.p.value


@pytest.mark.parametrize("scale,shift", [(2.0, 0.0), (0.5, 3.0), (8.0, -100.0)])
def test_wilcoxon_affine_invariance(scale, shift):
    # signed ranks use the sizes of the differences, so only positive affine maps preserve them
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=30), rng.normal(0.3, 1, size=30)
    plain = wilcoxon_signed_rank_test(x, y)
    mapped = wilcoxon_signed_rank_test(scale * x + shift, scale * y + shift)
    assert plain.statistic == mapped.statistic
    assert plain.p.value == pytest.approx(mapped.p.value, rel=1e-12)


def test_wilcoxon_not_invariant_under_nonlinear_maps():
    x, y = np.array([1.0, 2.0, 3.0, 10.0]), np.array([0.0, 2.5, 0.0, 9.0])
    assert (wilcoxon_signed_rank_test(x, y).statistic
            != wilcoxon_signed_rank_test(np.exp(x), np.exp(y)).statistic)


def test_exact_threshold_configurable():
    r = mann_whitney_test([1, 2, 3], [4, 5, 6], options=TestOptions(exact_mann_whitney=0))
    assert r.p.method == "normal-approx"
    r = runs_test([0, 1] * 15, options=TestOptions(exact_runs=40))
    assert r.p.method == "exact"


def test_result_serializes():
    d = kruskal_wallis_test([[1, 2, 3], [4, 5, 6]]).to_dict()
    assert d["p"]["method"] == "exact" and d["statistic_name"] == "H"
