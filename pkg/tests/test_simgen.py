import numpy as np
import pytest

from puritytests.nptests import TestOptions
from puritytests.simgen import (
    SELECTORS,
    GeneratorSpec,
    generate,
    power_study,
    replication_spec,
    selected_pvalue,
    wilson_interval,
)

TIES = TestOptions(tie_correction=True)


def values_bytes(gen):
    return b"".join(r.values.tobytes() for r in gen.runset.runs)


class TestSpec:
    @pytest.mark.parametrize("probs", [(0.5, 0.6), (1.2, -0.2), (1.0,), (0.5, float("nan"))])
    def test_bad_probs(self, probs):
        with pytest.raises(ValueError):
            GeneratorSpec(outcome_probs=probs)

    def test_sum_tolerance(self):
        GeneratorSpec(outcome_probs=(0.1, 0.2, 0.7 + 1e-13))
        with pytest.raises(ValueError):
            GeneratorSpec(outcome_probs=(0.1, 0.2, 0.7 + 1e-9))

    def test_bad_transition(self):
        with pytest.raises(ValueError, match="row"):
            GeneratorSpec(kind="markov", contamination={"transition": [[0.5, 0.4], [0.5, 0.5]]})
        with pytest.raises(ValueError):
            GeneratorSpec(kind="markov", contamination={"transition": [[1.0]]})

    def test_bad_kind_and_seed(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="poisson")
        with pytest.raises(ValueError):
            GeneratorSpec(seed=-1)

    def test_drift_out_of_range(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="drift", outcome_probs=(0.9, 0.1), contamination={"slope": 0.2})

    def test_dict_round_trip(self):
        spec = GeneratorSpec(kind="run-mixture", contamination={"alt_probs": [0.4, 0.6], "weight": 0.5}, seed=3)
        assert GeneratorSpec.from_dict(spec.to_dict()) == spec


class TestGenerate:
    def test_frequency(self):
        gen = generate(GeneratorSpec(runs=1, run_length=100_000, seed=1))
        v = gen.runset.runs[0].values
        assert set(np.unique(v)) == {-1.0, 1.0}
        assert abs(np.mean(v == -1.0) - 0.5) <= 0.005
        assert gen.ground_truth == "pure"

    def test_alternating_chain(self):
        spec = GeneratorSpec(kind="markov", contamination={"transition": [[0, 1], [1, 0]], "start": 0},
                             runs=3, run_length=50, seed=5)
        for r in generate(spec).runset.runs:
            assert r.values.tolist() == [1.0, -1.0] * 25

    def test_zero_drift_is_pure(self):
        pure = generate(GeneratorSpec(seed=9, runs=4, run_length=300))
        drift = generate(GeneratorSpec(kind="drift", contamination={"slope": 0.0}, seed=9, runs=4, run_length=300))
        assert values_bytes(pure) == values_bytes(drift)
        assert drift.ground_truth == "pure"

    def test_deterministic(self):
        spec = GeneratorSpec(kind="periodic", contamination={"period": 12, "amplitude": 0.3}, seed=11)
        assert values_bytes(generate(spec)) == values_bytes(generate(spec))
        assert values_bytes(generate(spec)) != values_bytes(generate(GeneratorSpec(
            kind="periodic", contamination={"period": 12, "amplitude": 0.3}, seed=12)))

    def test_three_outcomes(self):
        gen = generate(GeneratorSpec(outcome_probs=(0.2, 0.3, 0.5), runs=1, run_length=60_000, seed=2))
        v = gen.runset.runs[0].values
        freqs = [np.mean(v == k) for k in range(3)]
        assert np.allclose(freqs, [0.2, 0.3, 0.5], atol=0.01)

    def test_mixture_labels(self):
        spec = GeneratorSpec(kind="run-mixture", contamination={"alt_probs": [0.1, 0.9], "weight": 0.5},
                             runs=40, run_length=500, seed=4)
        gen = generate(spec)
        assert gen.ground_truth == "mixed"
        for r in gen.runset.runs:
            share = np.mean(r.values == 1.0)
            assert abs(share - (0.1 if r.label == "alt" else 0.5)) < 0.1

    def test_drift_changes_frequency(self):
        spec = GeneratorSpec(kind="drift", contamination={"slope": 0.4}, runs=20, run_length=1000, seed=6)
        v = np.stack([r.values for r in generate(spec).runset.runs])
        assert np.mean(v[:, :200] == 1.0) < 0.6 < np.mean(v[:, -200:] == 1.0)

    def test_periodic_clamped(self):
        spec = GeneratorSpec(kind="periodic", contamination={"period": 10, "amplitude": 2.0},
                             runs=1, run_length=1000, seed=3)
        v = generate(spec).runset.runs[0].values
        assert len(np.unique(v)) == 2

    def test_metadata_names_rng(self):
        meta = generate(GeneratorSpec(seed=1)).runset.metadata
        assert meta["rng"] and meta["generator"]["seed"] == 1


class TestPowerStudy:
    def test_replication_seeds(self):
        spec = GeneratorSpec(seed=5)
        assert replication_spec(spec, 3) == replication_spec(spec, 3)
        assert replication_spec(spec, 3).seed != replication_spec(spec, 4).seed

    def test_too_few_replications(self):
        with pytest.raises(ValueError):
            power_study(GeneratorSpec(), "runs", replications=50)

    def test_unknown_selector(self):
        with pytest.raises(ValueError):
            power_study(GeneratorSpec(), "chi-square", replications=100)
        with pytest.raises(ValueError):
            selected_pvalue("chi-square", generate(GeneratorSpec()).runset)

    def test_wilson(self):
        lo, hi = wilson_interval(50, 1000)
        assert lo < 0.05 < hi and hi - lo < 0.03
        assert wilson_interval(0, 100)[0] == 0.0

    def test_alternating_runs_power(self):
        spec = GeneratorSpec(kind="markov", contamination={"transition": [[0, 1], [1, 0]], "start": 0},
                             runs=2, run_length=20, seed=1)
        est = power_study(spec, "runs", replications=100)
        assert est.power == 1.0 and est.ci_low > 0.95

    def test_mixture_kruskal_wallis_power(self):
        spec = GeneratorSpec(kind="run-mixture", contamination={"alt_probs": [0.4, 0.6], "weight": 0.5},
                             outcome_probs=(0.6, 0.4), runs=10, run_length=200, seed=21)
        assert power_study(spec, "kruskal-wallis", replications=300, options=TIES).power >= 0.9

    def test_custom_selector(self):
        est = power_study(GeneratorSpec(seed=1, runs=2, run_length=30), lambda rs: True, replications=100)
        assert est.rejections == 100

    def test_workers_agree(self):
        spec = GeneratorSpec(runs=3, run_length=100, seed=8)
        serial = power_study(spec, "purity", replications=120)
        parallel = power_study(spec, "purity", replications=120, workers=3)
        assert serial == parallel

    # Wald-Wolfowitz is left out: on two-symbol data almost every observation
    # is a cross-sample tie and the statistic is meaningless.
    @pytest.mark.slow
    @pytest.mark.parametrize("selector", [s for s in SELECTORS if s != "wald-wolfowitz"])
    def test_type_one(self, selector):
        spec = GeneratorSpec(runs=5, run_length=200, seed=2024)
        est = power_study(spec, selector, replications=10_000, options=TIES)
        assert 0.03 <= est.power <= 0.07

    @pytest.mark.slow
    @pytest.mark.parametrize("kind,magnitude", [
        ("run-mixture", 0.1), ("drift", 0.2), ("periodic", 0.3), ("markov", 0.2)])
    def test_contamination_detected(self, kind, magnitude):
        spec = GeneratorSpec(kind=kind, runs=10, run_length=1000, seed=77).with_magnitude(magnitude)
        assert power_study(spec, "purity", replications=100, options=TIES).power >= 0.8
