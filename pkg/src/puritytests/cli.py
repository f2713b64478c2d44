"""Command-line interface.

Exit codes: 0 consistent with a pure ensemble (or success for commands
without a verdict), 1 usage or data error, 2 purity rejected,
3 inconclusive.  The JSON report goes to stdout or ``--out``; a short
human summary goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import finestructure as fs
from .ingest import IngestError, IngestSchema, ingest, write_runset
from .nptests import Sample, TestOptions
from .purity import (
    CORRECTIONS,
    STRATEGIES,
    RunSet,
    SubEnsembleSpec,
    purity_test,
    randomness_check,
    sub_ensemble_purity,
)
from .report import Report
from .simgen import KINDS, SELECTORS, GeneratorSpec, generate, power_study

EXIT_PURE, EXIT_ERROR, EXIT_REJECTED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
VERDICT_EXIT = {
    "consistent-with-pure": EXIT_PURE,
    "purity-rejected": EXIT_REJECTED,
    "inconclusive": EXIT_INCONCLUSIVE,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _unit_interval(text: str) -> float:
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return x


# -- shared argument groups ------------------------------------------------


def _add_output(p):
    p.add_argument("--out", type=Path, help="write the JSON report here instead of stdout")


def _add_input(p):
    p.add_argument("input", nargs="?", type=Path, help="CSV or JSONL file of (run, t, v) rows")
    p.add_argument("--values", type=_floats,
                   help="inline comma-separated series, used instead of an input file")
    p.add_argument("--format", choices=("csv", "jsonl"), help="input format (default: by extension)")
    p.add_argument("--run-col", default="run")
    p.add_argument("--index-col", default="t")
    p.add_argument("--value-col", default="v")
    p.add_argument("--missing", choices=("error", "skip-with-warning"), default="error",
                   dest="missing_policy")


def _add_test_options(p):
    p.add_argument("--alpha", type=_unit_interval, default=0.05)
    p.add_argument("--correction", choices=CORRECTIONS, default="holm")
    p.add_argument("--tie-correction", action="store_true")
    p.add_argument("--continuity-correction", action="store_true")
    for name, default in (("binomial", 50), ("runs", 20), ("mann-whitney", 16),
                          ("wilcoxon", 20), ("kruskal-wallis", 10)):
        p.add_argument(f"--exact-threshold-{name}", type=int, default=default, metavar="N",
                       help=f"largest size computed exactly (default {default})")


def _test_options(args) -> TestOptions:
    return TestOptions(
        tie_correction=args.tie_correction,
        continuity_correction=args.continuity_correction,
        exact_binomial=args.exact_threshold_binomial,
        exact_runs=args.exact_threshold_runs,
        exact_mann_whitney=args.exact_threshold_mann_whitney,
        exact_wilcoxon=args.exact_threshold_wilcoxon,
        exact_kruskal_wallis=args.exact_threshold_kruskal_wallis,
    )


def _load(args, report: Report) -> RunSet:
    if args.values is not None:
        if args.input is not None:
            raise UsageError("give either an input file or --values, not both")
        if not args.values:
            raise UsageError("--values is empty")
        report.inputs["values"] = args.values
        return RunSet("inline", [Sample("0", args.values)])
    if args.input is None:
        raise UsageError("an input file or --values is required")
    schema = IngestSchema(args.format, args.run_col, args.index_col, args.value_col,
                          args.missing_policy)
    report.add_input_file(args.input)
    rs = ingest(args.input, schema)
    report.warnings.extend(rs.metadata.get("ingest_warnings", []))
    return rs


def _select_run(rs: RunSet, run_id: str | None) -> Sample:
    if run_id is None:
        if len(rs.runs) != 1:
            raise UsageError(f"input holds {len(rs.runs)} runs; choose one with --run")
        return rs.runs[0]
    for r in rs.runs:
        if r.run_id == run_id:
            return r
    raise UsageError(f"no run {run_id!r} in input")


def _echo_args(args) -> dict:
    skip = {"func", "out", "input", "values"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in skip}


# -- commands --------------------------------------------------------------


def cmd_purity(args, report: Report) -> int:
    with report.stage("ingest"):
        rs = _load(args, report)
    options = _test_options(args)
    with report.stage("analysis"):
        if args.parts is not None:
            if args.seed is None:
                raise UsageError("--parts needs an explicit --seed")
            spec = SubEnsembleSpec(args.seed, args.fraction, args.strategy)
            sample = _select_run(rs, args.run) if args.run or len(rs.runs) == 1 else None
            if sample is None:
                raise UsageError("sub-ensemble purity works on one run; choose it with --run")
            pr = sub_ensemble_purity(sample, spec, args.parts, args.alpha, args.correction, options,
                                     min_part=args.min_part)
        else:
            pr = purity_test(rs, args.alpha, args.correction, options, workers=args.workers)
    report.results["purity"] = pr.to_dict()
    report.warnings.extend(pr.warnings)
    family = pr.family()
    rejected = sum(o.corrected_p <= pr.alpha for o in family)
    print(f"purity: {pr.verdict} ({rejected} of {len(family)} tests reject at "
          f"alpha={pr.alpha}, {pr.correction} correction)", file=sys.stderr)
    return VERDICT_EXIT[pr.verdict]


def cmd_randomness(args, report: Report) -> int:
    with report.stage("ingest"):
        rs = _load(args, report)
    with report.stage("analysis"):
        rr = randomness_check(rs, args.alpha, args.correction, _test_options(args), args.lags)
    report.results["randomness"] = rr.to_dict()
    report.warnings.extend(rr.warnings)
    for entry in rr.runs:
        runs_o = entry["runs"]
        p = runs_o.result.p.value if runs_o.result else None
        freqs = ", ".join(f"{k}: {v:.4g}" for k, v in entry["frequencies"].items())
        print(f"run {entry['run_id']}: n={entry['n']} freq[{freqs}] runs-test p={p}",
              file=sys.stderr)
    print(f"randomness: {rr.verdict}", file=sys.stderr)
    return VERDICT_EXIT[rr.verdict]


def cmd_decompose(args, report: Report) -> int:
    with report.stage("ingest"):
        rs = _load(args, report)
    runs = [_select_run(rs, args.run)] if args.run else rs.runs
    fn = fs.decompose_additive if args.model == "additive" else fs.decompose_multiplicative
    out = []
    with report.stage("analysis"):
        for r in runs:
            dec = fn(r.values, args.period, args.trend_window)
            out.append({"run_id": r.run_id, "decomposition": dec.to_dict()})
            print(f"run {r.run_id}: {args.model} seasonal indices "
                  f"{np.round(dec.seasonal_indices, 6).tolist()}", file=sys.stderr)
    report.results["decompositions"] = out
    return EXIT_PURE


def cmd_forecast(args, report: Report) -> int:
    with report.stage("ingest"):
        rs = _load(args, report)
    runs = [_select_run(rs, args.run)] if args.run else rs.runs
    out = []
    with report.stage("analysis"):
        for r in runs:
            fitted, nxt = fs.exp_smooth_forecast(r.values, args.w, args.init, args.init_k)
            out.append({"run_id": r.run_id, "w": args.w, "fitted": fitted, "next": nxt})
            print(f"run {r.run_id}: next forecast {nxt:.6g}", file=sys.stderr)
    report.results["forecasts"] = out
    return EXIT_PURE


def cmd_scan(args, report: Report) -> int:
    with report.stage("ingest"):
        rs = _load(args, report)
    runs = [_select_run(rs, args.run)] if args.run else rs.runs
    out = []
    with report.stage("analysis"):
        for r in runs:
            ranked = fs.box_jenkins_scan(r.values, args.max_p, args.max_d, args.lags,
                                         args.min_whiteness, args.runs_alpha)
            entry = {"run_id": r.run_id, "ranking": [e.to_dict() for e in ranked]}
            top = ranked[0]
            if args.horizon and top.model is not None:
                entry["forecast"] = _scan_forecast(r.values, top, args.horizon)
            out.append(entry)
            coef = top.model.coefficients.round(4).tolist() if top.model is not None else None
            print(f"run {r.run_id}: top model p={top.p} d={top.d} coefficients={coef} "
                  f"adequate={top.adequate}", file=sys.stderr)
    report.results["scans"] = out
    return EXIT_PURE


def _scan_forecast(z: np.ndarray, entry: fs.ScanEntry, horizon: int) -> list[float]:
    if entry.d == 0:
        return entry.model.forecast(z, horizon).tolist()
    y = fs.difference(z, entry.d)
    ahead = entry.model.forecast(y, horizon)
    # integrate forward from the last values of each intermediate difference
    for k in range(entry.d - 1, -1, -1):
        level = z if k == 0 else fs.difference(z, k)
        ahead = level[-1] + np.cumsum(ahead)
    return ahead.tolist()


def _spec_from_args(args) -> GeneratorSpec:
    if args.seed is None:
        raise UsageError("--seed is required: randomized commands never pick a seed themselves")
    if getattr(args, "spec", None):
        d = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        d["seed"] = args.seed
        return GeneratorSpec.from_dict(d)
    contamination = json.loads(args.contamination) if args.contamination else {}
    probs = tuple(args.probs) if args.probs else (0.5, 0.5)
    return GeneratorSpec(args.kind, probs, contamination, args.runs, args.run_length, args.seed)


def cmd_simulate(args, report: Report) -> int:
    spec = _spec_from_args(args)
    with report.stage("generate"):
        gen = generate(spec)
    schema = IngestSchema(args.format, args.run_col, args.index_col, args.value_col)
    if args.data_out is None:
        raise UsageError("--data-out is required")
    write_runset(gen.runset, args.data_out, schema)
    report.inputs["spec"] = spec.to_dict()
    report.results["simulation"] = {
        "data_file": str(args.data_out),
        "ground_truth": gen.ground_truth,
        "contamination": gen.contamination,
        "rng": gen.runset.metadata["rng"],
        "runs": len(gen.runset.runs),
        "run_length": spec.run_length,
    }
    print(f"simulate: wrote {len(gen.runset.runs)} runs x {spec.run_length} "
          f"({gen.ground_truth}) to {args.data_out}", file=sys.stderr)
    return EXIT_PURE


def cmd_calibrate(args, report: Report) -> int:
    base = _spec_from_args(args)
    options = _test_options(args)
    unknown = set(args.tests) - set(SELECTORS)
    if unknown:
        raise UsageError(f"unknown tests {sorted(unknown)}; choose from {SELECTORS}")
    table = []
    with report.stage("calibrate"):
        for magnitude in args.magnitudes:
            for length in args.run_lengths or [base.run_length]:
                spec = base.with_magnitude(magnitude) if magnitude else base
                spec = GeneratorSpec(spec.kind, spec.outcome_probs, spec.contamination,
                                     spec.runs, length, spec.seed)
                for test in args.tests:
                    est = power_study(spec, test, args.alpha, args.replications, options,
                                      workers=args.workers)
                    table.append({"magnitude": magnitude, "run_length": length, **est.to_dict()})
                    print(f"{base.kind} magnitude={magnitude:g} length={length} {test}: "
                          f"power={est.power:.4f} [{est.ci_low:.4f}, {est.ci_high:.4f}]",
                          file=sys.stderr)
    report.inputs["spec"] = base.to_dict()
    report.results["power_table"] = table
    if args.table:
        with open(args.table, "w", newline="", encoding="utf-8") as fh:
            cols = ["magnitude", "run_length", "test", "alpha", "replications", "rejections",
                    "power", "ci_low", "ci_high"]
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
            writer.writeheader()
            writer.writerows(table)
    return EXIT_PURE


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="puritytests", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("purity", help="test whether all runs come from one population")
    _add_input(p); _add_test_options(p); _add_output(p)
    p.add_argument("--parts", type=int, help="split one run into this many sub-ensembles")
    p.add_argument("--strategy", choices=STRATEGIES, default="random-without-replacement")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--min-part", type=int, default=10)
    p.add_argument("--run", help="run id for --parts")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_purity)

    p = sub.add_parser("randomness", help="per-run runs, trend and autocorrelation checks")
    _add_input(p); _add_test_options(p); _add_output(p)
    p.add_argument("--lags", type=int, default=20)
    p.set_defaults(func=cmd_randomness)

    p = sub.add_parser("decompose", help="classical additive or multiplicative decomposition")
    _add_input(p); _add_output(p)
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--model", choices=("additive", "multiplicative"), default="additive")
    p.add_argument("--window", "--trend-window", dest="trend_window", type=int,
                   help="trend moving-average window (default 2*period+1)")
    p.add_argument("--run")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("forecast", help="one-parameter exponential smoothing")
    _add_input(p); _add_output(p)
    p.add_argument("--w", type=_unit_interval, required=True, help="weighting factor in (0, 1)")
    p.add_argument("--init", choices=("first", "mean"), default="first")
    p.add_argument("--init-k", type=int, default=1)
    p.add_argument("--run")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("scan", help="rank ARI(p, d) models by residual whiteness")
    _add_input(p); _add_output(p)
    p.add_argument("--max-p", type=int, default=3)
    p.add_argument("--max-d", type=int, default=2)
    p.add_argument("--lags", type=int, default=20)
    p.add_argument("--min-whiteness", type=float, default=0.85)
    p.add_argument("--runs-alpha", type=float, default=0.01)
    p.add_argument("--horizon", type=int, default=0, help="forecast steps from the top model")
    p.add_argument("--run")
    p.set_defaults(func=cmd_scan)

    for name, func in (("simulate", cmd_simulate), ("calibrate", cmd_calibrate)):
        p = sub.add_parser(name, help="write a synthetic RunSet" if name == "simulate"
                           else "power table over magnitudes x run lengths x tests")
        p.add_argument("--seed", type=int)
        p.add_argument("--spec", type=Path, help="JSON generator spec (its seed is replaced by --seed)")
        p.add_argument("--kind", choices=KINDS, default="pure-iid")
        p.add_argument("--probs", type=_floats)
        p.add_argument("--contamination", help="JSON object of kind-specific parameters")
        p.add_argument("--runs", type=int, default=10)
        p.add_argument("--run-length", type=int, default=200)
        _add_output(p)
        p.set_defaults(func=func)
    simulate, calibrate = sub.choices["simulate"], sub.choices["calibrate"]
    simulate.add_argument("--data-out", type=Path)
    simulate.add_argument("--format", choices=("csv", "jsonl"))
    simulate.add_argument("--run-col", default="run")
    simulate.add_argument("--index-col", default="t")
    simulate.add_argument("--value-col", default="v")
    _add_test_options(calibrate)
    calibrate.add_argument("--magnitudes", type=_floats, default=[0.0])
    calibrate.add_argument("--run-lengths", type=_ints,
                           help="comma-separated run lengths (default: --run-length)")
    calibrate.add_argument("--tests", type=_names, default=["purity"])
    calibrate.add_argument("--replications", type=int, default=1000)
    calibrate.add_argument("--workers", type=int, default=1)
    calibrate.add_argument("--table", type=Path, help="also write the power table as CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    report = Report(args.command)
    report.inputs["args"] = _echo_args(args)
    try:
        code = args.func(args, report)
    except UsageError as exc:
        print(f"puritytests {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (IngestError, ValueError, OSError) as exc:
        print(f"puritytests {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = report.dumps()
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
