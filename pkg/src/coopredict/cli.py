"""Command-line entry point: ``coopredict <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import DEFAULT_LAMBDA_GRID, ImputationMode, InitialAttraction, ModelKind, fit_model
from .errors import DataError, NumericError
from .io import (
    bundled_structures,
    decisions_to_csv,
    load_decisions,
    load_model,
    load_structures,
    save_model,
)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
log = logging.getLogger("coopredict")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kinds(text: str) -> list[ModelKind]:
    try:
        return [ModelKind(k.strip()) for k in text.split(",") if k.strip()]
    except ValueError:
        choices = ", ".join(k.value for k in ModelKind)
        raise argparse.ArgumentTypeError(f"model kinds are {choices}") from None


# --- helpers -------------------------------------------------------------------


def _structures(path):
    return bundled_structures() if path in (None, "bundled") else load_structures(path)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sha(path) -> str | None:
    if path in (None, "bundled", "-"):
        return path
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _record(args, inputs: dict) -> None:
    """Print the (inputs, seed, version) triple that reproduces this run."""
    doc = {"command": args.command, "inputs": {k: _sha(v) for k, v in inputs.items()}, "version": __version__}
    if hasattr(args, "seed"):
        doc["seed"] = args.seed
    print("run " + json.dumps(doc, sort_keys=True), file=sys.stderr)


def _pick(structures, ids):
    if not ids:
        return structures
    by_id = {s.id: s for s in structures}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"unknown structure id(s): {', '.join(missing)}")
    return [by_id[i] for i in ids]


def _sim_config(args, **extra):
    from .simulator import NoiseMode, SimulationConfig

    return SimulationConfig(
        n_interactions=args.interactions,
        seed=args.seed,
        horizon_override=getattr(args, "horizon", None),
        noise_mode=NoiseMode(getattr(args, "noise", "flip_implemented")),
        imputation_mode=ImputationMode(getattr(args, "imputation", "bernoulli_half")),
        **extra,
    )


# --- subcommands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    structures = load_structures(args.structures)
    print(f"{len(structures)} structures OK")
    if args.decisions:
        df = load_decisions(args.decisions, structures)
        print(f"{len(df)} decisions OK")
    return 0


def cmd_fit(args) -> int:
    structures = _structures(args.structures)
    decisions = load_decisions(args.decisions, structures)
    model = fit_model(
        args.model_kind,
        structures,
        decisions,
        lambda_grid=args.lambda_grid,
        fewa_mode=InitialAttraction(args.fewa_init),
        seed=args.seed,
        aliased="drop" if args.drop_aliased else "raise",
    )
    save_model(model, args.out)
    _record(args, {"structures": args.structures, "decisions": args.decisions})
    return 0


def cmd_predict(args) -> int:
    from .evaluation import predict_decisions

    model = load_model(args.model)
    structures = _structures(args.structures)
    rng = np.random.default_rng(args.seed)
    if args.decisions:
        decisions = load_decisions(args.decisions, structures)
        pred = predict_decisions(model, structures, decisions, rng, ImputationMode(args.imputation))
        out = decisions_to_csv(pred).splitlines()
        probs = [format(float(p), ".17g") for p in pred["prob"]]
        text = "\n".join([out[0] + ",probability"] + [f"{a},{p}" for a, p in zip(out[1:], probs)]) + "\n"
    else:
        from .behavior import predict_cooperation

        lines = ["structure_id,probability"]
        for game in _pick(structures, args.structure_id):
            p = predict_cooperation(model, game, t=1, rng=rng, imputation=ImputationMode(args.imputation))
            lines.append(f"{game.id},{format(p, '.17g')}")
        text = "\n".join(lines) + "\n"
    _write(args.out, text)
    _record(args, {"model": args.model, "structures": args.structures, "decisions": args.decisions})
    return 0


def cmd_simulate(args) -> int:
    from .simulator import derive_seed, results_to_csv, simulate_structure
    from dataclasses import replace

    model = load_model(args.model)
    structures = _structures(args.structures)
    config = _sim_config(args, first_period_prob_override=args.p1)
    position = {s.id: i for i, s in enumerate(structures)}
    results = [
        simulate_structure(model, g, replace(config, seed=derive_seed(args.seed, position[g.id])), threads=args.threads)
        for g in _pick(structures, args.structure_id)
    ]
    _write(args.out, results_to_csv(results))
    if args.svg:
        from .svg import line_chart

        series = {r.metadata["structure_id"]: list(enumerate(r.per_period_cooperation.tolist(), 1)) for r in results}
        Path(args.svg).write_text(line_chart(series, "Simulated cooperation", "period", "cooperation"))
    _record(args, {"model": args.model, "structures": args.structures})
    return 0


def cmd_crossval(args) -> int:
    from .evaluation import evaluate_aggregate, evaluate_individual, fold_sweep, loo_folds, make_folds, merge_reports, reports_to_csv

    structures = _structures(args.structures)
    decisions = load_decisions(args.decisions, structures)
    ids = [s.id for s in structures]
    config = _sim_config(args)
    if args.folds == "sweep":
        ks = args.ks or list(range(len(ids), 2, -1))
        table = fold_sweep(args.model_kind, ks, structures, decisions, config, seed=args.seed)
        _write(args.out, table.to_csv(index=False, lineterminator="\n", float_format="%.17g"))
        _record(args, {"structures": args.structures, "decisions": args.decisions})
        return 0
    if args.folds == "loo":
        plan = loo_folds(ids)
    else:
        try:
            k = int(args.folds)
        except ValueError:
            raise UsageError(f"--folds must be loo, sweep or an integer, got {args.folds!r}") from None
        plan = make_folds(ids, k, args.seed)
    reports = []
    for kind in args.model_kind:
        ind = agg = None
        if args.scale in ("individual", "both"):
            ind = evaluate_individual(
                kind, plan, structures, decisions,
                imputation=ImputationMode(args.imputation), seed=args.seed, skip_failed_folds=args.skip_failed_folds,
            )
        if args.scale in ("aggregate", "both"):
            agg = evaluate_aggregate(
                kind, plan, structures, decisions, config, threads=args.threads, skip_failed_folds=args.skip_failed_folds
            )
        rep = merge_reports(ind, agg) if ind and agg else (ind or agg)
        for f, msg in rep.failed_folds:
            print(f"warning: fold {f} skipped: {msg}", file=sys.stderr)
        reports.append(rep)
    _write(args.out, reports_to_csv(reports))
    if args.json:
        Path(args.json).write_text(
            "[\n" + ",\n".join(r.to_json().rstrip("\n") for r in reports) + "\n]\n"
        )
    _record(args, {"structures": args.structures, "decisions": args.decisions})
    return 0


def cmd_sensitivity(args) -> int:
    from .sensitivity import ParameterSpace, sensitivity_analysis

    model = load_model(args.model)
    report = sensitivity_analysis(
        model,
        ParameterSpace(),
        n_samples=args.samples,
        sims_per_sample=args.sims,
        replicates=args.bootstrap,
        seed=args.seed,
        threads=args.threads,
        period=args.period,
    )
    _write(args.out, report.to_csv())
    if args.svg:
        Path(args.svg).write_text(report.to_svg())
    if report.redrawn:
        print(f"note: {report.redrawn} degenerate bootstrap resamples were redrawn", file=sys.stderr)
    _record(args, {"model": args.model})
    return 0


def cmd_intervene(args) -> int:
    from .sensitivity import empirical_mean_structure, first_period_intervention

    model = load_model(args.model)
    structures = _structures(args.structures)
    game = empirical_mean_structure(structures) if args.structure_id == "mean" else _pick(structures, [args.structure_id])[0]
    config = _sim_config(args)
    lines = ["p1,cooperation_after_first"]
    for p1 in args.p1:
        lines.append(f"{p1:.17g},{first_period_intervention(model, game, p1, config):.17g}")
    _write(args.out, "\n".join(lines) + "\n")
    _record(args, {"model": args.model, "structures": args.structures})
    return 0


def cmd_inertia(args) -> int:
    from .evaluation import correlation, inertia_table

    model = load_model(args.model)
    structures = _structures(args.structures)
    decisions = load_decisions(args.decisions, structures)
    table = inertia_table(model, structures, decisions)
    _write(args.out, table.to_csv(index=False, lineterminator="\n", float_format="%.17g"))
    print(f"correlation {correlation(table['predicted'], table['actual']):.4f}", file=sys.stderr)
    _record(args, {"model": args.model, "structures": args.structures, "decisions": args.decisions})
    return 0


def cmd_gen_synthetic(args) -> int:
    from .synthetic import default_truth_model, generate_synthetic, sign_pattern_truth_model

    structures = _structures(args.structures)
    truths = {"default": default_truth_model, "sign-pattern": sign_pattern_truth_model}
    truth = truths[args.truth]() if args.truth in truths else load_model(args.truth)
    from .simulator import NoiseMode, SimulationConfig

    config = SimulationConfig(noise_mode=NoiseMode(args.noise))
    df = generate_synthetic(truth, structures, args.interactions, args.seed, config)
    _write(args.out, decisions_to_csv(df))
    _record(args, {"structures": args.structures, "truth": args.truth if args.truth not in truths else None})
    return 0


def cmd_report(args) -> int:
    """Render an earlier CSV output: a text summary, and an SVG where it makes sense."""
    text = Path(args.input).read_text()
    header = text.split("\n", 1)[0].strip()
    if header.startswith("model_kind,fold,"):
        from .evaluation import read_report_csv

        df = read_report_csv(text)
        pooled = df[df["fold"] == "all"].drop(columns=["fold"]).set_index("model_kind")
        summary = pooled.dropna(axis=1, how="all").to_string(float_format=lambda v: f"{v:.4f}") + "\n"
        svg = None
    elif header == "variable,estimate,ci_low,ci_high":
        from .sensitivity import read_sensitivity_csv
        from .svg import interval_chart

        rows = read_sensitivity_csv(text)
        summary = "".join(f"{v:>10} {e:+.3f} [{lo:+.3f}, {hi:+.3f}]\n" for v, e, lo, hi in rows)
        svg = interval_chart(rows, "PRCC with bootstrap 95% intervals", "PRCC")
    elif header == "structure_id,period,cooperation_rate,n":
        from .simulator import read_results_csv
        from .svg import line_chart

        series = read_results_csv(text)
        summary = "".join(f"{sid:>10} mean {rates.mean():.4f}\n" for sid, rates in series.items())
        svg = line_chart({k: list(enumerate(v.tolist(), 1)) for k, v in series.items()}, "Cooperation", "period", "cooperation")
    else:
        raise DataError(f"{args.input}: unrecognised CSV header {header!r}")
    _write(args.out, summary)
    if args.svg:
        if svg is None:
            raise UsageError("this report type has no chart")
        Path(args.svg).write_text(svg)
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coopredict", description="Predict cooperation in repeated Prisoner's Dilemma designs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, threads=False):
        if seed:
            sp.add_argument("--seed", type=_seed, default=0, help="unsigned 64-bit root seed")
        if threads:
            sp.add_argument("--threads", type=_positive, default=1, help="advisory worker count")

    def sim_opts(sp, interactions=1000):
        sp.add_argument("--interactions", type=_positive, default=interactions)
        sp.add_argument("--noise", choices=["flip_implemented", "no_flip"], default="flip_implemented")
        sp.add_argument("--imputation", choices=[m.value for m in ImputationMode], default="bernoulli_half")

    sp = sub.add_parser("validate", help="check a structures file (and optionally decisions)")
    sp.add_argument("structures")
    sp.add_argument("--decisions")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("fit", help="fit a model and save it as JSON")
    sp.add_argument("--model-kind", type=ModelKind, choices=list(ModelKind), default=ModelKind.FULL)
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--decisions", required=True)
    sp.add_argument("--lambda-grid", type=_floats, default=list(DEFAULT_LAMBDA_GRID))
    sp.add_argument("--fewa-init", choices=[m.value for m in InitialAttraction], default="uniform_opponent")
    sp.add_argument("--drop-aliased", action="store_true", help="zero out collinear columns instead of failing")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="cooperation probabilities from a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--decisions", help="score every decision given the observed previous period")
    sp.add_argument("--structure-id", nargs="*")
    sp.add_argument("--imputation", choices=[m.value for m in ImputationMode], default="bernoulli_half")
    sp.add_argument("--out")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("simulate", help="simulate per-period cooperation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--structure-id", nargs="*")
    sp.add_argument("--horizon", type=_positive)
    sp.add_argument("--p1", type=float, help="override period-1 cooperation probability")
    sp.add_argument("--out")
    sp.add_argument("--svg")
    sim_opts(sp)
    common(sp, threads=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("crossval", help="structure-level cross-validation")
    sp.add_argument("--model-kind", type=_kinds, default=[ModelKind.FULL], help="comma-separated kinds")
    sp.add_argument("--folds", default="loo", help="loo, sweep or an integer k")
    sp.add_argument("--ks", type=lambda s: [int(x) for x in s.split(",")], help="fold counts for --folds sweep")
    sp.add_argument("--scale", choices=["individual", "aggregate", "both"], default="both")
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--decisions", required=True)
    sp.add_argument("--skip-failed-folds", action="store_true")
    sp.add_argument("--out")
    sp.add_argument("--json")
    sim_opts(sp)
    common(sp, threads=True)
    sp.set_defaults(func=cmd_crossval)

    sp = sub.add_parser("sensitivity", help="LHS + PRCC global sensitivity")
    sp.add_argument("--model", required=True)
    sp.add_argument("--samples", type=_positive, default=5000)
    sp.add_argument("--sims", type=_positive, default=500, help="interactions per sample")
    sp.add_argument("--bootstrap", type=_positive, default=1000)
    sp.add_argument("--period", type=_positive, help="use cooperation at this period instead of the horizon mean")
    sp.add_argument("--out")
    sp.add_argument("--svg")
    common(sp, threads=True)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("intervene", help="fix period-1 cooperation and simulate the rest")
    sp.add_argument("--model", required=True)
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--structure-id", default="mean", help="a structure id, or 'mean' for the averaged design")
    sp.add_argument("--p1", type=_floats, default=[0.0, 0.5, 1.0])
    sp.add_argument("--out")
    sim_opts(sp)
    common(sp)
    sp.set_defaults(func=cmd_intervene)

    sp = sub.add_parser("inertia", help="predicted vs observed inertia per structure")
    sp.add_argument("--model", required=True)
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--decisions", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_inertia)

    sp = sub.add_parser("gen-synthetic", help="simulate a decisions file from a truth model")
    sp.add_argument("--truth", default="default", help="default, sign-pattern, or a model JSON path")
    sp.add_argument("--structures", default="bundled")
    sp.add_argument("--interactions", type=_positive, default=200, help="interactions per structure")
    sp.add_argument("--noise", choices=["flip_implemented", "no_flip"], default="flip_implemented")
    sp.add_argument("--out")
    common(sp)
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("report", help="summarise a crossval, sensitivity or simulate CSV")
    sp.add_argument("input")
    sp.add_argument("--out")
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"coopredict: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"coopredict: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"coopredict: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"coopredict: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"coopredict: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
