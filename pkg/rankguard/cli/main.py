"""
main.py - Command-line entry point.

Subcommands:
    verify      check the rank-preservation bound on generated instances
    falsify     count instances where ranking flips without the condition
    tv          exact or sample-estimated L1 divergence
    rank        Spearman correlation between two splits of a trace file
    select      ES / RSS / ES+RSS / HPS selections
    summarize   ES-RSS, protocol and breakdown reports
    simulate    generate trace files or single instances
    export      plot-ready convergence curves

Human tables go to stdout, machine artifacts to --out paths, diagnostics to
stderr. Exit codes: 0 success, 1 data problems, 2 schema or config problems.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from pydantic import BaseModel

from ..core.divergence import EstimatorConfig, divergence_report, estimate_report
from ..core.domain import disagreement_regions
from ..core.rank_analysis import (
    DEFAULT_TRIGGER_FLOOR,
    check_pair,
    falsify_converse,
    pairwise_divergence_report,
    verify_batch,
)
from ..pipeline.formats import (
    parse_instance,
    parse_samples,
    parse_traces,
    render_report,
    write_instance,
    write_report,
    write_traces,
)
from ..pipeline.trace_sim import (
    InstanceGenConfig,
    TraceGenConfig,
    generate_instance,
    generate_traces,
    load_instance_config,
    load_trace_config,
)
from ..selection.protocols import (
    select_es,
    select_hps_standard,
    select_hps_synthetic,
    select_rss,
)
from ..selection.summaries import (
    compare_protocols,
    convergence_curves,
    es_rss_summary,
    protocol_breakdown,
    trace_rank_report,
)
from ..utils.errors import InvalidConfigError, RankGuardError
from ..utils.logger import default_level, get_logger, set_level, setup_logger
from ..utils.settings import get_settings


logger = get_logger("cli")

SPLIT_CHOICES = ["train", "val", "test", "synthetic"]
AT_CHOICES = ["last", "best"]
FORMAT_CHOICES = ["table", "json", "csv"]


def _default(model, name: str) -> Any:
    value = model.model_fields[name].default
    if isinstance(value, tuple):
        return f"{value[0]}..{value[1]}"
    return value


# ─────────────────────────────────────────────────────────────────────────────
# Output helpers
# ─────────────────────────────────────────────────────────────────────────────

def _emit(report: Any, args: argparse.Namespace) -> None:
    """Print the report to stdout and write the machine artifact to --out."""
    sys.stdout.write(render_report(report, args.format))
    out = getattr(args, "out", None)
    if out:
        fmt = "csv" if Path(out).suffix.lower() == ".csv" else "json"
        write_report(report, fmt, out)
        logger.info("Wrote %s", out)


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _instance_config(args: argparse.Namespace, preset: Optional[InstanceGenConfig] = None) -> InstanceGenConfig:
    base = load_instance_config(args.config) if args.config else (preset or InstanceGenConfig())
    return load_instance_config(_merge(base.model_dump(), {
        "domain_size": args.domain_size,
        "num_classes": args.classes,
        "mixing": args.mixing,
        "hypothesis_accuracy": args.accuracy,
        "hypotheses_per_instance": args.hypotheses,
    }))


def _workers(args: argparse.Namespace) -> Optional[int]:
    if args.workers is not None:
        return args.workers
    return get_settings().workers


# ─────────────────────────────────────────────────────────────────────────────
# Handlers
# ─────────────────────────────────────────────────────────────────────────────

def cmd_verify(args: argparse.Namespace) -> int:
    config = _instance_config(args)
    report = verify_batch(
        config,
        args.instances,
        seed=args.seed,
        workers=_workers(args),
        trigger_floor=args.trigger_floor,
    )
    _emit(report, args)
    return 0 if report.passed else 1


def cmd_falsify(args: argparse.Namespace) -> int:
    config = _instance_config(args, preset=InstanceGenConfig.adversarial())
    flips = falsify_converse(config, args.instances, seed=args.seed, workers=_workers(args))
    _emit({
        "instances": args.instances,
        "instances_with_flips": flips,
        "seed": args.seed,
        "config": config.model_dump(mode="json"),
    }, args)
    return 0


def cmd_tv_exact(args: argparse.Namespace) -> int:
    instance = parse_instance(args.instance)
    if args.pair is None:
        _emit(pairwise_divergence_report(instance), args)
        return 0
    i, j = args.pair
    verdict = check_pair(instance, i, j)
    omega1, omega2 = disagreement_regions(instance.hypotheses[i], instance.hypotheses[j], instance.f)
    report = divergence_report(instance.mu_r, instance.mu_s, omega1 | omega2)
    logger.info("pair (%d, %d): condition_held=%s conclusion_held=%s", i, j, verdict.condition_held, verdict.conclusion_held)
    _emit(report, args)
    return 0


def cmd_tv_estimate(args: argparse.Namespace) -> int:
    real, synth = parse_samples(*args.samples)
    try:
        config = EstimatorConfig(
            clusters=args.clusters,
            restarts=args.restarts,
            max_iter=args.max_iter,
            tol=args.tol,
            seed=args.seed,
        )
    except ValueError as e:
        raise InvalidConfigError(str(e))
    _emit(estimate_report(real, synth, config, workers=_workers(args)), args)
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    traces = parse_traces(args.traces)
    report = trace_rank_report(traces, args.split_a, args.split_b, args.at, args.trained_on)
    if args.scatter:
        write_report(report, "csv", args.scatter)
    _emit(report, args)
    return 0


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidConfigError(f"select {args.protocol} requires {', '.join(missing)}")


def cmd_select(args: argparse.Namespace) -> int:
    traces = parse_traces(args.traces)
    report: BaseModel
    if args.protocol == "es":
        _require(args, "arch", "run")
        report = select_es(traces, args.arch, args.run, args.select_split)
    elif args.protocol == "rss":
        _require(args, "arch")
        report = select_rss(traces, args.arch, args.select_split, args.at)
    elif args.protocol == "es-rss":
        _require(args, "arch")
        report = select_rss(traces, args.arch, args.select_split, "best")
    elif args.protocol == "hps-syn":
        report = select_hps_synthetic(traces, args.select_split)
    else:
        report = select_hps_standard(traces, scoring=args.scoring, seed=args.seed)
    _emit(report, args)
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    traces = parse_traces(args.traces)
    if args.report == "es-rss":
        report = es_rss_summary(traces, args.select_split)
        if args.per_arch:
            write_report(report, "csv", args.per_arch)
    elif args.report == "protocols":
        report = compare_protocols(traces, seed=args.seed, scoring=args.scoring)
    else:
        report = protocol_breakdown(traces, top_k=args.top_k)
        if args.scatter:
            write_report(report, "csv", args.scatter)
    _emit(report, args)
    return 0


def cmd_simulate_traces(args: argparse.Namespace) -> int:
    base = load_trace_config(args.config) if args.config else TraceGenConfig()
    config = load_trace_config(_merge(base.model_dump(), {
        "num_archs": args.archs,
        "runs_per_arch": args.runs,
        "epochs": args.epochs,
        "rho": args.rho,
        "floor_test": args.floor_test,
        "arch_spread": args.arch_spread,
        "run_spread": args.run_spread,
        "epoch_noise": args.epoch_noise,
        "synth_bias": args.synth_bias,
        "synth_noise": args.synth_noise,
        "subset_penalty": args.subset_penalty,
        "seed": args.seed,
    }))
    traces = generate_traces(config)
    write_traces(traces, args.out, args.out_format)
    logger.info("Wrote %d records to %s", len(traces), args.out)
    return 0


def cmd_simulate_instance(args: argparse.Namespace) -> int:
    config = _instance_config(args)
    write_instance(generate_instance(config, args.seed), args.out)
    logger.info("Wrote instance to %s", args.out)
    return 0


def cmd_export_curves(args: argparse.Namespace) -> int:
    traces = parse_traces(args.traces)
    curves = convergence_curves(traces, args.arch, args.run, args.trained_on)
    write_report(curves, "csv", args.out)
    logger.info("Wrote %d epochs to %s", len(curves), args.out)
    return 0


# ─────────────────────────────────────────────────────────────────────────────
# Parser
# ─────────────────────────────────────────────────────────────────────────────

_Formatter = argparse.ArgumentDefaultsHelpFormatter


def _add_output(parser: argparse.ArgumentParser, out_help: str = "write the machine-readable report here (.json or .csv)") -> None:
    parser.add_argument("--out", default=None, help=out_help)
    parser.add_argument("--format", choices=FORMAT_CHOICES, default="table", help="stdout format")


def _add_instance_knobs(parser: argparse.ArgumentParser, preset: str = "") -> None:
    note = f" ({preset})" if preset else ""
    m = InstanceGenConfig
    parser.add_argument("--config", default=None, help="JSON generator config; flags override its fields")
    parser.add_argument("--domain-size", default=None,
                        help=f"domain size range A..B{note}; unset uses {_default(m, 'domain_size')}")
    parser.add_argument("--classes", default=None,
                        help=f"number-of-classes range A..B{note}; unset uses {_default(m, 'num_classes')}")
    parser.add_argument("--lambda", dest="mixing", type=float, default=None,
                        help=f"mixing weight of the independent pmf{note}; unset uses {_default(m, 'mixing')}")
    parser.add_argument("--accuracy", type=float, default=None,
                        help=f"per-point probability a hypothesis copies f{note}; unset uses {_default(m, 'hypothesis_accuracy')}")
    parser.add_argument("--hypotheses", type=int, default=None,
                        help=f"hypotheses per instance; unset uses {_default(m, 'hypotheses_per_instance')}")


def _add_workers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes; unset uses RANKGUARD_WORKERS or the available CPUs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankguard",
        description="Model selection with synthetic data: bound verification, divergences and selection protocols.",
        formatter_class=_Formatter,
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    # verify
    p = sub.add_parser("verify", help="verify the rank-preservation bound on random instances", formatter_class=_Formatter)
    p.add_argument("--instances", type=int, default=1000, help="number of generated instances")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--trigger-floor", type=float, default=DEFAULT_TRIGGER_FLOOR,
                   help="minimum fraction of triggered pairs for a conclusive run")
    _add_instance_knobs(p)
    _add_workers(p)
    _add_output(p)
    p.set_defaults(handler=cmd_verify)

    # falsify
    p = sub.add_parser("falsify", help="count instances with rank flips the condition does not cover", formatter_class=_Formatter)
    p.add_argument("--instances", type=int, default=10000, help="number of generated instances")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    _add_instance_knobs(p, preset="adversarial preset: lambda 0.9, accuracy 0.6")
    _add_workers(p)
    _add_output(p)
    p.set_defaults(handler=cmd_falsify)

    # tv
    tv = sub.add_parser("tv", help="L1 divergence between real and synthetic distributions", formatter_class=_Formatter)
    tv_sub = tv.add_subparsers(dest="tv_command", required=True, metavar="MODE")
    p = tv_sub.add_parser("exact", help="exact divergences of an instance file", formatter_class=_Formatter)
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"), default=None,
                   help="restrict to the points where hypotheses I and J disagree; unset reports every pair")
    _add_output(p)
    p.set_defaults(handler=cmd_tv_exact)

    p = tv_sub.add_parser("estimate", help="cluster-histogram estimate from feature samples", formatter_class=_Formatter)
    e = EstimatorConfig
    p.add_argument("--samples", required=True, nargs="+", help="one combined or several per-source sample CSV files")
    p.add_argument("--clusters", type=int, default=_default(e, "clusters"), help="k-means clusters")
    p.add_argument("--restarts", type=int, default=_default(e, "restarts"), help="independent clusterings averaged")
    p.add_argument("--max-iter", type=int, default=_default(e, "max_iter"), help="Lloyd iterations per clustering")
    p.add_argument("--tol", type=float, default=_default(e, "tol"), help="k-means convergence tolerance")
    p.add_argument("--seed", type=int, default=_default(e, "seed"), help="estimator seed")
    _add_workers(p)
    _add_output(p)
    p.set_defaults(handler=cmd_tv_estimate)

    # rank
    p = sub.add_parser("rank", help="Spearman correlation between two splits", formatter_class=_Formatter)
    p.add_argument("--traces", required=True, help="trace CSV or JSON file")
    p.add_argument("--split-a", choices=SPLIT_CHOICES, default="synthetic", help="first split")
    p.add_argument("--split-b", choices=SPLIT_CHOICES, default="test", help="second split")
    p.add_argument("--at", choices=AT_CHOICES, default="last",
                   help="compare final epochs, or each run at its best split-a epoch")
    p.add_argument("--trained-on", choices=["full", "subset"], default=None,
                   help="runs to compare; unset uses subset when a split is val, else full")
    p.add_argument("--scatter", default=None, help="write the scatter as CSV (err_synthetic,err_real)")
    _add_output(p)
    p.set_defaults(handler=cmd_rank)

    # select
    p = sub.add_parser("select", help="run one selection protocol", formatter_class=_Formatter)
    p.add_argument("protocol", choices=["es", "rss", "es-rss", "hps-syn", "hps-std"], help="selection protocol")
    p.add_argument("--traces", required=True, help="trace CSV or JSON file")
    p.add_argument("--arch", default=None, help="architecture id (es, rss, es-rss)")
    p.add_argument("--run", type=int, default=None, help="run id (es)")
    p.add_argument("--at", choices=AT_CHOICES, default="last", help="rss: compare runs at final or best epoch")
    p.add_argument("--select-split", choices=SPLIT_CHOICES, default="synthetic", help="split used to select")
    p.add_argument("--scoring", choices=["mean", "random-run"], default="mean", help="hps-std scoring of the chosen architecture")
    p.add_argument("--seed", type=int, default=0, help="seed for hps-std random-run scoring")
    _add_output(p)
    p.set_defaults(handler=cmd_select)

    # summarize
    p = sub.add_parser("summarize", help="aggregate selection reports", formatter_class=_Formatter)
    p.add_argument("report", choices=["es-rss", "protocols", "breakdown"], help="report to build")
    p.add_argument("--traces", required=True, help="trace CSV or JSON file")
    p.add_argument("--select-split", choices=SPLIT_CHOICES, default="synthetic", help="es-rss: split used to select")
    p.add_argument("--seed", type=int, default=0, help="protocols: seed of the random pick")
    p.add_argument("--scoring", choices=["mean", "random-run"], default="mean", help="protocols: standard protocol scoring")
    p.add_argument("--top-k", type=int, default=10, help="breakdown: number of top architectures and models")
    p.add_argument("--per-arch", default=None, help="es-rss: write per-architecture rows as CSV")
    p.add_argument("--scatter", default=None, help="breakdown: write (trained_on, err_select, err_test) CSV")
    _add_output(p)
    p.set_defaults(handler=cmd_summarize)

    # simulate
    sim = sub.add_parser("simulate", help="generate synthetic inputs", formatter_class=_Formatter)
    sim_sub = sim.add_subparsers(dest="sim_command", required=True, metavar="KIND")
    p = sim_sub.add_parser("traces", help="simulate evaluation traces", formatter_class=_Formatter)
    t = TraceGenConfig
    p.add_argument("--config", default=None, help="JSON simulator config; flags override its fields")
    p.add_argument("--archs", type=int, default=None, help=f"architectures; unset uses {_default(t, 'num_archs')}")
    p.add_argument("--runs", type=int, default=None, help=f"runs per architecture; unset uses {_default(t, 'runs_per_arch')}")
    p.add_argument("--epochs", type=int, default=None, help=f"epochs per run; unset uses {_default(t, 'epochs')}")
    p.add_argument("--rho", type=float, default=None, help=f"synthetic-test quality correlation; unset uses {_default(t, 'rho')}")
    for name in ("floor_test", "arch_spread", "run_spread", "epoch_noise", "synth_bias", "synth_noise", "subset_penalty"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None,
                       help=f"unset uses {_default(t, name)}")
    p.add_argument("--seed", type=int, default=None, help=f"simulator seed; unset uses {_default(t, 'seed')}")
    p.add_argument("--out", required=True, help="output trace file")
    p.add_argument("--out-format", choices=["csv", "json"], default=None, help="unset infers from the --out suffix")
    p.set_defaults(handler=cmd_simulate_traces)

    p = sim_sub.add_parser("instance", help="generate one finite instance", formatter_class=_Formatter)
    p.add_argument("--seed", type=int, default=0, help="instance seed")
    _add_instance_knobs(p)
    p.add_argument("--out", required=True, help="output instance JSON file")
    p.set_defaults(handler=cmd_simulate_instance)

    # export
    exp = sub.add_parser("export", help="plot-ready exports", formatter_class=_Formatter)
    exp_sub = exp.add_subparsers(dest="export_command", required=True, metavar="WHAT")
    p = exp_sub.add_parser("curves", help="per-epoch errors of one run", formatter_class=_Formatter)
    p.add_argument("--traces", required=True, help="trace CSV or JSON file")
    p.add_argument("--arch", required=True, help="architecture id")
    p.add_argument("--run", type=int, required=True, help="run id")
    p.add_argument("--trained-on", choices=["full", "subset"], default="full", help="which runs")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(handler=cmd_export_curves)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, dispatch, and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        setup_logger()
        if args.verbose:
            set_level(logging.DEBUG)
        elif args.quiet:
            set_level(logging.WARNING)
        else:
            set_level(default_level())
        return args.handler(args)
    except RankGuardError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
