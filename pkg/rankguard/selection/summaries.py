"""
summaries.py - Aggregate reports over evaluation traces.

- es_rss_summary:      Baseline / ES / RSS / ES+RSS average test errors.
- compare_protocols:   synthetic vs standard protocol vs a random pick.
- protocol_breakdown:  per-architecture detail behind the protocol comparison.
- trace_rank_report:   rank correlation between two splits, with scatter.
- convergence_curves:  per-epoch errors of one run on every split.
"""

from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .protocols import (
    SelectionOutcome,
    StandardSelection,
    best_epoch_per_run,
    normalize_at,
    rss_per_arch,
    select_hps_standard,
    select_hps_synthetic,
)
from .traces import SPLITS, EvalTraceSet
from ..core.rank_analysis import RankReport, rank_report, spearman
from ..utils.errors import DegenerateInputError, EmptyInputError, NotFoundError
from ..utils.logger import get_logger


logger = get_logger("summaries")

CI_Z = 1.96


# ─────────────────────────────────────────────────────────────────────────────
# ES / RSS
# ─────────────────────────────────────────────────────────────────────────────

class ArchSummaryRow(BaseModel):
    arch_id: str
    runs: int
    baseline: float
    es: float
    rss: float
    es_rss: float


class EsRssSummary(BaseModel):
    """Average test errors of four selection strategies."""
    baseline: float
    es: float
    rss: float
    es_rss: float
    archs: int
    runs: int
    select_split: str = "synthetic"
    per_arch: List[ArchSummaryRow] = Field(default_factory=list)


def es_rss_summary(traces: EvalTraceSet, select_split: str = "synthetic") -> EsRssSummary:
    """
    Baseline: mean final-epoch test error over all runs.
    ES:       mean test error at each run's best select_split epoch.
    RSS:      mean over archs of the selected run's final-epoch test error.
    ES+RSS:   mean over archs of the test error at the selected (run, epoch).
    """
    last = traces.final_errors("test", "full")
    es_coords = best_epoch_per_run(traces, select_split)
    es_coords = es_coords.assign(test=traces.lookup(es_coords, "test"))
    rss = rss_per_arch(traces, select_split, "last_epoch")
    rss = rss.assign(test=traces.lookup(rss, "test"))
    es_rss = rss_per_arch(traces, select_split, "best_epoch")
    es_rss = es_rss.assign(test=traces.lookup(es_rss, "test"))

    es_by_arch = {a: g.to_numpy() for a, g in es_coords.groupby("arch_id", sort=True)["test"]}
    rss_by_arch = dict(zip(rss["arch_id"], rss["test"]))
    es_rss_by_arch = dict(zip(es_rss["arch_id"], es_rss["test"]))
    per_arch = []
    for arch_id, base in last.groupby("arch_id", sort=True)["error"]:
        if arch_id not in es_by_arch:
            raise NotFoundError(f"no '{select_split}' records for arch={arch_id}")
        per_arch.append(ArchSummaryRow(
            arch_id=str(arch_id),
            runs=len(base),
            baseline=float(np.mean(base.to_numpy())),
            es=float(np.mean(es_by_arch[arch_id])),
            rss=float(rss_by_arch[arch_id]),
            es_rss=float(es_rss_by_arch[arch_id]),
        ))

    return EsRssSummary(
        baseline=float(np.mean(last["error"].to_numpy())),
        es=float(np.mean(es_coords["test"].to_numpy())),
        rss=float(np.mean(rss["test"].to_numpy())),
        es_rss=float(np.mean(es_rss["test"].to_numpy())),
        archs=len(per_arch),
        runs=len(last),
        select_split=select_split,
        per_arch=per_arch,
    )


# ─────────────────────────────────────────────────────────────────────────────
# HPS protocol comparison
# ─────────────────────────────────────────────────────────────────────────────

class ProtocolComparison(BaseModel):
    """Held-out test error of each selection protocol."""
    synthetic_error: float
    standard_error: float
    random_mean: float
    random_std: float
    random_pick_error: float
    models: int
    synthetic_selection: SelectionOutcome
    standard_selection: StandardSelection
    seed: int


def compare_protocols(
    traces: EvalTraceSet,
    seed: int = 0,
    scoring: Literal["mean", "random-run"] = "mean",
) -> ProtocolComparison:
    """
    Synthetic protocol: test error of the globally best synthetic instance.
    Standard protocol: expected test error of the best-by-validation architecture.
    Random model: mean (and std) of all full-data final-epoch test errors, plus
    the test error of one seeded random pick.
    """
    synthetic = select_hps_synthetic(traces)
    if "test" not in synthetic.report_errors:
        raise NotFoundError(
            f"no test error at synthetic selection {synthetic.arch_id}/{synthetic.run_id}@{synthetic.epoch}"
        )
    standard = select_hps_standard(traces, scoring=scoring, seed=seed)
    finals = traces.final_errors("test", "full")["error"].to_numpy()
    pick = int(np.random.default_rng(seed).integers(finals.size))
    comparison = ProtocolComparison(
        synthetic_error=synthetic.report_errors["test"],
        standard_error=standard.expected_error,
        random_mean=float(np.mean(finals)),
        random_std=float(np.std(finals)),
        random_pick_error=float(finals[pick]),
        models=int(finals.size),
        synthetic_selection=synthetic,
        standard_selection=standard,
        seed=seed,
    )
    logger.info(
        "Protocols: synthetic=%.6f standard=%.6f random=%.6f",
        comparison.synthetic_error, comparison.standard_error, comparison.random_mean,
    )
    return comparison


class TopArchRow(BaseModel):
    arch_id: str
    val_mean: float
    test_mean: float
    test_ci95: float
    runs: int


class ProtocolBreakdown(BaseModel):
    """Detail of how validation and synthetic rankings relate to test errors."""
    spearman_val_test: Optional[float] = None
    spearman_synthetic_test: Optional[float] = None
    top_k: int
    top_archs: List[TopArchRow] = Field(default_factory=list)
    synthetic_top_errors: List[float] = Field(default_factory=list)
    avg_synthetic_top: float
    avg_standard_top: float
    avg_all: float
    scatter: List[tuple] = Field(default_factory=list)


def _safe_spearman(xs, ys) -> Optional[float]:
    try:
        return spearman(xs, ys)
    except (DegenerateInputError, EmptyInputError) as e:
        logger.warning("Spearman undefined: %s", e)
        return None


def protocol_breakdown(traces: EvalTraceSet, top_k: int = 10) -> ProtocolBreakdown:
    """
    Compare ranking by validation (subset-trained runs) and by synthetic data
    (full-data runs) against test errors.

    Top architectures are ranked by mean validation error and reported with the
    mean and 95% confidence half-width of their full-data test errors. The
    synthetic side takes each run's best synthetic epoch and keeps the top_k runs.
    """
    sub_val = traces.final_errors("val", "subset")
    sub_test = traces.final_errors("test", "subset")
    subset = sub_val.merge(sub_test, on=["arch_id", "run_id"], suffixes=("_val", "_test"))
    full_syn = traces.final_errors("synthetic", "full")
    full_test = traces.final_errors("test", "full")
    full = full_syn.merge(full_test, on=["arch_id", "run_id"], suffixes=("_syn", "_test"))

    val_means = sub_val.groupby("arch_id", sort=True)["error"].mean().reset_index()
    ranked = val_means.sort_values(["error", "arch_id"], kind="mergesort").head(top_k)
    top_archs = []
    standard_errors = []
    for arch_id, val_mean in zip(ranked["arch_id"], ranked["error"]):
        errors = full_test.loc[full_test["arch_id"] == arch_id, "error"].to_numpy()
        if errors.size == 0:
            raise NotFoundError(f"no full-data test records for arch={arch_id}")
        half_width = CI_Z * float(np.std(errors, ddof=1)) / np.sqrt(errors.size) if errors.size > 1 else 0.0
        top_archs.append(TopArchRow(
            arch_id=str(arch_id),
            val_mean=float(val_mean),
            test_mean=float(np.mean(errors)),
            test_ci95=half_width,
            runs=int(errors.size),
        ))
        standard_errors.extend(errors.tolist())

    best_runs = best_epoch_per_run(traces, "synthetic")
    best_runs = best_runs.sort_values(["error", "arch_id", "run_id"], kind="mergesort").head(top_k)
    synthetic_top = traces.lookup(best_runs, "test")

    scatter = [("subset", float(v), float(t)) for v, t in zip(subset["error_val"], subset["error_test"])]
    scatter += [("full", float(s), float(t)) for s, t in zip(full["error_syn"], full["error_test"])]
    return ProtocolBreakdown(
        spearman_val_test=_safe_spearman(subset["error_val"], subset["error_test"]) if len(subset) >= 2 else None,
        spearman_synthetic_test=_safe_spearman(full["error_syn"], full["error_test"]) if len(full) >= 2 else None,
        top_k=top_k,
        top_archs=top_archs,
        synthetic_top_errors=[float(e) for e in synthetic_top],
        avg_synthetic_top=float(np.mean(synthetic_top)),
        avg_standard_top=float(np.mean(standard_errors)),
        avg_all=float(np.mean(full_test["error"].to_numpy())),
        scatter=scatter,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Rank correlation and curves
# ─────────────────────────────────────────────────────────────────────────────

def trace_rank_report(
    traces: EvalTraceSet,
    split_a: str = "synthetic",
    split_b: str = "test",
    at: str = "last_epoch",
    trained_on: Optional[str] = None,
) -> RankReport:
    """
    Spearman correlation between split_a and split_b errors over all runs.

    at="last_epoch" compares final epochs; at="best_epoch" takes each run at its
    best split_a epoch. trained_on defaults to "subset" when either split is
    "val" and to "full" otherwise.
    """
    if trained_on is None:
        trained_on = "subset" if "val" in (split_a, split_b) else "full"
    if normalize_at(at) == "last_epoch":
        coords = traces.final_errors(split_a, trained_on)
    else:
        coords = best_epoch_per_run(traces, split_a, trained_on)
    errors_a = coords["error"].to_numpy()
    errors_b = traces.lookup(coords, split_b, trained_on)
    return rank_report(errors_a, errors_b, split_a=split_a, split_b=split_b)


def convergence_curves(traces: EvalTraceSet, arch_id: str, run_id: int, trained_on: str = "full") -> pd.DataFrame:
    """Per-epoch errors of one run, one column per split present."""
    table = traces.wide(trained_on)
    try:
        curves = table.loc[(arch_id, int(run_id))]
    except KeyError:
        raise NotFoundError(f"no {trained_on}-trained records for arch={arch_id} run={run_id}")
    curves = curves.dropna(axis=1, how="all")
    curves = curves[[s for s in SPLITS if s in curves.columns]]
    return curves.reset_index()
