"""
protocols.py - Model selection over evaluation traces.

Scenarios:
1. ES  (early stopping): pick the epoch of one training run.
2. RSS (random seed selection): pick one run among identically configured runs.
3. HPS (hyper-parameter search): pick among architectures, either by the
   synthetic protocol (best (arch, run, epoch) instance on synthetic data) or by
   the standard protocol (best architecture by validation average of
   subset-trained runs).

Ties are broken by lexicographic arch_id, then smaller run_id, then smaller epoch.
"""

from typing import Dict, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .traces import RUN_KEY, EvalTraceSet
from ..utils.errors import InvalidConfigError, NotFoundError
from ..utils.logger import get_logger


logger = get_logger("selection")

At = Literal["last_epoch", "best_epoch"]
TIE_ORDER = ["error", "arch_id", "run_id", "epoch"]


class SelectionOutcome(BaseModel):
    """The selected model coordinate and its error on every split."""
    arch_id: str
    run_id: int
    epoch: int
    trained_on: str = "full"
    select_split: str
    selected_error: float
    report_errors: Dict[str, float] = Field(default_factory=dict)


class StandardSelection(BaseModel):
    """Architecture chosen by the standard protocol and its expected test error."""
    arch_id: str
    val_error: float
    expected_error: float
    scoring: Literal["mean", "random-run"] = "mean"
    runs_scored: int
    run_id: Optional[int] = None


def _pick(frame: pd.DataFrame) -> pd.Series:
    return frame.sort_values(TIE_ORDER, kind="mergesort").iloc[0]


def _outcome(traces: EvalTraceSet, row: pd.Series, select_split: str, trained_on: str) -> SelectionOutcome:
    return SelectionOutcome(
        arch_id=str(row["arch_id"]),
        run_id=int(row["run_id"]),
        epoch=int(row["epoch"]),
        trained_on=trained_on,
        select_split=select_split,
        selected_error=float(row["error"]),
        report_errors=traces.errors_at(row["arch_id"], row["run_id"], row["epoch"], trained_on),
    )


def _split_rows(traces: EvalTraceSet, split: str, trained_on: str) -> pd.DataFrame:
    rows = traces.rows(split=split, trained_on=trained_on)
    if rows.empty:
        raise NotFoundError(f"no {trained_on}-trained records on split '{split}'")
    return rows


def normalize_at(at: str) -> str:
    """Accept the CLI spellings 'last'/'best' as well as 'last_epoch'/'best_epoch'."""
    value = {"last": "last_epoch", "best": "best_epoch"}.get(at, at)
    if value not in ("last_epoch", "best_epoch"):
        raise InvalidConfigError(f"expected at in ('last', 'best'), found {at!r}")
    return value


# ─────────────────────────────────────────────────────────────────────────────
# ES / RSS
# ─────────────────────────────────────────────────────────────────────────────

def select_es(
    traces: EvalTraceSet,
    arch_id: str,
    run_id: int,
    select_split: str = "synthetic",
    trained_on: str = "full",
) -> SelectionOutcome:
    """Epoch of one run with the lowest error on select_split (ties: smallest epoch)."""
    rows = _split_rows(traces, select_split, trained_on)
    rows = rows[(rows["arch_id"] == arch_id) & (rows["run_id"] == int(run_id))]
    if rows.empty:
        raise NotFoundError(f"no '{select_split}' records for arch={arch_id} run={run_id}")
    return _outcome(traces, _pick(rows), select_split, trained_on)


def select_rss(
    traces: EvalTraceSet,
    arch_id: str,
    select_split: str = "synthetic",
    at: str = "last_epoch",
    trained_on: str = "full",
) -> SelectionOutcome:
    """
    Run of one architecture with the lowest select_split error.

    at="last_epoch" compares runs at their final epochs; at="best_epoch"
    searches every (run, epoch), i.e. RSS combined with ES.
    """
    at = normalize_at(at)
    if at == "last_epoch":
        rows = traces.final_errors(select_split, trained_on)
    else:
        rows = _split_rows(traces, select_split, trained_on)
    rows = rows[rows["arch_id"] == arch_id]
    if rows.empty:
        raise NotFoundError(f"no '{select_split}' records for arch={arch_id}")
    return _outcome(traces, _pick(rows), select_split, trained_on)


def best_epoch_per_run(traces: EvalTraceSet, select_split: str = "synthetic", trained_on: str = "full") -> pd.DataFrame:
    """ES applied to every run at once: one (arch_id, run_id, epoch, error) row per run."""
    rows = _split_rows(traces, select_split, trained_on)
    ordered = rows.sort_values(RUN_KEY + ["error", "epoch"], kind="mergesort")
    return ordered.groupby(RUN_KEY, sort=True).head(1)[["arch_id", "run_id", "epoch", "error"]].reset_index(drop=True)


def rss_per_arch(
    traces: EvalTraceSet,
    select_split: str = "synthetic",
    at: str = "last_epoch",
    trained_on: str = "full",
) -> pd.DataFrame:
    """RSS applied to every architecture at once: one selected row per arch."""
    if normalize_at(at) == "last_epoch":
        rows = traces.final_errors(select_split, trained_on)
    else:
        rows = _split_rows(traces, select_split, trained_on)
    ordered = rows.sort_values(TIE_ORDER, kind="mergesort")
    picked = ordered.groupby("arch_id", sort=True).head(1)
    return picked[["arch_id", "run_id", "epoch", "error"]].sort_values("arch_id").reset_index(drop=True)


# ─────────────────────────────────────────────────────────────────────────────
# HPS protocols
# ─────────────────────────────────────────────────────────────────────────────

def select_hps_synthetic(traces: EvalTraceSet, select_split: str = "synthetic") -> SelectionOutcome:
    """Global best (arch, run, epoch) on synthetic data among full-data runs."""
    rows = _split_rows(traces, select_split, "full")
    outcome = _outcome(traces, _pick(rows), select_split, "full")
    logger.debug("Synthetic protocol picked %s/%d@%d", outcome.arch_id, outcome.run_id, outcome.epoch)
    return outcome


def select_hps_standard(
    traces: EvalTraceSet,
    scoring: Literal["mean", "random-run"] = "mean",
    seed: int = 0,
) -> StandardSelection:
    """
    Standard protocol.

    Step 1/2: the architecture with the lowest mean final-epoch validation
    error over its subset-trained runs. Step 3 cannot pick a particular weight
    instance, so the architecture is scored by the mean final-epoch test error
    of its full-data runs (or, with scoring="random-run", by one seeded
    random full-data run).
    """
    val = traces.final_errors("val", "subset")
    means = val.groupby("arch_id", sort=True)["error"].mean().reset_index()
    best = means.sort_values(["error", "arch_id"], kind="mergesort").iloc[0]
    arch_id = str(best["arch_id"])

    test = traces.final_errors("test", "full")
    runs = test[test["arch_id"] == arch_id].sort_values("run_id")
    if runs.empty:
        raise NotFoundError(f"no full-data test records for arch={arch_id}")
    if scoring == "mean":
        return StandardSelection(
            arch_id=arch_id,
            val_error=float(best["error"]),
            expected_error=float(np.mean(runs["error"].to_numpy())),
            scoring=scoring,
            runs_scored=len(runs),
        )
    if scoring == "random-run":
        pick = runs.iloc[int(np.random.default_rng(seed).integers(len(runs)))]
        return StandardSelection(
            arch_id=arch_id,
            val_error=float(best["error"]),
            expected_error=float(pick["error"]),
            scoring=scoring,
            runs_scored=1,
            run_id=int(pick["run_id"]),
        )
    raise InvalidConfigError(f"expected scoring in ('mean', 'random-run'), found {scoring!r}")
