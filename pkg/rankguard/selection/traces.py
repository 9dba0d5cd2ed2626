"""
traces.py - Evaluation traces: per-epoch errors of trained model instances.

A trace set is a long table with one row per
(arch_id, run_id, epoch, split, trained_on) coordinate and its error.
Rows are validated on construction; the set is read-only afterwards.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from ..utils.errors import EmptyInputError, NotFoundError, SchemaError


SPLITS = ("train", "val", "test", "synthetic")
TRAINED_ON = ("full", "subset")
COLUMNS = ["arch_id", "run_id", "epoch", "split", "trained_on", "error"]
KEY = ["arch_id", "run_id", "epoch", "split", "trained_on"]
RUN_KEY = ["arch_id", "run_id"]


@dataclass(frozen=True)
class EvalRecord:
    """Error of one model instance at one epoch on one split."""
    arch_id: str
    run_id: int
    epoch: int
    split: str
    error: float
    trained_on: str = "full"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise SchemaError(f"expected split in {SPLITS}, found {self.split!r}", field="split")
        if self.trained_on not in TRAINED_ON:
            raise SchemaError(f"expected trained_on in {TRAINED_ON}, found {self.trained_on!r}", field="trained_on")
        if int(self.run_id) != self.run_id or self.run_id < 0:
            raise SchemaError(f"expected non-negative integer run_id, found {self.run_id!r}", field="run_id")
        if int(self.epoch) != self.epoch or self.epoch < 0:
            raise SchemaError(f"expected non-negative integer epoch, found {self.epoch!r}", field="epoch")
        if not np.isfinite(self.error) or not 0.0 <= self.error <= 1.0:
            raise SchemaError(f"expected error in [0, 1], found {self.error!r}", field="error")


class EvalTraceSet:
    """
    Validated, immutable collection of evaluation records.

    The frame index carries each row's source location (CSV line number or
    record position) so validation errors can point at it.
    """

    def __init__(
        self,
        frame: pd.DataFrame,
        metadata: Optional[Dict[str, Any]] = None,
        source: Optional[str] = None,
    ):
        self.source = source
        self.metadata = dict(metadata or {})
        self._frame = _validate_frame(frame, source)
        self._wide: Dict[str, pd.DataFrame] = {}

    @classmethod
    def from_records(cls, records: Iterable[EvalRecord], metadata: Optional[Dict[str, Any]] = None) -> "EvalTraceSet":
        rows = [
            (r.arch_id, int(r.run_id), int(r.epoch), r.split, r.trained_on, float(r.error))
            for r in records
        ]
        return cls(pd.DataFrame(rows, columns=COLUMNS), metadata=metadata)

    @property
    def frame(self) -> pd.DataFrame:
        """A copy of the long table, sorted canonically."""
        return self._frame.copy()

    @property
    def records(self) -> List[EvalRecord]:
        return [
            EvalRecord(arch_id=a, run_id=int(r), epoch=int(e), split=s, trained_on=t, error=float(x))
            for a, r, e, s, t, x in self._frame[COLUMNS].itertuples(index=False, name=None)
        ]

    def __len__(self) -> int:
        return len(self._frame)

    # ─────────────────────────────────────────────────────────────────────────
    # Query helpers
    # ─────────────────────────────────────────────────────────────────────────

    def rows(self, split: Optional[str] = None, trained_on: Optional[str] = None) -> pd.DataFrame:
        """Rows filtered by split and/or trained_on (a view, do not mutate)."""
        mask = np.ones(len(self._frame), dtype=bool)
        if split is not None:
            mask &= (self._frame["split"] == split).to_numpy()
        if trained_on is not None:
            mask &= (self._frame["trained_on"] == trained_on).to_numpy()
        return self._frame[mask]

    def arch_ids(self, trained_on: Optional[str] = None) -> List[str]:
        return sorted(self.rows(trained_on=trained_on)["arch_id"].unique().tolist())

    def splits(self) -> List[str]:
        present = set(self._frame["split"].unique())
        return [s for s in SPLITS if s in present]

    def wide(self, trained_on: str = "full") -> pd.DataFrame:
        """Errors indexed by (arch_id, run_id, epoch) with one column per split."""
        if trained_on not in self._wide:
            rows = self.rows(trained_on=trained_on)
            table = rows.pivot(index=["arch_id", "run_id", "epoch"], columns="split", values="error")
            table = table.reindex(columns=[s for s in SPLITS if s in table.columns]).sort_index()
            table.columns.name = None
            self._wide[trained_on] = table
        return self._wide[trained_on]

    def errors_at(self, arch_id: str, run_id: int, epoch: int, trained_on: str = "full") -> Dict[str, float]:
        """Every split's error at one coordinate."""
        table = self.wide(trained_on)
        key = (arch_id, int(run_id), int(epoch))
        if key not in table.index:
            raise NotFoundError(f"no records for arch={arch_id} run={run_id} epoch={epoch} trained_on={trained_on}")
        row = table.loc[key]
        return {split: float(value) for split, value in row.items() if not pd.isna(value)}

    def final_errors(self, split: str, trained_on: str = "full") -> pd.DataFrame:
        """
        Error at the final epoch of every run on a split.

        The final epoch is the largest epoch present for (arch, run, split).
        Returns columns arch_id, run_id, epoch, error sorted by arch then run.
        """
        rows = self.rows(split=split, trained_on=trained_on)
        if rows.empty:
            raise NotFoundError(f"no {trained_on}-trained records on split '{split}'")
        last = rows.sort_values(RUN_KEY + ["epoch"]).groupby(RUN_KEY, sort=True).tail(1)
        return last[["arch_id", "run_id", "epoch", "error"]].reset_index(drop=True)

    def lookup(self, coords: pd.DataFrame, split: str, trained_on: str = "full") -> np.ndarray:
        """Errors on `split` at the (arch_id, run_id, epoch) coordinates of a frame."""
        table = self.wide(trained_on)
        if split not in table.columns:
            raise NotFoundError(f"no {trained_on}-trained records on split '{split}'")
        index = pd.MultiIndex.from_frame(coords[["arch_id", "run_id", "epoch"]])
        values = table[split].reindex(index).to_numpy(dtype=np.float64)
        if np.isnan(values).any():
            missing = coords.iloc[int(np.flatnonzero(np.isnan(values))[0])]
            raise NotFoundError(
                f"no '{split}' error at arch={missing['arch_id']} run={missing['run_id']} epoch={missing['epoch']}"
            )
        return values


# ─────────────────────────────────────────────────────────────────────────────
# Validation
# ─────────────────────────────────────────────────────────────────────────────

def _parse_float(value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return float("nan")


def to_floats(values: pd.Series) -> np.ndarray:
    """Parse a column with Python's correctly rounded `float`; unparseable cells become NaN."""
    return np.fromiter((_parse_float(v) for v in values), dtype=np.float64, count=len(values))


def _location(frame: pd.DataFrame, position: int):
    label = frame.index[position]
    return int(label) if isinstance(label, (int, np.integer)) else str(label)


def _validate_frame(frame: pd.DataFrame, source: Optional[str]) -> pd.DataFrame:
    if frame is None or len(frame) == 0:
        raise EmptyInputError(f"{source or 'trace set'} holds no records")
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"expected columns {COLUMNS}, missing {missing}", file=source, location="header")
    frame = frame[COLUMNS].copy()
    frame["arch_id"] = frame["arch_id"].astype(str)

    for column, allowed in (("split", SPLITS), ("trained_on", TRAINED_ON)):
        bad = np.flatnonzero(~frame[column].isin(allowed).to_numpy())
        if bad.size:
            p = int(bad[0])
            raise SchemaError(
                f"expected one of {allowed}, found {frame[column].iloc[p]!r}",
                file=source, location=_location(frame, p), field=column,
            )

    for column in ("run_id", "epoch"):
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values) | (values < 0) | (values != np.round(values)))
        if bad.size:
            p = int(bad[0])
            raise SchemaError(
                f"expected a non-negative integer, found {frame[column].iloc[p]!r}",
                file=source, location=_location(frame, p), field=column,
            )
        frame[column] = values.astype(np.int64)

    errors = to_floats(frame["error"])
    bad = np.flatnonzero(~np.isfinite(errors) | (errors < 0.0) | (errors > 1.0))
    if bad.size:
        p = int(bad[0])
        raise SchemaError(
            f"expected error in [0, 1], found {frame['error'].iloc[p]!r}",
            file=source, location=_location(frame, p), field="error",
        )
    frame["error"] = errors

    dupes = frame.duplicated(KEY, keep=False).to_numpy()
    if dupes.any():
        first = int(np.flatnonzero(dupes)[0])
        key = tuple(frame.iloc[first][KEY])
        same = np.flatnonzero((frame[KEY] == pd.Series(key, index=KEY)).all(axis=1).to_numpy())
        rows = [_location(frame, int(p)) for p in same[:2]]
        raise SchemaError(
            f"duplicate record {dict(zip(KEY, key))} at rows {rows[0]} and {rows[1]}",
            file=source, location=rows[1], field="arch_id,run_id,epoch,split,trained_on",
        )

    spans = frame.groupby(["arch_id", "run_id", "trained_on", "split"])["epoch"].agg(["min", "max", "count"])
    broken = spans[(spans["min"] != 0) | (spans["max"] + 1 != spans["count"])]
    if not broken.empty:
        (arch, run, trained_on, split), span = next(broken.iterrows())
        raise SchemaError(
            f"expected contiguous epochs 0..{span['max']} for arch={arch} run={run} "
            f"trained_on={trained_on} split={split}, found {span['count']} epochs starting at {span['min']}",
            file=source, field="epoch",
        )

    ordered = frame.assign(
        _trained=frame["trained_on"].map({t: i for i, t in enumerate(TRAINED_ON)}),
        _split=frame["split"].map({s: i for i, s in enumerate(SPLITS)}),
    ).sort_values(["arch_id", "_trained", "run_id", "_split", "epoch"], kind="mergesort")
    return ordered.drop(columns=["_trained", "_split"])
