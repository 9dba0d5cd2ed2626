"""
formats.py - File formats: parsing, validation and serialization.

Formats:
1. Trace CSV/JSON: records arch_id, run_id, epoch, split, trained_on, error.
2. Instance JSON: n, c, mu_r, mu_s, f, hypotheses.
3. Feature-sample CSV: source, dim0, dim1, ...
4. Reports: JSON (machine), aligned text tables (human), CSV exports.

Every rejection is a SchemaError carrying the file and the row number (CSV
line, header = line 1) or JSON path of the offending value.
"""

import io
import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ..core.divergence import FeatureSampleSet
from ..core.domain import FiniteDomain, FiniteInstance, LabelMap, Pmf
from ..core.rank_analysis import PairwiseDivergenceReport, RankReport
from ..selection.protocols import SelectionOutcome
from ..selection.summaries import EsRssSummary, ProtocolBreakdown, ProtocolComparison
from ..selection.traces import COLUMNS, EvalTraceSet, to_floats
from ..utils.errors import EmptyInputError, SchemaError
from ..utils.logger import get_logger
from ..utils.settings import get_settings


logger = get_logger("formats")

Source = Union[str, Path, TextIO]
FLOAT_FORMAT = "%.17g"
FIRST_DATA_LINE = 2


def _name(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return str(source)
    return getattr(source, "name", "<stream>")


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise SchemaError("file not found", file=str(path))
        return path.read_text(encoding="utf-8")
    return source.read()


def _infer_format(source: Source, fmt: Optional[str]) -> str:
    if fmt:
        return fmt.lower()
    if isinstance(source, (str, Path)) and Path(source).suffix.lower() == ".json":
        return "json"
    return "csv"


def write_text(text: str, out: Union[str, Path, TextIO]) -> None:
    """Write text to a path (UTF-8, '\\n' line ends) or an open stream."""
    if isinstance(out, (str, Path)):
        path = Path(out)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        logger.debug("Wrote %s", path)
    else:
        out.write(text)


# ─────────────────────────────────────────────────────────────────────────────
# Traces
# ─────────────────────────────────────────────────────────────────────────────

def _read_csv_frame(text: str, name: str) -> pd.DataFrame:
    if not text.strip():
        raise EmptyInputError(f"{name} is empty")
    try:
        frame = pd.read_csv(
            io.StringIO(text),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.ParserError as e:
        raise SchemaError(f"malformed CSV: {e}", file=name)
    frame.columns = [str(c).strip() for c in frame.columns]
    frame.index = pd.RangeIndex(FIRST_DATA_LINE, FIRST_DATA_LINE + len(frame))
    return frame


def parse_traces(source: Source, fmt: Optional[str] = None) -> EvalTraceSet:
    """
    Read a trace file (CSV with header or JSON array of record objects).

    Raises:
        EmptyInputError: no records.
        SchemaError: bad header, unknown enum, out-of-range error, duplicate
            key or gappy epochs, with the row it was found on.
    """
    name = _name(source)
    fmt = _infer_format(source, fmt)
    text = _read_text(source)
    if fmt == "csv":
        frame = _read_csv_frame(text, name)
    elif fmt == "json":
        frame = _trace_frame_from_json(text, name)
    else:
        raise SchemaError(f"expected format csv or json, found {fmt!r}", file=name)
    traces = EvalTraceSet(frame, source=name)
    logger.info("Loaded %d trace records from %s", len(traces), name)
    return traces


def _trace_frame_from_json(text: str, name: str) -> pd.DataFrame:
    if not text.strip():
        raise EmptyInputError(f"{name} is empty")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", file=name, location=f"line {e.lineno}")
    if isinstance(data, dict) and "records" in data:
        data = data["records"]
    if not isinstance(data, list):
        raise SchemaError("expected an array of record objects", file=name, location="$")
    if not data:
        raise EmptyInputError(f"{name} holds no records")
    for k, item in enumerate(data):
        if not isinstance(item, dict):
            raise SchemaError("expected a record object", file=name, location=f"$[{k}]")
        missing = [c for c in COLUMNS if c not in item]
        if missing:
            raise SchemaError(f"expected fields {COLUMNS}, missing {missing}", file=name, location=f"$[{k}]")
    frame = pd.DataFrame([{c: item[c] for c in COLUMNS} for item in data], columns=COLUMNS)
    frame.index = pd.Index([f"$[{k}]" for k in range(len(data))])
    return frame


def traces_to_csv(traces: EvalTraceSet) -> str:
    return traces.frame[COLUMNS].to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def traces_to_json(traces: EvalTraceSet) -> str:
    records = [
        {"arch_id": a, "run_id": int(r), "epoch": int(e), "split": s, "trained_on": t, "error": float(x)}
        for a, r, e, s, t, x in traces.frame[COLUMNS].itertuples(index=False, name=None)
    ]
    return json.dumps(records, indent=1) + "\n"


def write_traces(traces: EvalTraceSet, out: Union[str, Path, TextIO], fmt: Optional[str] = None) -> None:
    """Write traces in canonical row order; CSV floats carry 17 significant digits."""
    fmt = _infer_format(out, fmt)
    text = traces_to_json(traces) if fmt == "json" else traces_to_csv(traces)
    write_text(text, out)


# ─────────────────────────────────────────────────────────────────────────────
# Instances
# ─────────────────────────────────────────────────────────────────────────────

INSTANCE_FIELDS = ["n", "c", "mu_r", "mu_s", "f", "hypotheses"]


def instance_to_dict(instance: FiniteInstance) -> Dict[str, Any]:
    """Plain-JSON form; floats survive json's shortest round-trip repr bit-exactly."""
    return {
        "n": int(instance.domain.n),
        "c": int(instance.domain.c),
        "mu_r": [float(m) for m in instance.mu_r.masses],
        "mu_s": [float(m) for m in instance.mu_s.masses],
        "f": [int(v) for v in instance.f.labels],
        "hypotheses": [[int(v) for v in h.labels] for h in instance.hypotheses],
    }


def _integer(value: Any, name: str, file: Optional[str]) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected an integer, found {value!r}", file=file, location=name, field=name)
    if isinstance(value, float) and (not np.isfinite(value) or value != int(value)):
        raise SchemaError(f"expected an integer, found {value!r}", file=file, location=name, field=name)
    return int(value)


def _number_array(value: Any, name: str, file: Optional[str], integral: bool) -> np.ndarray:
    if not isinstance(value, list):
        raise SchemaError(f"expected an array, found {type(value).__name__}", file=file, location=name, field=name)
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise SchemaError(f"expected a number, found {item!r}", file=file, location=f"{name}[{i}]", field=name)
        if integral and (not np.isfinite(item) or item != int(item)):
            raise SchemaError(f"expected an integer, found {item!r}", file=file, location=f"{name}[{i}]", field=name)
    return np.asarray(value, dtype=np.int64 if integral else np.float64)


def _rewrap(error: SchemaError, name: str, file: Optional[str]) -> SchemaError:
    return SchemaError(error.message, file=file, location=error.location or name, field=name)


def instance_from_dict(data: Any, file: Optional[str] = None) -> FiniteInstance:
    if not isinstance(data, dict):
        raise SchemaError("expected a JSON object", file=file, location="$")
    missing = [k for k in INSTANCE_FIELDS if k not in data]
    if missing:
        raise SchemaError(f"expected fields {INSTANCE_FIELDS}, missing {missing}", file=file, location="$", field=missing[0])

    n = _integer(data["n"], "n", file)
    c = _integer(data["c"], "c", file)
    try:
        domain = FiniteDomain(n=n, c=c)
    except SchemaError as e:
        raise _rewrap(e, e.field or "n", file)

    pmfs = {}
    for name in ("mu_r", "mu_s"):
        masses = _number_array(data[name], name, file, integral=False)
        try:
            pmfs[name] = Pmf(masses)
        except SchemaError as e:
            raise _rewrap(e, name, file)

    f = _label_map(data["f"], "f", file)
    if not isinstance(data["hypotheses"], list):
        raise SchemaError("expected an array of label arrays", file=file, location="hypotheses", field="hypotheses")
    hyps = []
    for k, raw in enumerate(data["hypotheses"]):
        hyps.append(_label_map(raw, f"hypotheses[{k}]", file))

    try:
        return FiniteInstance(domain=domain, mu_r=pmfs["mu_r"], mu_s=pmfs["mu_s"], f=f, hypotheses=tuple(hyps))
    except SchemaError as e:
        raise _rewrap(e, e.field or "$", file)


def _label_map(raw: Any, name: str, file: Optional[str]) -> LabelMap:
    labels = _number_array(raw, name, file, integral=True)
    negative = np.flatnonzero(labels < 0)
    if negative.size:
        i = int(negative[0])
        raise SchemaError(f"expected class label >= 0, found {labels[i]}", file=file, location=f"{name}[{i}]", field=name)
    return LabelMap(labels)


def parse_instance(source: Source) -> FiniteInstance:
    """Read an instance JSON document, enforcing pmf sums and label ranges."""
    name = _name(source)
    text = _read_text(source)
    if not text.strip():
        raise EmptyInputError(f"{name} is empty")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", file=name, location=f"line {e.lineno}")
    return instance_from_dict(data, file=name)


def write_instance(instance: FiniteInstance, out: Union[str, Path, TextIO]) -> None:
    write_text(json.dumps(instance_to_dict(instance), indent=1) + "\n", out)


# ─────────────────────────────────────────────────────────────────────────────
# Feature samples
# ─────────────────────────────────────────────────────────────────────────────

def _sample_rows(source: Source) -> Tuple[np.ndarray, np.ndarray]:
    name = _name(source)
    frame = _read_csv_frame(_read_text(source), name)
    columns = list(frame.columns)
    expected = ["source"] + [f"dim{i}" for i in range(len(columns) - 1)]
    if len(columns) < 2 or columns != expected:
        raise SchemaError(f"expected header {','.join(expected) if len(columns) > 1 else 'source,dim0,...'}, found {','.join(columns)}",
                          file=name, location=1)
    if frame.empty:
        raise EmptyInputError(f"{name} holds no samples")
    sources = frame["source"].str.strip()
    bad = np.flatnonzero(~sources.isin(["real", "synthetic"]).to_numpy())
    if bad.size:
        p = int(bad[0])
        raise SchemaError(f"expected 'real' or 'synthetic', found {sources.iloc[p]!r}",
                          file=name, location=int(frame.index[p]), field="source")
    coords = np.column_stack([to_floats(frame[c]) for c in columns[1:]])
    broken = ~np.isfinite(coords)
    if broken.any():
        p, d = (int(v) for v in np.argwhere(broken)[0])
        raise SchemaError(f"expected a finite number, found {frame.iloc[p, d + 1]!r}",
                          file=name, location=int(frame.index[p]), field=columns[d + 1])
    return sources.to_numpy(), coords


def parse_samples(*sources: Source) -> Tuple[FeatureSampleSet, FeatureSampleSet]:
    """
    Read feature samples from one combined file or from several per-source
    files (all sharing the `source,dim0,...` header).

    Returns:
        (real samples, synthetic samples)
    """
    if not sources:
        raise EmptyInputError("no sample files given")
    labels, blocks = [], []
    dims = set()
    for source in sources:
        tags, coords = _sample_rows(source)
        dims.add(coords.shape[1])
        labels.append(tags)
        blocks.append(coords)
    if len(dims) != 1:
        raise SchemaError(f"expected one feature dimension across files, found {sorted(dims)}")
    tags = np.concatenate(labels)
    coords = np.concatenate(blocks)
    real = coords[tags == "real"]
    synth = coords[tags == "synthetic"]
    return FeatureSampleSet(real, "real"), FeatureSampleSet(synth, "synthetic")


# ─────────────────────────────────────────────────────────────────────────────
# Reports
# ─────────────────────────────────────────────────────────────────────────────

def _cell(value: Any, digits: int) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{digits}g}"
    return str(value)


def _frame_text(frame: pd.DataFrame, digits: int) -> str:
    return frame.map(lambda v: _cell(v, digits)).to_string(index=False)


def _kv_table(pairs: Sequence[Tuple[str, Any]], digits: int) -> str:
    frame = pd.DataFrame([(k, _cell(v, digits)) for k, v in pairs], columns=["field", "value"])
    return frame.to_string(index=False, justify="left")


def _scalar_items(report: Union[BaseModel, Dict[str, Any]]) -> List[Tuple[str, Any]]:
    data = report.model_dump() if isinstance(report, BaseModel) else report
    return [(k, v) for k, v in data.items() if not isinstance(v, (list, dict, tuple))]


def _table_es_rss(report: EsRssSummary, digits: int) -> str:
    head = pd.DataFrame([[report.baseline, report.es, report.rss, report.es_rss]],
                        columns=["Baseline", "ES", "RSS", "ES+RSS"])
    lines = [
        "Average test error",
        _frame_text(head, digits),
        "",
        f"archs={report.archs} runs={report.runs} select_split={report.select_split}",
    ]
    return "\n".join(lines)


def _table_protocols(report: ProtocolComparison, digits: int) -> str:
    head = pd.DataFrame([[report.synthetic_error, report.standard_error,
                          f"{_cell(report.random_mean, digits)} ± {_cell(report.random_std, digits)}"]],
                        columns=["synthetic", "standard", "average-of-all"])
    syn = report.synthetic_selection
    std = report.standard_selection
    lines = [
        "Average error on held out test set",
        _frame_text(head, digits),
        "",
        f"synthetic pick: {syn.arch_id} run={syn.run_id} epoch={syn.epoch}",
        f"standard pick:  {std.arch_id} (val={_cell(std.val_error, digits)}, scoring={std.scoring})",
        f"random pick:    {_cell(report.random_pick_error, digits)} (seed={report.seed}, models={report.models})",
    ]
    return "\n".join(lines)


def _table_breakdown(report: ProtocolBreakdown, digits: int) -> str:
    top = pd.DataFrame(
        [[r.arch_id, r.val_mean, r.test_mean, r.test_ci95, r.runs] for r in report.top_archs],
        columns=["arch_id", "val_mean", "test_mean", "ci95", "runs"],
    )
    lines = [
        _kv_table([
            ("spearman(val, test)", report.spearman_val_test),
            ("spearman(synthetic, test)", report.spearman_synthetic_test),
            (f"avg top-{report.top_k} synthetic", report.avg_synthetic_top),
            (f"avg top-{report.top_k} standard", report.avg_standard_top),
            ("avg all models", report.avg_all),
        ], digits),
        "",
        f"Top {report.top_k} architectures by validation error",
        _frame_text(top, digits) if not top.empty else "(none)",
    ]
    return "\n".join(lines)


def _table_selection(report: SelectionOutcome, digits: int) -> str:
    pairs = _scalar_items(report)
    pairs += [(f"error[{split}]", value) for split, value in report.report_errors.items()]
    return _kv_table(pairs, digits)


def _table_pairwise(report: PairwiseDivergenceReport, digits: int) -> str:
    size = len(report.restricted_l1)
    matrix = pd.DataFrame(report.restricted_l1, columns=[f"h{j}" for j in range(size)])
    matrix.insert(0, "i", [f"h{i}" for i in range(size)])
    risks = pd.DataFrame({"h": [f"h{i}" for i in range(size)], "risk_s": report.errs_s, "risk_r": report.errs_r})
    lines = [
        _kv_table([("full_l1", report.full_l1), ("total_variation", report.total_variation)], digits),
        "",
        "Restricted L1 per ordered pair (row i, column j)",
        _frame_text(matrix, digits),
        "",
        _frame_text(risks, digits),
    ]
    return "\n".join(lines)


def _table_default(report: BaseModel, digits: int) -> str:
    return _kv_table(_scalar_items(report), digits)


TABLE_RENDERERS: Dict[type, Callable[[Any, int], str]] = {
    EsRssSummary: _table_es_rss,
    ProtocolComparison: _table_protocols,
    ProtocolBreakdown: _table_breakdown,
    SelectionOutcome: _table_selection,
    PairwiseDivergenceReport: _table_pairwise,
}


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def report_frame(report: Any) -> pd.DataFrame:
    """The tabular core of a report, as exported to CSV."""
    if isinstance(report, pd.DataFrame):
        return report
    if isinstance(report, RankReport):
        return pd.DataFrame(report.scatter, columns=["err_synthetic", "err_real"])
    if isinstance(report, ProtocolBreakdown):
        return pd.DataFrame(report.scatter, columns=["trained_on", "err_select", "err_test"])
    if isinstance(report, EsRssSummary):
        return pd.DataFrame(
            [[r.arch_id, r.runs, r.baseline, r.es, r.rss, r.es_rss] for r in report.per_arch],
            columns=["arch_id", "runs", "baseline", "es", "rss", "es_rss"],
        )
    if isinstance(report, (BaseModel, dict)):
        return pd.DataFrame(_scalar_items(report), columns=["field", "value"])
    raise SchemaError(f"cannot export {type(report).__name__} as CSV")


def render_report(report: Any, fmt: str = "json", digits: Optional[int] = None) -> str:
    """
    Serialize a report deterministically.

    json:  model_dump field order, floats as shortest round-trip repr.
    table: aligned text, floats with `digits` significant digits
           (RANKGUARD_REPORT_DIGITS, default 6).
    csv:   the report's tabular core, floats with 17 significant digits.
    """
    fmt = fmt.lower()
    if fmt == "json":
        if isinstance(report, pd.DataFrame):
            payload = report.to_dict(orient="records")
        elif isinstance(report, BaseModel):
            payload = report.model_dump(mode="json")
        else:
            payload = report
        return json.dumps(payload, indent=2, allow_nan=False) + "\n"
    if fmt == "table":
        digits = digits or get_settings().report_digits
        if isinstance(report, pd.DataFrame):
            return _frame_text(report, digits) + "\n"
        renderer = TABLE_RENDERERS.get(type(report), _table_default)
        return renderer(report, digits) + "\n"
    if fmt == "csv":
        return _csv(report_frame(report))
    raise SchemaError(f"expected report format json, table or csv, found {fmt!r}")


def write_report(report: Any, fmt: str = "json", out: Union[None, str, Path, TextIO] = None) -> str:
    """Render a report and, when `out` is given, write it there. Returns the text."""
    text = render_report(report, fmt)
    if out is not None:
        write_text(text, out)
    return text

