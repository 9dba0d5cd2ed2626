"""
Unit tests for selection/ (traces, protocols, summaries)
"""

import numpy as np
import pytest

from rankguard.pipeline.trace_sim import TraceGenConfig, generate_traces
from rankguard.selection.protocols import (
    best_epoch_per_run,
    rss_per_arch,
    select_es,
    select_hps_standard,
    select_hps_synthetic,
    select_rss,
)
from rankguard.selection.summaries import (
    compare_protocols,
    convergence_curves,
    es_rss_summary,
    protocol_breakdown,
    trace_rank_report,
)
from rankguard.selection.traces import EvalRecord, EvalTraceSet
from rankguard.utils.errors import InvalidConfigError, NotFoundError, SchemaError
from tests.conftest import acceptance_scale


pytestmark = pytest.mark.unit


def _oracle(seed):
    return generate_traces(TraceGenConfig(
        num_archs=4, runs_per_arch=3, epochs=10, rho=1.0,
        epoch_noise=0.0, synth_noise=0.0, seed=seed,
    ))


class TestEvalTraceSet:
    """Tests for trace validation and queries."""

    def test_rejects_unknown_split(self):
        with pytest.raises(SchemaError):
            EvalRecord("a0", 0, 0, "holdout", 0.1)

    def test_rejects_error_outside_unit_interval(self):
        with pytest.raises(SchemaError):
            EvalRecord("a0", 0, 0, "test", 1.2)

    def test_rejects_gaps_in_epochs(self):
        records = [EvalRecord("a0", 0, 0, "test", 0.3), EvalRecord("a0", 0, 2, "test", 0.2)]
        with pytest.raises(SchemaError) as info:
            EvalTraceSet.from_records(records)
        assert info.value.field == "epoch"

    def test_final_errors(self, hand_traces):
        finals = hand_traces.final_errors("test")
        assert finals["error"].tolist() == [0.35, 0.2, 0.22, 0.3]
        assert set(finals["epoch"]) == {2}

    def test_errors_at(self, hand_traces):
        assert hand_traces.errors_at("a1", 0, 1) == {"test": 0.2, "synthetic": 0.25}

    def test_errors_at_missing(self, hand_traces):
        with pytest.raises(NotFoundError):
            hand_traces.errors_at("a1", 0, 7)

    def test_records_round_trip(self, hand_traces):
        assert len(EvalTraceSet.from_records(hand_traces.records)) == len(hand_traces)


class TestSelectEs:
    """Tests for early stopping."""

    def test_best_synthetic_epoch(self, hand_traces):
        outcome = select_es(hand_traces, "a0", 0)
        assert outcome.epoch == 1
        assert outcome.report_errors["test"] == 0.3

    def test_on_test_split(self, hand_traces):
        assert select_es(hand_traces, "a0", 0, select_split="test").epoch == 1

    def test_missing_arch(self, hand_traces):
        with pytest.raises(NotFoundError):
            select_es(hand_traces, "a9", 0)

    def test_missing_split(self, hand_traces):
        with pytest.raises(NotFoundError):
            select_es(hand_traces, "a0", 0, select_split="train")

    def test_ties_take_the_smallest_epoch(self):
        records = [EvalRecord("a0", 0, e, "synthetic", x) for e, x in enumerate([0.4, 0.2, 0.2])]
        assert select_es(EvalTraceSet.from_records(records), "a0", 0).epoch == 1

    def test_best_epoch_per_run(self, hand_traces):
        picked = best_epoch_per_run(hand_traces)
        assert picked["epoch"].tolist() == [1, 2, 1, 2]


class TestSelectRss:
    """Tests for random seed selection."""

    def test_last_epoch(self, hand_traces):
        a0 = select_rss(hand_traces, "a0", at="last")
        a1 = select_rss(hand_traces, "a1", at="last_epoch")
        assert (a0.run_id, a0.epoch, a0.report_errors["test"]) == (1, 2, 0.2)
        assert (a1.run_id, a1.report_errors["test"]) == (0, 0.22)

    def test_combined_with_early_stopping(self, hand_traces):
        a1 = select_rss(hand_traces, "a1", at="best")
        a0 = select_rss(hand_traces, "a0", at="best_epoch")
        assert (a1.run_id, a1.epoch, a1.report_errors["test"]) == (0, 1, 0.2)
        assert (a0.run_id, a0.epoch) == (1, 2)

    def test_unknown_at(self, hand_traces):
        with pytest.raises(InvalidConfigError):
            select_rss(hand_traces, "a0", at="middle")

    def test_missing_arch(self, hand_traces):
        with pytest.raises(NotFoundError):
            select_rss(hand_traces, "a9")

    def test_ties_take_the_smaller_run(self):
        records = [EvalRecord("a0", r, 0, "synthetic", 0.3) for r in (2, 0, 1)]
        assert select_rss(EvalTraceSet.from_records(records), "a0").run_id == 0

    def test_per_arch_table(self, hand_traces):
        table = rss_per_arch(hand_traces)
        assert table["arch_id"].tolist() == ["a0", "a1"]
        assert table["run_id"].tolist() == [1, 0]

    @pytest.mark.parametrize("seed", range(20))
    def test_oracle_picks_the_test_argmin(self, seed):
        """When synthetic errors are test errors plus a constant, RSS finds the best test run."""
        traces = _oracle(seed)
        for arch_id in traces.arch_ids("full"):
            on_synthetic = select_rss(traces, arch_id, select_split="synthetic")
            on_test = select_rss(traces, arch_id, select_split="test")
            assert on_synthetic.run_id == on_test.run_id


class TestHps:
    """Tests for the synthetic and standard protocols."""

    def test_synthetic_protocol(self, hand_traces):
        outcome = select_hps_synthetic(hand_traces)
        assert (outcome.arch_id, outcome.run_id, outcome.epoch) == ("a1", 0, 1)
        assert outcome.report_errors == {"test": 0.2, "synthetic": 0.25}

    def test_synthetic_ties_take_the_first_arch(self):
        records = [EvalRecord(a, 0, 0, "synthetic", 0.3) for a in ("b", "a")]
        assert select_hps_synthetic(EvalTraceSet.from_records(records)).arch_id == "a"

    def test_standard_protocol(self, hand_traces):
        selection = select_hps_standard(hand_traces)
        assert selection.arch_id == "a0"
        assert selection.val_error == pytest.approx(0.31)
        assert selection.expected_error == pytest.approx(0.275)
        assert selection.runs_scored == 2

    def test_standard_random_run(self, hand_traces):
        selection = select_hps_standard(hand_traces, scoring="random-run", seed=1)
        assert selection.runs_scored == 1
        assert selection.expected_error in (0.35, 0.2)

    def test_standard_unknown_scoring(self, hand_traces):
        with pytest.raises(InvalidConfigError):
            select_hps_standard(hand_traces, scoring="median")

    def test_standard_needs_subset_runs(self):
        records = [EvalRecord("a0", 0, 0, "test", 0.3)]
        with pytest.raises(NotFoundError):
            select_hps_standard(EvalTraceSet.from_records(records))


class TestSummaries:
    """Tests for the aggregate reports."""

    def test_es_rss_summary(self, hand_traces):
        summary = es_rss_summary(hand_traces)
        assert summary.baseline == pytest.approx(0.2675)
        assert summary.es == pytest.approx(0.25)
        assert summary.rss == pytest.approx(0.21)
        assert summary.es_rss == pytest.approx(0.2)
        assert (summary.archs, summary.runs) == (2, 4)
        assert [row.arch_id for row in summary.per_arch] == ["a0", "a1"]
        assert summary.per_arch[0].baseline == pytest.approx(0.275)

    def test_compare_protocols(self, hand_traces):
        comparison = compare_protocols(hand_traces)
        assert comparison.synthetic_error == pytest.approx(0.2)
        assert comparison.standard_error == pytest.approx(0.275)
        assert comparison.random_mean == pytest.approx(0.2675)
        assert comparison.models == 4
        assert comparison.random_pick_error in (0.35, 0.2, 0.22, 0.3)

    def test_breakdown(self, hand_traces):
        breakdown = protocol_breakdown(hand_traces, top_k=1)
        assert [row.arch_id for row in breakdown.top_archs] == ["a0"]
        assert breakdown.top_archs[0].test_mean == pytest.approx(0.275)
        assert breakdown.avg_synthetic_top == pytest.approx(0.2)
        assert breakdown.avg_standard_top == pytest.approx(0.275)
        assert breakdown.avg_all == pytest.approx(0.2675)
        assert breakdown.spearman_val_test == pytest.approx(1.0)
        assert len(breakdown.scatter) == 8

    def test_rank_report_last_epoch(self, hand_traces):
        report = trace_rank_report(hand_traces)
        assert report.spearman == pytest.approx(np.sqrt(0.9), abs=1e-12)
        assert report.n == 4

    def test_rank_report_on_validation_uses_subset_runs(self, hand_traces):
        assert trace_rank_report(hand_traces, "val", "test").spearman == pytest.approx(1.0)

    def test_convergence_curves(self, hand_traces):
        curves = convergence_curves(hand_traces, "a0", 0)
        assert list(curves.columns) == ["epoch", "test", "synthetic"]
        assert curves["synthetic"].tolist() == [0.6, 0.4, 0.45]

    def test_convergence_curves_missing_run(self, hand_traces):
        with pytest.raises(NotFoundError):
            convergence_curves(hand_traces, "a0", 5)

    @pytest.mark.parametrize("seed", range(20))
    def test_oracle_dominance(self, seed):
        """A perfectly ranking synthetic split never makes selection worse."""
        traces = _oracle(seed)
        summary = es_rss_summary(traces)
        assert summary.es <= summary.baseline + 1e-12
        assert summary.rss <= summary.baseline + 1e-12
        assert summary.es_rss <= summary.rss + 1e-12
        for row in summary.per_arch:
            assert row.rss <= row.baseline
        comparison = compare_protocols(traces)
        best_test = traces.rows(split="test", trained_on="full")["error"].min()
        assert comparison.synthetic_error == pytest.approx(best_test)
        assert comparison.synthetic_error <= comparison.standard_error


def _repeats():
    return range(acceptance_scale(100, 20))


def _grid(seed, **overrides):
    config = dict(num_archs=64, runs_per_arch=10, epochs=acceptance_scale(100, 20), rho=0.97, seed=seed)
    config.update(overrides)
    return generate_traces(TraceGenConfig(**config))


@pytest.mark.slow
class TestSelectionAcceptance:
    """Repeated simulations at the 64 x 10 grid."""

    def test_protocols_are_ordered(self):
        """synthetic <= standard <= random mean in at least 80% of repeats."""
        ordered = 0
        for seed in _repeats():
            c = compare_protocols(_grid(seed))
            ordered += c.synthetic_error <= c.standard_error <= c.random_mean
        assert ordered >= 0.8 * len(_repeats())

    def test_rss_beats_the_baseline(self):
        summaries = [es_rss_summary(_grid(seed)) for seed in _repeats()]
        wins = sum(s.rss < s.baseline for s in summaries)
        assert wins >= 0.9 * len(_repeats())

    def test_early_stopping_is_marginal_on_a_plateau(self):
        """With noiseless test curves that flatten early, ES stays within 0.002 of the baseline."""
        gaps = []
        for seed in _repeats():
            summary = es_rss_summary(_grid(seed, epoch_noise=0.0, tau=1.0))
            gaps.append(abs(summary.es - summary.baseline))
        assert np.mean(gaps) <= 0.002

    def test_uncorrelated_synthetic_split_gives_no_gain(self):
        """Synthetic errors drawn as a permutation of test errors: RSS matches the baseline on average."""
        gaps = []
        for seed in _repeats():
            traces = _grid(seed, epochs=5)
            frame = traces.frame.copy()
            test = (frame["trained_on"] == "full") & (frame["split"] == "test")
            synthetic = (frame["trained_on"] == "full") & (frame["split"] == "synthetic")
            rng = np.random.default_rng(seed)
            frame.loc[synthetic, "error"] = rng.permutation(frame.loc[test, "error"].to_numpy())
            summary = es_rss_summary(EvalTraceSet(frame))
            gaps.append(summary.rss - summary.baseline)
        assert abs(np.mean(gaps)) <= 0.0015
