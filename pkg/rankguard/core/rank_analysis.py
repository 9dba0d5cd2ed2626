"""
rank_analysis.py - Rank statistics and the rank-preservation verifier.

Provides:
1. spearman: rank correlation with fractional (average) ranks for ties.
2. pairwise_rank_preservation: how often a synthetic risk gap that clears the
   divergence threshold keeps its sign on real data.
3. check_pair / verify_batch / falsify_converse: brute-force checks of the
   rank-preservation bound on generated finite instances.

The bound being verified, for hypotheses h_i, h_j and Δε = ε(h_j) − ε(h_i):
    if Δε_s ≥ δ_restricted then Δε_r ≥ 0,
with δ_restricted the L1 divergence over the points where h_i and h_j disagree.
Two consequences are checked alongside it:
    Δε_r ≥ Δε_s − δ_restricted            (proof chain)
    Δε_s − Δε_r ≤ δ_full                   (global slack)
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, computed_field
from scipy.stats import rankdata

from .domain import (
    LEMMA_TOLERANCE,
    FiniteInstance,
    disagreement_regions,
    exact_risk,
    risk_difference,
)
from .divergence import exact_l1, restricted_l1
from ..utils.errors import DegenerateInputError, EmptyInputError, InvalidConfigError, SchemaError
from ..utils.logger import get_logger


logger = get_logger("rank_analysis")

SLACK_TOLERANCE = 1e-12
MAX_COUNTEREXAMPLES = 16
DEFAULT_TRIGGER_FLOOR = 0.01
CHUNK_SIZE = 2000


# ─────────────────────────────────────────────────────────────────────────────
# Spearman
# ─────────────────────────────────────────────────────────────────────────────

class RankReport(BaseModel):
    """Rank correlation between two error vectors plus the plot-ready scatter."""
    spearman: float = Field(ge=-1.0, le=1.0)
    n: int = Field(ge=2)
    split_a: str = "synthetic"
    split_b: str = "test"
    scatter: List[Tuple[float, float]] = Field(default_factory=list)


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(array)):
        raise SchemaError(f"expected finite values in {name}")
    return array


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    Spearman's rank correlation: Pearson correlation of fractional ranks.

    Raises:
        EmptyInputError: fewer than two observations.
        DegenerateInputError: one of the inputs has all-equal values.
    """
    x = _as_vector(xs, "xs")
    y = _as_vector(ys, "ys")
    if x.size != y.size:
        raise SchemaError(f"expected equal lengths, found {x.size} and {y.size}")
    if x.size < 2:
        raise EmptyInputError("spearman needs at least two observations")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    sxx = float(np.dot(rx, rx))
    syy = float(np.dot(ry, ry))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("rank variance is zero: all values are equal")
    rho = float(np.dot(rx, ry)) / float(np.sqrt(sxx * syy))
    return max(-1.0, min(1.0, rho))


def rank_report(xs: Sequence[float], ys: Sequence[float], split_a: str = "synthetic", split_b: str = "test") -> RankReport:
    return RankReport(
        spearman=spearman(xs, ys),
        n=len(xs),
        split_a=split_a,
        split_b=split_b,
        scatter=[(float(a), float(b)) for a, b in zip(xs, ys)],
    )


# ─────────────────────────────────────────────────────────────────────────────
# Pairwise rank preservation
# ─────────────────────────────────────────────────────────────────────────────

class PreservationStats(BaseModel):
    """Ordered-pair statistics; a pair (i, j) triggers when Δε_s ≥ δ_ij."""
    pairs: int
    triggered: int
    preserved_triggered: int
    fraction_triggered: float
    vacuous: bool
    untriggered: int
    preserved_untriggered: int
    fraction_untriggered: Optional[float] = None


def pairwise_rank_preservation(
    errs_s: Sequence[float],
    errs_r: Sequence[float],
    delta_restricted_per_pair: Union[float, Sequence[Sequence[float]], np.ndarray] = 0.0,
) -> PreservationStats:
    """
    Fraction of triggered ordered pairs whose real risk gap is non-negative.

    With no triggered pair the fraction is reported as 1.0 and `vacuous` is set.
    """
    s = _as_vector(errs_s, "errs_s")
    r = _as_vector(errs_r, "errs_r")
    if s.size != r.size:
        raise SchemaError(f"expected equal lengths, found {s.size} and {r.size}")
    if s.size < 2:
        raise EmptyInputError("rank preservation needs at least two hypotheses")
    delta = np.asarray(delta_restricted_per_pair, dtype=np.float64)
    if delta.ndim == 0:
        delta = np.full((s.size, s.size), float(delta))
    elif delta.shape != (s.size, s.size):
        raise SchemaError(f"expected a {s.size}x{s.size} divergence matrix, found shape {delta.shape}")

    gap_s = s[None, :] - s[:, None]
    gap_r = r[None, :] - r[:, None]
    off_diagonal = ~np.eye(s.size, dtype=bool)
    triggered = off_diagonal & (gap_s >= delta)
    untriggered = off_diagonal & ~triggered
    preserved = gap_r >= 0

    n_trig = int(triggered.sum())
    n_untrig = int(untriggered.sum())
    kept_trig = int((triggered & preserved).sum())
    kept_untrig = int((untriggered & preserved).sum())
    return PreservationStats(
        pairs=int(off_diagonal.sum()),
        triggered=n_trig,
        preserved_triggered=kept_trig,
        fraction_triggered=kept_trig / n_trig if n_trig else 1.0,
        vacuous=n_trig == 0,
        untriggered=n_untrig,
        preserved_untriggered=kept_untrig,
        fraction_untriggered=kept_untrig / n_untrig if n_untrig else None,
    )


def instance_rank_inputs(instance: FiniteInstance) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-hypothesis exact synthetic/real risks and the pairwise restricted-divergence matrix."""
    hyps = instance.hypotheses
    errs_s = np.array([exact_risk(instance.mu_s, h, instance.f) for h in hyps])
    errs_r = np.array([exact_risk(instance.mu_r, h, instance.f) for h in hyps])
    size = len(hyps)
    delta = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            if i != j:
                omega1, omega2 = disagreement_regions(hyps[i], hyps[j], instance.f)
                delta[i, j] = restricted_l1(instance.mu_r, instance.mu_s, omega1 | omega2)
    return errs_s, errs_r, delta


class PairwiseDivergenceReport(BaseModel):
    """Full divergence of an instance plus the restricted divergence of every hypothesis pair."""
    full_l1: float
    restricted_l1: List[List[float]]
    errs_s: List[float]
    errs_r: List[float]

    @computed_field
    @property
    def total_variation(self) -> float:
        return self.full_l1 / 2.0


def pairwise_divergence_report(instance: FiniteInstance) -> PairwiseDivergenceReport:
    errs_s, errs_r, delta = instance_rank_inputs(instance)
    return PairwiseDivergenceReport(
        full_l1=exact_l1(instance.mu_r, instance.mu_s),
        restricted_l1=delta.tolist(),
        errs_s=errs_s.tolist(),
        errs_r=errs_r.tolist(),
    )


# ─────────────────────────────────────────────────────────────────────────────
# Single-pair verdict
# ─────────────────────────────────────────────────────────────────────────────

class TheoremVerdict(BaseModel):
    """Outcome of checking the rank-preservation bound on one ordered pair."""
    i: int
    j: int
    delta_s: float
    delta_r: float
    delta_restricted: float
    delta_full: float
    condition_held: bool
    conclusion_held: bool
    slack: float
    corollary1_condition: bool
    corollary2_slack: float


def check_pair(instance: FiniteInstance, i: int, j: int) -> TheoremVerdict:
    """Check the bound for hypotheses i (reference) and j on one instance."""
    size = instance.num_hypotheses
    for name, index in (("i", i), ("j", j)):
        if not 0 <= index < size:
            raise SchemaError(f"expected hypothesis index in [0, {size}), found {index}", field=name)
    h1, h2, f = instance.hypotheses[i], instance.hypotheses[j], instance.f
    delta_s = risk_difference(instance.mu_s, h1, h2, f)
    delta_r = risk_difference(instance.mu_r, h1, h2, f)
    omega1, omega2 = disagreement_regions(h1, h2, f)
    delta_restricted = restricted_l1(instance.mu_r, instance.mu_s, omega1 | omega2)
    delta_full = exact_l1(instance.mu_r, instance.mu_s)
    return TheoremVerdict(
        i=i,
        j=j,
        delta_s=delta_s,
        delta_r=delta_r,
        delta_restricted=delta_restricted,
        delta_full=delta_full,
        condition_held=delta_s >= delta_restricted,
        conclusion_held=delta_r >= 0.0,
        slack=delta_r - (delta_s - delta_restricted),
        corollary1_condition=delta_s >= delta_full,
        corollary2_slack=delta_full - (delta_s - delta_r),
    )


# ─────────────────────────────────────────────────────────────────────────────
# Vectorized per-instance evaluation (all ordered pairs at once)
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class PairArrays:
    """Every quantity of TheoremVerdict for all ordered pairs of one instance."""
    i: np.ndarray
    j: np.ndarray
    delta_s: np.ndarray
    delta_r: np.ndarray
    delta_restricted: np.ndarray
    delta_full: float
    lemma_residual: np.ndarray

    @property
    def condition(self) -> np.ndarray:
        return self.delta_s >= self.delta_restricted

    @property
    def conclusion(self) -> np.ndarray:
        return self.delta_r >= 0.0

    @property
    def slack(self) -> np.ndarray:
        return self.delta_r - (self.delta_s - self.delta_restricted)

    @property
    def corollary2_slack(self) -> np.ndarray:
        return self.delta_full - (self.delta_s - self.delta_r)


def pair_arrays(instance: FiniteInstance) -> PairArrays:
    """Evaluate the bound, its consequences and the region identity on every ordered pair."""
    size = instance.num_hypotheses
    hyps = instance.hypothesis_matrix()
    f = instance.f.labels
    mu_r, mu_s = instance.mu_r.masses, instance.mu_s.masses
    wrong = hyps != f[None, :]
    risk_s = np.minimum(np.where(wrong, mu_s, 0.0).sum(axis=1), 1.0)
    risk_r = np.minimum(np.where(wrong, mu_r, 0.0).sum(axis=1), 1.0)

    idx_i, idx_j = np.nonzero(~np.eye(size, dtype=bool))
    disagree = hyps[idx_i] != hyps[idx_j]
    omega1 = disagree & wrong[idx_i]
    omega2 = disagree & wrong[idx_j]

    abs_diff = np.abs(mu_r - mu_s)
    delta_full = min(float(abs_diff.sum()), 2.0)
    delta_restricted = np.minimum(np.where(disagree, abs_diff, 0.0).sum(axis=1), 2.0)
    delta_s = risk_s[idx_j] - risk_s[idx_i]
    delta_r = risk_r[idx_j] - risk_r[idx_i]

    residual = np.zeros(idx_i.size)
    for mu, delta in ((mu_s, delta_s), (mu_r, delta_r)):
        region_gap = np.where(omega2, mu, 0.0).sum(axis=1) - np.where(omega1, mu, 0.0).sum(axis=1)
        residual = np.maximum(residual, np.abs(region_gap - delta))

    return PairArrays(
        i=idx_i,
        j=idx_j,
        delta_s=delta_s,
        delta_r=delta_r,
        delta_restricted=delta_restricted,
        delta_full=delta_full,
        lemma_residual=residual,
    )


def instance_rank_flips(instance: FiniteInstance) -> int:
    """Ordered pairs the synthetic domain ranks one way and the real domain the other, with the condition failing."""
    if instance.num_hypotheses < 2:
        return 0
    arrays = pair_arrays(instance)
    flips = (arrays.delta_s > 0.0) & ~arrays.condition & (arrays.delta_r < 0.0)
    return int(flips.sum())


# ─────────────────────────────────────────────────────────────────────────────
# Batch verification
# ─────────────────────────────────────────────────────────────────────────────

class VerificationReport(BaseModel):
    """Aggregate of bound checks over a batch of generated instances."""
    seed: int
    instances: int
    pairs_checked: int
    condition_triggered: int
    violations: int
    proof_chain_violations: int
    corollary1_triggered: int
    corollary1_violations: int
    corollary2_violations: int
    lemma_residual_violations: int
    max_lemma_residual: float
    slack_min: Optional[float] = None
    slack_median: Optional[float] = None
    corollary2_slack_min: Optional[float] = None
    corollary2_slack_median: Optional[float] = None
    trigger_rate: float
    trigger_floor: float
    inconclusive: bool
    config: Dict[str, Any] = Field(default_factory=dict)
    counterexample_indices: List[int] = Field(default_factory=list)
    counterexamples: List[Dict[str, Any]] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return (
            self.violations == 0
            and self.proof_chain_violations == 0
            and self.corollary1_violations == 0
            and self.corollary2_violations == 0
            and self.lemma_residual_violations == 0
        )


@dataclass
class _ChunkResult:
    instances: int = 0
    pairs: int = 0
    triggered: int = 0
    violations: int = 0
    proof_chain: int = 0
    corollary1_triggered: int = 0
    corollary1_violations: int = 0
    corollary2_violations: int = 0
    lemma_violations: int = 0
    max_residual: float = 0.0
    flips: int = 0
    bad_instances: List[int] = field(default_factory=list)
    slacks: List[np.ndarray] = field(default_factory=list)
    corollary2_slacks: List[np.ndarray] = field(default_factory=list)


def _verify_chunk(config_data: Dict[str, Any], seed: int, start: int, stop: int) -> _ChunkResult:
    from ..pipeline.trace_sim import InstanceGenConfig, generate_instance

    config = InstanceGenConfig(**config_data)
    result = _ChunkResult()
    for index in range(start, stop):
        arrays = pair_arrays(generate_instance(config, [seed, index]))
        condition = arrays.condition
        slack = arrays.slack
        cor2 = arrays.corollary2_slack
        cor1 = arrays.delta_s >= arrays.delta_full

        violations = int((condition & ~arrays.conclusion).sum())
        proof_chain = int((slack < -SLACK_TOLERANCE).sum())
        cor1_violations = int((cor1 & ~arrays.conclusion).sum())
        cor2_violations = int((cor2 < -SLACK_TOLERANCE).sum())
        lemma_violations = int((arrays.lemma_residual > LEMMA_TOLERANCE).sum())

        result.instances += 1
        result.pairs += int(arrays.i.size)
        result.triggered += int(condition.sum())
        result.violations += violations
        result.proof_chain += proof_chain
        result.corollary1_triggered += int(cor1.sum())
        result.corollary1_violations += cor1_violations
        result.corollary2_violations += cor2_violations
        result.lemma_violations += lemma_violations
        if arrays.lemma_residual.size:
            result.max_residual = max(result.max_residual, float(arrays.lemma_residual.max()))
        result.slacks.append(slack)
        result.corollary2_slacks.append(cor2)
        if violations or proof_chain or cor1_violations or cor2_violations or lemma_violations:
            result.bad_instances.append(index)
    return result


def _flip_chunk(config_data: Dict[str, Any], seed: int, start: int, stop: int) -> _ChunkResult:
    from ..pipeline.trace_sim import InstanceGenConfig, generate_instance

    config = InstanceGenConfig(**config_data)
    result = _ChunkResult()
    for index in range(start, stop):
        result.instances += 1
        if instance_rank_flips(generate_instance(config, [seed, index])) > 0:
            result.flips += 1
    return result


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        return os.cpu_count() or 1
    if workers < 1:
        raise InvalidConfigError(f"workers must be >= 1, found {workers}")
    return workers


def _run_chunks(task, config_data: Dict[str, Any], num_instances: int, seed: int, workers: Optional[int]) -> List[_ChunkResult]:
    bounds = [(s, min(s + CHUNK_SIZE, num_instances)) for s in range(0, num_instances, CHUNK_SIZE)]
    workers = min(resolve_workers(workers), len(bounds))
    if workers <= 1:
        return [task(config_data, seed, s, e) for s, e in bounds]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(task, config_data, seed, s, e) for s, e in bounds]
        # chunk order, not completion order
        return [future.result() for future in futures]


def _validated_config(gen_config, num_instances: int):
    from ..pipeline.trace_sim import InstanceGenConfig, load_instance_config

    if num_instances < 1:
        raise InvalidConfigError(f"num_instances must be >= 1, found {num_instances}")
    if isinstance(gen_config, InstanceGenConfig):
        return gen_config
    return load_instance_config(gen_config or {})


def verify_batch(
    gen_config,
    num_instances: int,
    seed: int = 0,
    workers: Optional[int] = 1,
    trigger_floor: float = DEFAULT_TRIGGER_FLOOR,
    max_counterexamples: int = MAX_COUNTEREXAMPLES,
) -> VerificationReport:
    """
    Generate `num_instances` instances and check every ordered hypothesis pair.

    Instance k is generated from the seed material [seed, k], so the report is
    identical for any number of workers.
    """
    from ..pipeline.formats import instance_to_dict
    from ..pipeline.trace_sim import generate_instance

    config = _validated_config(gen_config, num_instances)
    config_data = config.model_dump()
    logger.info("Verifying %d instances (seed=%d, workers=%s)", num_instances, seed, workers)
    chunks = _run_chunks(_verify_chunk, config_data, num_instances, seed, workers)

    pairs = sum(c.pairs for c in chunks)
    triggered = sum(c.triggered for c in chunks)
    bad = [i for c in chunks for i in c.bad_instances]
    slacks = np.concatenate([s for c in chunks for s in c.slacks]) if pairs else np.zeros(0)
    cor2 = np.concatenate([s for c in chunks for s in c.corollary2_slacks]) if pairs else np.zeros(0)
    trigger_rate = triggered / pairs if pairs else 0.0

    report = VerificationReport(
        seed=seed,
        instances=sum(c.instances for c in chunks),
        pairs_checked=pairs,
        condition_triggered=triggered,
        violations=sum(c.violations for c in chunks),
        proof_chain_violations=sum(c.proof_chain for c in chunks),
        corollary1_triggered=sum(c.corollary1_triggered for c in chunks),
        corollary1_violations=sum(c.corollary1_violations for c in chunks),
        corollary2_violations=sum(c.corollary2_violations for c in chunks),
        lemma_residual_violations=sum(c.lemma_violations for c in chunks),
        max_lemma_residual=max((c.max_residual for c in chunks), default=0.0),
        slack_min=float(slacks.min()) if slacks.size else None,
        slack_median=float(np.median(slacks)) if slacks.size else None,
        corollary2_slack_min=float(cor2.min()) if cor2.size else None,
        corollary2_slack_median=float(np.median(cor2)) if cor2.size else None,
        trigger_rate=trigger_rate,
        trigger_floor=trigger_floor,
        inconclusive=trigger_rate < trigger_floor,
        config=config_data,
        counterexample_indices=bad[:max_counterexamples],
        counterexamples=[
            instance_to_dict(generate_instance(config, [seed, index]))
            for index in bad[:max_counterexamples]
        ],
    )
    if report.violations:
        logger.error("Bound violated on %d pairs", report.violations)
    if report.inconclusive:
        logger.warning("Trigger rate %.4f below floor %.4f: run is inconclusive", trigger_rate, trigger_floor)
    logger.info(
        "Checked %d pairs, %d triggered, %d violations",
        report.pairs_checked, report.condition_triggered, report.violations,
    )
    return report


def falsify_converse(gen_config, num_instances: int, seed: int = 0, workers: Optional[int] = 1) -> int:
    """
    Count instances holding at least one genuine rank flip: Δε_s > 0, the
    condition fails, and Δε_r < 0.
    """
    config = _validated_config(gen_config, num_instances)
    chunks = _run_chunks(_flip_chunk, config.model_dump(), num_instances, seed, workers)
    count = sum(c.flips for c in chunks)
    logger.info("Found %d instances with rank flips out of %d", count, num_instances)
    return count
