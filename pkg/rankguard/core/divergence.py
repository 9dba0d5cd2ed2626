"""
divergence.py - L1 divergence between the real and synthetic distributions.

Three flavours:
1. exact_l1: Σ|μ_r − μ_s| over a finite domain (un-halved; TV is half of it).
2. restricted_l1: the same sum over a point set, e.g. where two hypotheses disagree.
3. estimate_l1: cluster-histogram estimate from two feature sample sets.
   Both sets are pooled, clustered with k-means, and the per-source cluster
   histograms are compared.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, computed_field, model_validator
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .domain import Pmf
from ..utils.errors import EmptyInputError, InvalidConfigError, SchemaError
from ..utils.logger import get_logger


logger = get_logger("divergence")

MAX_L1 = 2.0


class DivergenceReport(BaseModel):
    """Exact divergence values for one domain pair."""
    full_l1: float = Field(ge=0.0, le=MAX_L1)
    restricted_l1: Optional[float] = Field(default=None, ge=0.0, le=MAX_L1)
    region: Optional[List[int]] = None
    convention: Literal["unhalved"] = "unhalved"

    @computed_field
    @property
    def total_variation(self) -> float:
        """Conventional (halved) total variation, for reporting."""
        return self.full_l1 / 2.0

    @model_validator(mode="after")
    def _restricted_within_full(self):
        if self.restricted_l1 is not None and self.restricted_l1 > self.full_l1:
            raise ValueError(f"restricted_l1 {self.restricted_l1} exceeds full_l1 {self.full_l1}")
        return self


class EstimatorConfig(BaseModel):
    """Knobs of the cluster-histogram estimator."""
    clusters: int = Field(default=20, ge=1)
    restarts: int = Field(default=5, ge=1)
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, ge=0.0)
    seed: int = 0


class EstimateReport(BaseModel):
    """Sample-based divergence estimate and the settings that produced it."""
    estimate_l1: float = Field(ge=0.0, le=MAX_L1)
    real_samples: int
    synthetic_samples: int
    dim: int
    config: EstimatorConfig

    @computed_field
    @property
    def total_variation(self) -> float:
        return self.estimate_l1 / 2.0


@dataclass(frozen=True, eq=False)
class FeatureSampleSet:
    """Feature vectors drawn from one source ("real" or "synthetic")."""
    points: np.ndarray
    source: Literal["real", "synthetic"]

    def __post_init__(self):
        if self.source not in ("real", "synthetic"):
            raise SchemaError(f"expected source 'real' or 'synthetic', found {self.source!r}", field="source")
        points = np.array(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2:
            raise SchemaError(f"expected a 2-D array of feature vectors, found {points.ndim} dimensions")
        if points.shape[0] == 0:
            raise EmptyInputError(f"{self.source} sample set is empty")
        if points.shape[1] == 0:
            raise SchemaError("expected feature dimension d >= 1, found 0")
        if not np.all(np.isfinite(points)):
            row = int(np.flatnonzero(~np.all(np.isfinite(points), axis=1))[0])
            raise SchemaError("expected finite coordinates", location=row)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])


# ─────────────────────────────────────────────────────────────────────────────
# Exact divergences
# ─────────────────────────────────────────────────────────────────────────────

def _abs_diff(mu_r: Pmf, mu_s: Pmf) -> np.ndarray:
    if len(mu_r) != len(mu_s):
        raise SchemaError(f"expected equal pmf lengths, found {len(mu_r)} and {len(mu_s)}")
    return np.abs(mu_r.masses - mu_s.masses)


def exact_l1(mu_r: Pmf, mu_s: Pmf) -> float:
    """Σ_x |μ_r(x) − μ_s(x)|, in [0, 2]."""
    return min(float(_abs_diff(mu_r, mu_s).sum()), MAX_L1)


def region_mask(n: int, region: Iterable[int]) -> np.ndarray:
    """Boolean mask for a set of point indices; rejects indices outside 0..n-1."""
    mask = np.zeros(n, dtype=bool)
    for i in region:
        if not 0 <= int(i) < n:
            raise SchemaError(f"expected point index in [0, {n}), found {i}", field="region")
        mask[int(i)] = True
    return mask


def restricted_l1(mu_r: Pmf, mu_s: Pmf, region: Union[Iterable[int], np.ndarray]) -> float:
    """
    Σ over region of |μ_r(x) − μ_s(x)|.

    Excluded points are zeroed instead of dropped so the summation order is the
    one exact_l1 uses; the result is then never above exact_l1, and a larger
    region never yields a smaller value.
    """
    diff = _abs_diff(mu_r, mu_s)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        if region.size != diff.size:
            raise SchemaError(f"expected region mask of length {diff.size}, found {region.size}", field="region")
        mask = region
    else:
        mask = region_mask(diff.size, region)
    return min(float(np.where(mask, diff, 0.0).sum()), MAX_L1)


def divergence_report(mu_r: Pmf, mu_s: Pmf, region: Optional[Iterable[int]] = None) -> DivergenceReport:
    """Full (and optionally region-restricted) divergence as a report."""
    full = exact_l1(mu_r, mu_s)
    if region is None:
        return DivergenceReport(full_l1=full)
    points = sorted(int(i) for i in region)
    return DivergenceReport(
        full_l1=full,
        restricted_l1=restricted_l1(mu_r, mu_s, points),
        region=points,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Sample-based estimation
# ─────────────────────────────────────────────────────────────────────────────

def _pool(points: Union[np.ndarray, FeatureSampleSet, Sequence[FeatureSampleSet]]) -> np.ndarray:
    if isinstance(points, FeatureSampleSet):
        return points.points
    if isinstance(points, np.ndarray):
        return points.reshape(-1, 1) if points.ndim == 1 else points
    sets = list(points)
    if not sets:
        raise EmptyInputError("no sample sets to cluster")
    dims = {s.dim for s in sets}
    if len(dims) != 1:
        raise SchemaError(f"expected one feature dimension, found {sorted(dims)}")
    return np.concatenate([s.points for s in sets])


def _sklearn_tol(data: np.ndarray, tol: float) -> float:
    variance = float(np.mean(np.var(data, axis=0)))
    return tol * tol / variance if variance > 0 else 0.0


def kmeans(
    points: Union[np.ndarray, FeatureSampleSet, Sequence[FeatureSampleSet]],
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lloyd k-means with k-means++ seeding.

    Empty clusters are relocated to the points farthest from their centroids.
    Iteration stops once the centroids move less than `tol` in total
    (Frobenius norm of the shift). sklearn measures its tolerance against the
    mean feature variance, so `tol` is rescaled before it is handed over.
    Deterministic given seed.

    Returns:
        (centroids of shape (k, d), assignments of shape (N,))
    """
    data = _pool(points)
    if data.shape[0] == 0:
        raise EmptyInputError("k-means needs at least one point")
    if k < 1:
        raise InvalidConfigError(f"k must be >= 1, found {k}")
    if k > data.shape[0]:
        raise InvalidConfigError(f"k = {k} exceeds the number of points ({data.shape[0]})")
    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=max_iter,
        tol=_sklearn_tol(data, tol),
        random_state=int(seed),
        algorithm="lloyd",
    )
    with warnings.catch_warnings():
        # fewer distinct points than k: duplicated centroids, harmless for histograms
        warnings.simplefilter("ignore", ConvergenceWarning)
        assignments = model.fit_predict(data)
    return model.cluster_centers_, assignments.astype(np.int64)


def restart_seed(seed: int, restart: int) -> int:
    """Seed for one estimator restart, derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(restart)]).generate_state(1)[0])


def _histogram_l1(pool: np.ndarray, is_real: np.ndarray, k: int, seed: int, max_iter: int, tol: float) -> float:
    _, assign = kmeans(pool, k, seed=seed, max_iter=max_iter, tol=tol)
    p = np.bincount(assign[is_real], minlength=k) / np.count_nonzero(is_real)
    q = np.bincount(assign[~is_real], minlength=k) / np.count_nonzero(~is_real)
    return float(np.abs(p - q).sum())


def estimate_l1(
    real_samples: FeatureSampleSet,
    synth_samples: FeatureSampleSet,
    k: int = 20,
    seed: int = 0,
    restarts: int = 5,
    max_iter: int = 100,
    tol: float = 1e-6,
    workers: Optional[int] = None,
) -> float:
    """
    Cluster-histogram estimate of Σ|P − Q| between two sample sets.

    The pool is put in lexicographic row order before clustering, so the
    estimate does not depend on which set is passed first.
    """
    if real_samples.dim != synth_samples.dim:
        raise SchemaError(f"expected equal feature dimensions, found {real_samples.dim} and {synth_samples.dim}")
    if restarts < 1:
        raise InvalidConfigError(f"restarts must be >= 1, found {restarts}")
    pool = np.concatenate([real_samples.points, synth_samples.points])
    is_real = np.zeros(pool.shape[0], dtype=bool)
    is_real[: len(real_samples)] = True
    order = np.lexsort(pool.T[::-1])
    pool, is_real = pool[order], is_real[order]

    seeds = [restart_seed(seed, r) for r in range(restarts)]
    if workers and workers > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            values = list(executor.map(lambda s: _histogram_l1(pool, is_real, k, s, max_iter, tol), seeds))
    else:
        values = [_histogram_l1(pool, is_real, k, s, max_iter, tol) for s in seeds]
    logger.debug("estimate_l1 restarts: %s", values)
    # restart-index order, independent of scheduling
    return min(float(sum(values) / len(values)), MAX_L1)


def estimate_report(
    real_samples: FeatureSampleSet,
    synth_samples: FeatureSampleSet,
    config: Optional[EstimatorConfig] = None,
    workers: Optional[int] = None,
) -> EstimateReport:
    config = config or EstimatorConfig()
    value = estimate_l1(
        real_samples,
        synth_samples,
        k=config.clusters,
        seed=config.seed,
        restarts=config.restarts,
        max_iter=config.max_iter,
        tol=config.tol,
        workers=workers,
    )
    return EstimateReport(
        estimate_l1=value,
        real_samples=len(real_samples),
        synthetic_samples=len(synth_samples),
        dim=real_samples.dim,
        config=config,
    )
