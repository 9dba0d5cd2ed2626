"""
domain.py - Finite sample domains, distributions, labelings and risks.

A finite domain stands in for the sample space: distributions become
probability mass functions, integrals become exact sums, and both the
labeling function and every hypothesis are label vectors over the points.
The real and synthetic domains share one labeling function.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ..utils.errors import EmptyInputError, SchemaError


PMF_SUM_TOLERANCE = 1e-9
LEMMA_TOLERANCE = 1e-12
ROUNDING_SLACK = 8 * np.finfo(np.float64).eps


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ─────────────────────────────────────────────────────────────────────────────
# Domain Types
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FiniteDomain:
    """Sample points 0..n-1 and class labels 0..c-1."""
    n: int
    c: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise SchemaError(f"expected domain size n >= 1, found {self.n}", field="n")
        if int(self.c) != self.c or self.c < 2:
            raise SchemaError(f"expected num_classes c >= 2, found {self.c}", field="c")


@dataclass(frozen=True, eq=False)
class Pmf:
    """
    Probability mass function over the points of a finite domain.

    Masses must be non-negative and sum to 1 within 1e-9; inputs inside that
    tolerance are renormalized, anything further off is rejected.
    """
    masses: np.ndarray

    def __post_init__(self):
        masses = np.array(self.masses, dtype=np.float64).reshape(-1)
        if masses.size == 0:
            raise SchemaError("expected at least one mass, found none", field="masses")
        if not np.all(np.isfinite(masses)):
            raise SchemaError("expected finite masses, found NaN or infinity", field="masses")
        negative = np.flatnonzero(masses < 0)
        if negative.size:
            i = int(negative[0])
            raise SchemaError(f"expected non-negative mass at index {i}, found {masses[i]!r}", field="masses")
        total = float(masses.sum())
        if abs(total - 1.0) > PMF_SUM_TOLERANCE:
            raise SchemaError(f"expected masses summing to 1 (tolerance 1e-9), found sum {total!r}", field="masses")
        # rescale only beyond summation rounding, so normalizing twice is a no-op
        if abs(total - 1.0) > ROUNDING_SLACK * masses.size:
            masses = masses / total
        object.__setattr__(self, "masses", _frozen(masses))

    def __len__(self) -> int:
        return int(self.masses.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, Pmf) and np.array_equal(self.masses, other.masses)

    __hash__ = None

    def mass(self, points) -> float:
        """Total mass of a point set (iterable of indices or boolean mask)."""
        if isinstance(points, np.ndarray) and points.dtype == bool:
            return float(self.masses[points].sum())
        idx = np.fromiter(points, dtype=np.int64)
        return float(self.masses[idx].sum())

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class LabelMap:
    """A labeling function or hypothesis: one class index per sample point."""
    labels: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.size and raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
                raise SchemaError("expected integral class labels", field="labels")
        labels = raw.astype(np.int64).reshape(-1)
        negative = np.flatnonzero(labels < 0)
        if negative.size:
            i = int(negative[0])
            raise SchemaError(f"expected class label >= 0 at index {i}, found {labels[i]}", field="labels")
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return int(self.labels.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    """
    A real/synthetic domain pair with a shared labeling function and a list
    of hypotheses. The unit of theorem verification.
    """
    domain: FiniteDomain
    mu_r: Pmf
    mu_s: Pmf
    f: LabelMap
    hypotheses: Tuple[LabelMap, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        n, c = self.domain.n, self.domain.c
        for name, value in (("mu_r", self.mu_r), ("mu_s", self.mu_s), ("f", self.f)):
            if len(value) != n:
                raise SchemaError(f"expected length {n}, found {len(value)}", field=name)
        if not self.hypotheses:
            raise SchemaError("expected at least one hypothesis, found none", field="hypotheses")
        _check_label_range(self.f, c, "f")
        for k, h in enumerate(self.hypotheses):
            if len(h) != n:
                raise SchemaError(f"expected length {n}, found {len(h)}", field=f"hypotheses[{k}]")
            _check_label_range(h, c, f"hypotheses[{k}]")

    @property
    def num_hypotheses(self) -> int:
        return len(self.hypotheses)

    def hypothesis_matrix(self) -> np.ndarray:
        """Hypotheses stacked as an (H, n) label matrix."""
        return np.stack([h.labels for h in self.hypotheses])


@dataclass(frozen=True, eq=False)
class SamplePredictions:
    """Predicted and true labels for N evaluation samples."""
    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        predicted = np.asarray(self.predicted, dtype=np.int64).reshape(-1)
        actual = np.asarray(self.actual, dtype=np.int64).reshape(-1)
        if predicted.size != actual.size:
            raise SchemaError(
                f"expected equal lengths, found predicted={predicted.size} actual={actual.size}",
                field="predicted",
            )
        object.__setattr__(self, "predicted", _frozen(predicted))
        object.__setattr__(self, "actual", _frozen(actual))

    def __len__(self) -> int:
        return int(self.predicted.size)


def _check_label_range(labels: LabelMap, c: int, name: str) -> None:
    bad = np.flatnonzero(labels.labels >= c)
    if bad.size:
        i = int(bad[0])
        raise SchemaError(
            f"expected class label < {c} at index {i}, found {labels.labels[i]}",
            location=f"{name}[{i}]",
            field=name,
        )


def _check_lengths(*values) -> int:
    sizes = {len(v) for v in values}
    if len(sizes) != 1:
        raise SchemaError(f"expected equal lengths, found {sorted(len(v) for v in values)}")
    return sizes.pop()


# ─────────────────────────────────────────────────────────────────────────────
# Operations
# ─────────────────────────────────────────────────────────────────────────────

def exact_risk(pmf: Pmf, h: LabelMap, f: LabelMap) -> float:
    """Mass of the points where h disagrees with f."""
    _check_lengths(pmf, h, f)
    risk = float(np.where(h.labels != f.labels, pmf.masses, 0.0).sum())
    return min(risk, 1.0)


def empirical_risk(preds: SamplePredictions) -> float:
    """Fraction of samples where the prediction differs from the true label."""
    if len(preds) == 0:
        raise EmptyInputError("empirical risk needs at least one sample")
    return float(np.count_nonzero(preds.predicted != preds.actual)) / len(preds)


def risk_difference(pmf: Pmf, h1: LabelMap, h2: LabelMap, f: LabelMap) -> float:
    """Δε = ε(h2) − ε(h1); positive when h1 is the better hypothesis."""
    return exact_risk(pmf, h2, f) - exact_risk(pmf, h1, f)


def region_masks(h1: LabelMap, h2: LabelMap, f: LabelMap) -> Tuple[np.ndarray, np.ndarray]:
    """Boolean masks of Ω1 (h1 wrong where they disagree) and Ω2 (h2 wrong)."""
    _check_lengths(h1, h2, f)
    disagree = h1.labels != h2.labels
    omega1 = disagree & (h1.labels != f.labels)
    omega2 = disagree & (h2.labels != f.labels)
    return omega1, omega2


def disagreement_regions(h1: LabelMap, h2: LabelMap, f: LabelMap) -> Tuple[frozenset, frozenset]:
    """
    Split the points where h1 and h2 disagree.

    Returns:
        (omega1, omega2): points where the hypotheses disagree and h1 (resp. h2)
        is wrong. Their union is the whole disagreement set; they overlap where
        both hypotheses are wrong in different ways.
    """
    omega1, omega2 = region_masks(h1, h2, f)
    return (
        frozenset(int(i) for i in np.flatnonzero(omega1)),
        frozenset(int(i) for i in np.flatnonzero(omega2)),
    )


class Lemma1Check(NamedTuple):
    mass_omega2: float
    mass_omega1: float
    delta: float
    residual: float


def lemma1_check(pmf: Pmf, h1: LabelMap, h2: LabelMap, f: LabelMap) -> Lemma1Check:
    """Compare μ(Ω2) − μ(Ω1) against the directly computed risk difference."""
    _check_lengths(pmf, h1, h2, f)
    omega1, omega2 = region_masks(h1, h2, f)
    mass1 = pmf.mass(omega1)
    mass2 = pmf.mass(omega2)
    delta = risk_difference(pmf, h1, h2, f)
    return Lemma1Check(mass2, mass1, delta, abs((mass2 - mass1) - delta))


def sample_predictions(
    pmf: Pmf,
    h: LabelMap,
    f: LabelMap,
    size: int,
    seed: Optional[int] = 0,
) -> SamplePredictions:
    """Draw `size` points from pmf and record h's predictions against f."""
    _check_lengths(pmf, h, f)
    if size < 1:
        raise EmptyInputError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    points = rng.choice(len(pmf), size=size, p=pmf.masses)
    return SamplePredictions(predicted=h.labels[points], actual=f.labels[points])
