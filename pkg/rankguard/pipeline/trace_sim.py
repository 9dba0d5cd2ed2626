"""
trace_sim.py - Seeded generators for verification instances and evaluation traces.

1. generate_instance: a random finite real/synthetic domain pair with a shared
   labeling function and noisy copies of it as hypotheses.
2. generate_traces: per-epoch error curves for a grid of architectures and
   runs, with a knob (rho) for how well synthetic errors track test errors.

All randomness comes from numpy's PCG64 generator. Seed material is derived
per instance ([seed, index]), per architecture ([seed, ARCH_NS, arch, stream])
and per run ([seed, RUN_NS, arch, run, stream]) so output never depends on
generation order and no two streams share seed material.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..core.domain import FiniteDomain, FiniteInstance, LabelMap, Pmf
from ..selection.traces import COLUMNS, EvalTraceSet
from ..utils.errors import InvalidConfigError
from ..utils.logger import get_logger


logger = get_logger("trace_sim")

SeedMaterial = Union[int, Sequence[int]]
ConfigT = TypeVar("ConfigT", bound=BaseModel)

# Namespaces. Keys are fixed-length per namespace and every id is >= 1: SeedSequence
# zero-pads short entropy, so [s, a, 0] and [s, a, 0, 0] would be the same stream.
ARCH_NS = 1
RUN_NS = 2

# Per-architecture streams: [seed, ARCH_NS, arch, stream]
ARCH_QUALITY = 1
ARCH_SYNTH_QUALITY = 2

# Per-run streams: [seed, RUN_NS, arch, run, stream]
RUN_QUALITY = 1
RUN_SYNTH_QUALITY = 2
RUN_TEST_NOISE = 3
RUN_SYNTH_NOISE = 4
RUN_TRAIN_NOISE = 5
SUBSET_QUALITY = 6
SUBSET_TEST_NOISE = 7
SUBSET_VAL_NOISE = 8
SUBSET_TRAIN_NOISE = 9


def parse_range(value: Any) -> Any:
    """Accept "A..B", a single integer, or a two-item list for an integer range."""
    if isinstance(value, str):
        parts = value.split("..")
        try:
            if len(parts) == 1:
                return (int(parts[0]), int(parts[0]))
            if len(parts) == 2:
                return (int(parts[0]), int(parts[1]))
        except ValueError:
            pass
        raise ValueError(f"expected a range 'A..B', found {value!r}")
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return (int(value), int(value))
    return value


# ─────────────────────────────────────────────────────────────────────────────
# Configs
# ─────────────────────────────────────────────────────────────────────────────

class InstanceGenConfig(BaseModel):
    """Knobs of the finite-instance generator."""
    domain_size: Tuple[int, int] = (2, 64)
    num_classes: Tuple[int, int] = (2, 10)
    mixing: float = Field(default=0.2, ge=0.0, le=1.0)
    hypothesis_accuracy: float = Field(default=0.7, ge=0.0, le=1.0)
    hypotheses_per_instance: int = Field(default=4, ge=2)

    @field_validator("domain_size", "num_classes", mode="before")
    @classmethod
    def _coerce_range(cls, value):
        return parse_range(value)

    @field_validator("domain_size")
    @classmethod
    def _check_domain_size(cls, value):
        lo, hi = value
        if lo < 2 or hi > 64 or hi < lo:
            raise ValueError(f"expected 2 <= lo <= hi <= 64, found {lo}..{hi}")
        return value

    @field_validator("num_classes")
    @classmethod
    def _check_num_classes(cls, value):
        lo, hi = value
        if lo < 2 or hi > 10 or hi < lo:
            raise ValueError(f"expected 2 <= lo <= hi <= 10, found {lo}..{hi}")
        return value

    @classmethod
    def adversarial(cls) -> "InstanceGenConfig":
        """Far-apart domains and weak hypotheses: rank flips are common."""
        return cls(mixing=0.9, hypothesis_accuracy=0.6)


class TraceGenConfig(BaseModel):
    """Knobs of the evaluation-trace simulator."""
    num_archs: int = Field(default=64, ge=1)
    runs_per_arch: int = Field(default=10, ge=1)
    epochs: int = Field(default=100, ge=1)
    rho: float = Field(default=0.97, ge=-1.0, le=1.0)
    floor_test: float = 0.1
    arch_spread: float = Field(default=0.02, ge=0.0)
    run_spread: float = Field(default=0.01, ge=0.0)
    epoch_noise: float = Field(default=0.002, ge=0.0)
    synth_bias: float = Field(default=0.05, ge=0.0)
    synth_noise: float = Field(default=0.002, ge=0.0)
    subset_penalty: float = Field(default=0.03, ge=0.0)
    amp: float = Field(default=0.5, ge=0.0)
    tau: Optional[float] = Field(default=None, gt=0.0)
    train_floor: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _finite(self):
        for name in ("floor_test", "arch_spread", "run_spread", "epoch_noise", "synth_bias",
                     "synth_noise", "subset_penalty", "amp"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self

    @property
    def decay(self) -> float:
        """Time constant of the error curve; a tenth of the epochs unless set."""
        return self.tau if self.tau is not None else max(self.epochs / 10.0, 1.0)


def _load_config(model: Type[ConfigT], source: Union[None, Dict[str, Any], str, Path]) -> ConfigT:
    if source is None:
        data: Dict[str, Any] = {}
    elif isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InvalidConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
        if not isinstance(data, dict):
            raise InvalidConfigError(f"{path}: expected a JSON object")
    try:
        return model(**data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or model.__name__
        raise InvalidConfigError(f"{where}: {first['msg']}")


def load_instance_config(source: Union[None, Dict[str, Any], str, Path] = None) -> InstanceGenConfig:
    """Build an InstanceGenConfig from a dict or a JSON file; bad values raise InvalidConfigError."""
    return _load_config(InstanceGenConfig, source)


def load_trace_config(source: Union[None, Dict[str, Any], str, Path] = None) -> TraceGenConfig:
    return _load_config(TraceGenConfig, source)


# ─────────────────────────────────────────────────────────────────────────────
# Instances
# ─────────────────────────────────────────────────────────────────────────────

def generate_instance(cfg: InstanceGenConfig, seed: SeedMaterial = 0) -> FiniteInstance:
    """
    Draw one finite instance.

    μ_r is a uniform random point of the simplex, μ_s = (1 − λ)·μ_r + λ·ν with
    ν an independent draw, f is uniform over the classes, and each hypothesis
    copies f with probability `hypothesis_accuracy` per point (otherwise it
    takes a uniformly chosen wrong label).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(cfg.domain_size[0], cfg.domain_size[1] + 1))
    c = int(rng.integers(cfg.num_classes[0], cfg.num_classes[1] + 1))
    mu_r = Pmf(rng.dirichlet(np.ones(n)))
    nu = rng.dirichlet(np.ones(n))
    mu_s = Pmf((1.0 - cfg.mixing) * mu_r.masses + cfg.mixing * nu)
    f = rng.integers(0, c, size=n)

    size = (cfg.hypotheses_per_instance, n)
    keep = rng.random(size) < cfg.hypothesis_accuracy
    wrong = (f[None, :] + rng.integers(1, c, size=size)) % c
    hyps = np.where(keep, f[None, :], wrong)
    return FiniteInstance(
        domain=FiniteDomain(n=n, c=c),
        mu_r=mu_r,
        mu_s=mu_s,
        f=LabelMap(f),
        hypotheses=tuple(LabelMap(h) for h in hyps),
    )


# ─────────────────────────────────────────────────────────────────────────────
# Traces
# ─────────────────────────────────────────────────────────────────────────────

def _arch_normal(seed: int, arch: int, stream: int, size=None) -> np.ndarray:
    return np.random.default_rng([seed, ARCH_NS, arch, stream]).standard_normal(size)


def _run_normal(seed: int, arch: int, run: int, stream: int, size=None) -> np.ndarray:
    return np.random.default_rng([seed, RUN_NS, arch, run, stream]).standard_normal(size)


def _run_rows(arch_id: str, run_id: int, trained_on: str, curves: Dict[str, np.ndarray]) -> pd.DataFrame:
    epochs = next(iter(curves.values())).size
    parts = []
    for split, errors in curves.items():
        parts.append(pd.DataFrame({
            "arch_id": arch_id,
            "run_id": run_id,
            "epoch": np.arange(epochs, dtype=np.int64),
            "split": split,
            "trained_on": trained_on,
            "error": np.clip(errors, 0.0, 1.0),
        }))
    return pd.concat(parts, ignore_index=True)


def generate_traces(cfg: TraceGenConfig) -> EvalTraceSet:
    """
    Simulate per-epoch errors of num_archs × runs_per_arch training runs.

    Each full-data run has a latent quality q = arch offset + run offset. Its
    test error follows floor_test + q + amp·exp(−e/τ) plus epoch noise; its
    synthetic error adds synth_bias and uses q̃ = rho·q + √(1 − rho²)·q′ with
    q′ an independent draw of the same scale. Subset-trained duplicates of
    every run (own run offset, plus subset_penalty) report train/val/test.
    All errors are clamped to [0, 1] after noise.
    """
    seed = cfg.seed
    epochs = np.arange(cfg.epochs, dtype=np.float64)
    shape = cfg.amp * np.exp(-epochs / cfg.decay)
    coupling = float(np.sqrt(max(0.0, 1.0 - cfg.rho * cfg.rho)))
    logger.info(
        "Simulating %d archs x %d runs x %d epochs (rho=%.3f, seed=%d)",
        cfg.num_archs, cfg.runs_per_arch, cfg.epochs, cfg.rho, seed,
    )

    frames: List[pd.DataFrame] = []
    for a in range(cfg.num_archs):
        arch_id = f"a{a}"
        arch_q = cfg.arch_spread * float(_arch_normal(seed, a, ARCH_QUALITY))
        arch_q2 = cfg.arch_spread * float(_arch_normal(seed, a, ARCH_SYNTH_QUALITY))
        for r in range(cfg.runs_per_arch):
            q = arch_q + cfg.run_spread * float(_run_normal(seed, a, r, RUN_QUALITY))
            q_other = arch_q2 + cfg.run_spread * float(_run_normal(seed, a, r, RUN_SYNTH_QUALITY))
            q_synth = cfg.rho * q + coupling * q_other

            test = cfg.floor_test + q + shape
            synth = cfg.floor_test + q_synth + shape
            full = {
                "train": cfg.train_floor + shape + cfg.epoch_noise * _run_normal(seed, a, r, RUN_TRAIN_NOISE, size=cfg.epochs),
                "test": test + cfg.epoch_noise * _run_normal(seed, a, r, RUN_TEST_NOISE, size=cfg.epochs),
                "synthetic": synth + cfg.synth_bias + cfg.synth_noise * _run_normal(seed, a, r, RUN_SYNTH_NOISE, size=cfg.epochs),
            }
            frames.append(_run_rows(arch_id, r, "full", full))

            q_sub = arch_q + cfg.run_spread * float(_run_normal(seed, a, r, SUBSET_QUALITY))
            held_out = cfg.floor_test + q_sub + cfg.subset_penalty + shape
            subset = {
                "train": cfg.train_floor + shape + cfg.epoch_noise * _run_normal(seed, a, r, SUBSET_TRAIN_NOISE, size=cfg.epochs),
                "val": held_out + cfg.epoch_noise * _run_normal(seed, a, r, SUBSET_VAL_NOISE, size=cfg.epochs),
                "test": held_out + cfg.epoch_noise * _run_normal(seed, a, r, SUBSET_TEST_NOISE, size=cfg.epochs),
            }
            frames.append(_run_rows(arch_id, r, "subset", subset))

    frame = pd.concat(frames, ignore_index=True)[COLUMNS]
    return EvalTraceSet(frame, metadata={"generator": "simulate", **cfg.model_dump()})


if __name__ == "__main__":
    traces = generate_traces(TraceGenConfig(num_archs=4, runs_per_arch=3, epochs=20))
    print(f"Generated {len(traces)} records over splits {traces.splits()}")
    instance = generate_instance(InstanceGenConfig(), 0)
    print(f"Instance: n={instance.domain.n} c={instance.domain.c} hypotheses={instance.num_hypotheses}")
