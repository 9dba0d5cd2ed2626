"""
Shared fixtures: a hand-checked four-point instance and small trace sets.
"""

import os

import pytest

from rankguard.core.domain import FiniteDomain, FiniteInstance, LabelMap, Pmf
from rankguard.pipeline.trace_sim import TraceGenConfig, generate_traces
from rankguard.selection.traces import EvalRecord, EvalTraceSet
from rankguard.utils.settings import reload_settings


FULL_ACCEPTANCE = os.getenv("RANKGUARD_FULL_ACCEPTANCE") == "1"


def acceptance_scale(full: int, reduced: int) -> int:
    """Full acceptance size when RANKGUARD_FULL_ACCEPTANCE=1, else the reduced one."""
    return full if FULL_ACCEPTANCE else reduced


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Each test sees the environment it sets, not a cached one."""
    monkeypatch.delenv("RANKGUARD_REPORT_DIGITS", raising=False)
    monkeypatch.delenv("RANKGUARD_LOG_DIR", raising=False)
    reload_settings()
    yield
    reload_settings()


@pytest.fixture
def four_point_instance():
    """f = (0,0,1,1); h0 = f, h1 wrong at points 0 and 3, h2 wrong at point 1."""
    return FiniteInstance(
        domain=FiniteDomain(n=4, c=2),
        mu_r=Pmf([0.25, 0.25, 0.25, 0.25]),
        mu_s=Pmf([0.3, 0.2, 0.2, 0.3]),
        f=LabelMap([0, 0, 1, 1]),
        hypotheses=(
            LabelMap([0, 0, 1, 1]),
            LabelMap([1, 0, 1, 0]),
            LabelMap([0, 1, 1, 1]),
        ),
    )


# (arch, run) -> split -> per-epoch errors
HAND_TRACES = {
    "full": {
        ("a0", 0): {"test": [0.5, 0.3, 0.35], "synthetic": [0.6, 0.4, 0.45]},
        ("a0", 1): {"test": [0.5, 0.25, 0.2], "synthetic": [0.6, 0.35, 0.3]},
        ("a1", 0): {"test": [0.4, 0.2, 0.22], "synthetic": [0.5, 0.25, 0.3]},
        ("a1", 1): {"test": [0.4, 0.3, 0.3], "synthetic": [0.5, 0.4, 0.38]},
    },
    "subset": {
        ("a0", 0): {"val": [0.5, 0.4, 0.3], "test": [0.5, 0.4, 0.31]},
        ("a0", 1): {"val": [0.5, 0.4, 0.32], "test": [0.5, 0.4, 0.33]},
        ("a1", 0): {"val": [0.5, 0.4, 0.36], "test": [0.5, 0.4, 0.37]},
        ("a1", 1): {"val": [0.5, 0.4, 0.34], "test": [0.5, 0.4, 0.35]},
    },
}


def hand_records():
    for trained_on, runs in HAND_TRACES.items():
        for (arch_id, run_id), splits in runs.items():
            for split, errors in splits.items():
                for epoch, error in enumerate(errors):
                    yield EvalRecord(arch_id, run_id, epoch, split, error, trained_on)


@pytest.fixture
def hand_traces():
    return EvalTraceSet.from_records(hand_records())


@pytest.fixture
def oracle_traces():
    """Synthetic errors are the test errors shifted by a constant."""
    return generate_traces(TraceGenConfig(
        num_archs=4, runs_per_arch=3, epochs=10, rho=1.0,
        epoch_noise=0.0, synth_noise=0.0, seed=0,
    ))
