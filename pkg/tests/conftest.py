from __future__ import annotations

import pytest

from hoplab.predictors import OraclePredictor, ProgressTable
from hoplab.trajectory import SampledSequence, StateObservation, Trajectory, sample_sequence


def make_traj(L: int, keyframes, tid: str = "t0", task: str = "open the drawer", views=("cam_a", "cam_b")):
    return Trajectory(tid, task, views, L, tuple(keyframes))


def make_seq(M: int, tid: str = "s0", task: str = "stack the bowls") -> SampledSequence:
    """A sequence whose states sit on frames 0..M (one segment, every frame sampled)."""
    states = tuple(StateObservation(tid, i, (f"{tid}/cam/{i}",)) for i in range(M + 1))
    return SampledSequence(tid, task, states, 1)


def oracle_for(*seqs: SampledSequence) -> OraclePredictor:
    return OraclePredictor(ProgressTable.from_sequences(seqs))


@pytest.fixture
def seq10() -> SampledSequence:
    return make_seq(10)


@pytest.fixture
def long_seq() -> SampledSequence:
    return sample_sequence(make_traj(1000, (0, 200, 400, 600, 800, 999), tid="long"), 10)
