"""Global progress reconstruction from predicted hops.

Three estimates are maintained per state: an incremental chain over
consecutive states, a forward estimate anchored at the initial state and a
backward estimate anchored at the goal. They are combined either by plain
averaging or by a consistency-gated conservative update.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .predictors import HopPredictor, HopQuery, PredictorError
from .trajectory import SampledSequence, StateObservation

MODES = ("incremental", "forward", "backward", "fused_mean", "conservative")

_NEEDS = {
    "incremental": (True, False, False),
    "forward": (False, True, False),
    "backward": (False, False, True),
    "fused_mean": (True, True, True),
    "conservative": (True, True, True),
}


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _is_scalar(*xs) -> bool:
    return all(np.ndim(x) == 0 for x in xs)


def _check_domain(prev, hop) -> None:
    prev_a, hop_a = np.asarray(prev, dtype=float), np.asarray(hop, dtype=float)
    if not np.all((prev_a >= 0.0) & (prev_a <= 1.0)):
        raise ValueError(f"previous progress must lie in [0, 1], got {prev!r}")
    if not np.all((hop_a >= -1.0) & (hop_a <= 1.0)):
        raise ValueError(f"hop must lie in [-1, 1], got {hop!r}")


def hop_to_delta(prev, hop):
    """Progress change implied by ``hop`` from ``prev``; scalars or arrays."""
    _check_domain(prev, hop)
    if _is_scalar(prev, hop):
        prev, hop = float(prev), float(hop)
        return (1.0 - prev) * hop if hop >= 0 else prev * hop
    prev, hop = np.asarray(prev, dtype=float), np.asarray(hop, dtype=float)
    return np.where(hop >= 0, (1.0 - prev) * hop, prev * hop)


def incremental_step(prev, hop):
    """One step of the incremental chain. Stays in [0, 1] for prev in [0, 1], hop in [-1, 1]."""
    return prev + hop_to_delta(prev, hop)


def forward_anchored(hop_from_init: float, clamp: bool = True) -> float:
    return _clamp01(hop_from_init) if clamp else float(hop_from_init)


def backward_anchored(hop_from_goal: float, clamp: bool = True) -> float:
    phi = 1.0 + hop_from_goal
    return _clamp01(phi) if clamp else phi


def fuse_mean(phi_inc: float, phi_fwd: float, phi_bwd: float) -> float:
    return (phi_inc + phi_fwd + phi_bwd) / 3.0


def normalized_discrepancy(phi_fwd: float, phi_bwd: float, stability_epsilon: float) -> float:
    if stability_epsilon <= 0:
        raise ValueError("stability_epsilon must be > 0")
    return abs(phi_bwd - phi_fwd) / ((phi_fwd + phi_bwd) / 2.0 + stability_epsilon)


def confidence_weight(delta_norm: float, sensitivity: float) -> float:
    """Gaussian kernel exp(-sensitivity * delta_norm**2), floored above 0."""
    if delta_norm < 0:
        raise ValueError("delta_norm must be >= 0")
    if sensitivity <= 0:
        raise ValueError("sensitivity must be > 0")
    return max(math.exp(-sensitivity * delta_norm * delta_norm), sys.float_info.min)


def conservative_update(
    prev_phi: float, mean_phi: float, delta_inc: float, weight: float, clamp: bool = True
) -> float:
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    phi = prev_phi + (weight / 2.0) * (mean_phi - prev_phi + delta_inc)
    return _clamp01(phi) if clamp else phi


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "fused_mean"
    consistency_sensitivity: float = 1.0
    stability_epsilon: float = 1e-6
    clamp_outputs: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.consistency_sensitivity <= 0:
            raise ValueError("consistency_sensitivity must be > 0")
        if self.stability_epsilon <= 0:
            raise ValueError("stability_epsilon must be > 0")


@dataclass
class ProgressPoint:
    state_index: int
    hop_inc: float = math.nan
    hop_fwd: float = math.nan
    hop_bwd: float = math.nan
    phi_inc: float = math.nan
    phi_fwd: float = math.nan
    phi_bwd: float = math.nan
    phi_fused: float = math.nan
    phi_conservative: float = math.nan
    delta_inc: float = math.nan
    discrepancy: float = math.nan
    weight: float = math.nan

    @property
    def phi_mean(self) -> float:
        return (self.phi_fwd + self.phi_bwd) / 2.0

    def value(self, mode: str) -> float:
        return {
            "incremental": self.phi_inc,
            "forward": self.phi_fwd,
            "backward": self.phi_bwd,
            "fused_mean": self.phi_fused,
            "conservative": self.phi_conservative,
        }[mode]


@dataclass
class ProgressSeries:
    trajectory_id: str
    mode: str
    direction: str = "forward"
    points: list[ProgressPoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def values(self, mode: str | None = None) -> np.ndarray:
        m = mode or self.mode
        return np.array([p.value(m) for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


POINT_FIELDS = tuple(f.name for f in fields(ProgressPoint))


def _ask(predictor: HopPredictor, query: HopQuery) -> float:
    try:
        h = predictor.predict_hop(query)
    except PredictorError:
        raise
    except Exception as exc:
        raise PredictorError(f"predictor failed on {query.describe()}: {exc}", query) from exc
    if not isinstance(h, (int, float)) or not math.isfinite(h) or not -1.0 <= h <= 1.0:
        raise PredictorError(f"predictor returned {h!r} outside [-1, 1] on {query.describe()}", query)
    return float(h)


def reconstruct_states(
    predictor: HopPredictor,
    states: Sequence[StateObservation],
    init: StateObservation,
    goal: StateObservation,
    task: str,
    cfg: EngineConfig,
    trajectory_id: str | None = None,
    direction: str = "forward",
) -> ProgressSeries:
    """Reconstruct progress over ``states`` observed in the given order.

    ``init``/``goal`` are the task anchors and need not be the first and last
    observed state. When the first observed state is the initial anchor its
    progress is 0; otherwise it starts at the mean of its two anchored
    estimates.
    """
    if len(states) < 2:
        raise ValueError("need at least two states to reconstruct")
    need_inc, need_fwd, need_bwd = _NEEDS[cfg.mode]
    clamp = cfg.clamp_outputs
    series = ProgressSeries(trajectory_id or states[0].trajectory_id, cfg.mode, direction)

    def query(before: StateObservation, after: StateObservation, anchor: str) -> float:
        return _ask(predictor, HopQuery(task, init, goal, before, after, anchor))

    def gate(pt: ProgressPoint) -> None:
        if not (math.isnan(pt.phi_fwd) or math.isnan(pt.phi_bwd)):
            pt.discrepancy = normalized_discrepancy(pt.phi_fwd, pt.phi_bwd, cfg.stability_epsilon)
            pt.weight = confidence_weight(pt.discrepancy, cfg.consistency_sensitivity)

    first = ProgressPoint(0)
    if states[0] == init:
        start = 0.0
        first.hop_inc, first.delta_inc = 0.0, 0.0
        first.hop_fwd, first.phi_fwd = 0.0, 0.0
        first.hop_bwd, first.phi_bwd = -1.0, 0.0
        first.discrepancy, first.weight = 0.0, 1.0
    else:
        first.hop_fwd = query(init, states[0], "forward")
        first.hop_bwd = query(goal, states[0], "backward")
        first.phi_fwd = forward_anchored(first.hop_fwd, clamp)
        first.phi_bwd = backward_anchored(first.hop_bwd, clamp)
        start = _clamp01(first.phi_mean)
        first.hop_inc, first.delta_inc = 0.0, 0.0
        gate(first)
    first.phi_inc = start
    first.phi_fused = start
    first.phi_conservative = start
    if not need_fwd:
        first.hop_fwd = first.phi_fwd = math.nan
    if not need_bwd:
        first.hop_bwd = first.phi_bwd = math.nan
    if not (need_fwd and need_bwd):
        first.discrepancy = first.weight = math.nan
    series.points.append(first)

    inc, cons = start, start
    for t in range(1, len(states)):
        pt = ProgressPoint(t)
        if need_inc:
            pt.hop_inc = query(states[t - 1], states[t], "incremental")
            pt.delta_inc = hop_to_delta(inc, pt.hop_inc)
            inc = inc + pt.delta_inc
            pt.phi_inc = inc
        if need_fwd:
            pt.hop_fwd = query(init, states[t], "forward")
            pt.phi_fwd = forward_anchored(pt.hop_fwd, clamp)
        if need_bwd:
            pt.hop_bwd = query(goal, states[t], "backward")
            pt.phi_bwd = backward_anchored(pt.hop_bwd, clamp)
        if need_inc and need_fwd and need_bwd:
            fused = fuse_mean(pt.phi_inc, pt.phi_fwd, pt.phi_bwd)
            pt.phi_fused = _clamp01(fused) if clamp else fused
            gate(pt)
            cons = conservative_update(cons, pt.phi_mean, pt.delta_inc, pt.weight, clamp)
            pt.phi_conservative = cons
        series.points.append(pt)
    return series


def reconstruct(predictor: HopPredictor, seq: SampledSequence, cfg: EngineConfig) -> ProgressSeries:
    return reconstruct_states(
        predictor, seq.states, seq.init, seq.goal, seq.task_description, cfg, seq.trajectory_id
    )


def reconstruct_reversed(
    predictor: HopPredictor, seq: SampledSequence, cfg: EngineConfig
) -> ProgressSeries:
    """Replay the footage backwards; the task anchors keep their identities."""
    return reconstruct_states(
        predictor,
        seq.states[::-1],
        seq.init,
        seq.goal,
        seq.task_description,
        cfg,
        seq.trajectory_id,
        direction="reverse",
    )
