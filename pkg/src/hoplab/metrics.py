"""VOC rank correlation, error statistics and drift over progress series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .engine import EngineConfig, reconstruct, reconstruct_reversed
from .predictors import HopPredictor
from .trajectory import SampledSequence


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    # Pearson correlation of average ranks
    rx, ry = rankdata(x) - (len(x) + 1) / 2, rankdata(y) - (len(y) + 1) / 2
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0:
        return 0.0
    return float(np.sum(rx * ry) / denom)


def is_degenerate(series: Sequence[float]) -> bool:
    a = np.asarray(series, dtype=float)
    return bool(np.all(a == a[0]))


def voc(series: Sequence[float], times: Sequence[float] | None = None) -> float:
    """Spearman correlation of ``series`` against time, times 100.

    A constant series carries no ordering information and scores 0.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise ValueError("VOC needs at least two values")
    t = np.arange(len(x), dtype=float) if times is None else np.asarray(times, dtype=float)
    if len(t) != len(x):
        raise ValueError("series and times differ in length")
    if is_degenerate(x):
        return 0.0
    return 100.0 * _spearman(x, t)


def tie_fraction(series: Sequence[float]) -> float:
    a = np.asarray(series, dtype=float)
    return 1.0 - len(np.unique(a)) / len(a) if len(a) else 0.0


def reverse_voc_of_series(reversed_series: Sequence[float]) -> float:
    """Score for a reconstruction over time-reversed footage; +100 means a clean inversion."""
    return -voc(reversed_series)


def reverse_voc(predictor: HopPredictor, seq: SampledSequence, cfg: EngineConfig) -> float:
    series = reconstruct_reversed(predictor, seq, cfg)
    return reverse_voc_of_series(series.values())


def mae(series: Sequence[float], ground_truth: Sequence[float]) -> float:
    a, b = np.asarray(series, dtype=float), np.asarray(ground_truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def terminal_drift(series: Sequence[float]) -> float:
    a = np.asarray(series, dtype=float)
    if a.size == 0:
        raise ValueError("empty series")
    return abs(float(a[-1]) - 1.0)


@dataclass
class VocReport:
    trajectory_id: str
    voc_forward: float
    voc_reverse: float
    n_states: int
    tie_fraction: float
    degenerate: bool = False
    mae: float = float("nan")
    terminal_drift: float = float("nan")


def voc_report(
    trajectory_id: str,
    forward_series: Sequence[float],
    reversed_series: Sequence[float],
    ground_truth: Sequence[float] | None = None,
) -> VocReport:
    fwd = np.asarray(forward_series, dtype=float)
    rep = VocReport(
        trajectory_id=trajectory_id,
        voc_forward=voc(fwd),
        voc_reverse=reverse_voc_of_series(reversed_series),
        n_states=len(fwd),
        tie_fraction=tie_fraction(fwd),
        degenerate=is_degenerate(fwd) or is_degenerate(reversed_series),
        terminal_drift=terminal_drift(fwd),
    )
    if ground_truth is not None:
        rep.mae = mae(fwd, ground_truth)
    return rep


def evaluate_sequence(predictor: HopPredictor, seq: SampledSequence, cfg: EngineConfig) -> VocReport:
    fwd = reconstruct(predictor, seq, cfg).values()
    rev = reconstruct_reversed(predictor, seq, cfg).values()
    return voc_report(seq.trajectory_id, fwd, rev, seq.progress_values())


def mean_report(reports: Sequence[VocReport]) -> VocReport:
    if not reports:
        raise ValueError("no reports to aggregate")
    return VocReport(
        trajectory_id="MEAN",
        voc_forward=float(np.mean([r.voc_forward for r in reports])),
        voc_reverse=float(np.mean([r.voc_reverse for r in reports])),
        n_states=int(round(np.mean([r.n_states for r in reports]))),
        tie_fraction=float(np.mean([r.tie_fraction for r in reports])),
        degenerate=any(r.degenerate for r in reports),
        mae=float(np.mean([r.mae for r in reports])),
        terminal_drift=float(np.mean([r.terminal_drift for r in reports])),
    )
