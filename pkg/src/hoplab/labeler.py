"""Hop labels and balanced hop-sample construction.

A hop normalizes the progress change between a BEFORE and an AFTER state by
the distance left to the goal (progress) or the distance already covered
(regress), so every label lies in [-1, 1].
"""

from __future__ import annotations

import logging
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .trajectory import SampledSequence, StateObservation

log = logging.getLogger(__name__)

ZERO = "zero"
Bin = Union[int, str]


def _check_progress(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


def hop_label(phi_p: float, phi_q: float) -> float:
    """Normalized hop from progress ``phi_p`` (before) to ``phi_q`` (after).

    >>> hop_label(0.4, 0.7)
    0.5
    >>> hop_label(0.6, 0.3)
    -0.5
    """
    _check_progress("phi_p", phi_p)
    _check_progress("phi_q", phi_q)
    if phi_q >= phi_p:
        if phi_p == 1.0:
            return 0.0  # 0/0: no state change at the goal
        h = (phi_q - phi_p) / (1.0 - phi_p)
    else:
        h = (phi_q - phi_p) / phi_p
    return min(1.0, max(-1.0, h))


def hop_bin_of(hop: float, n_hop_bins: int) -> int:
    """Index of the uniform bin of [-1, 1] containing ``hop``; 1.0 falls in the last bin."""
    return min(int(math.floor((hop + 1.0) * n_hop_bins / 2.0)), n_hop_bins - 1)


@dataclass(frozen=True)
class LabelerConfig:
    n_hop_bins: int = 8
    n_distance_bins: int = 4
    zero_hop_fraction: float = 0.2
    zero_hop_threshold: float = 0.01
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_hop_bins < 1 or self.n_distance_bins < 1:
            raise ValueError("bin counts must be >= 1")
        if not 0.0 <= self.zero_hop_fraction < 1.0:
            raise ValueError("zero_hop_fraction must lie in [0, 1)")
        if not 0.0 <= self.zero_hop_threshold < 1.0:
            raise ValueError("zero_hop_threshold must lie in [0, 1)")

    def zero_hop_count(self, non_trivial: int) -> int:
        a = self.zero_hop_fraction
        return int(math.floor(a / (1.0 - a) * non_trivial + 0.5))


@dataclass(frozen=True)
class HopSample:
    task_description: str
    state_init: StateObservation
    state_goal: StateObservation
    state_before: StateObservation
    state_after: StateObservation
    hop: float
    hop_bin: Bin
    distance_bin: Bin

    @property
    def is_zero(self) -> bool:
        return self.hop_bin == ZERO

    def to_json(self) -> dict:
        return {
            "task": self.task_description,
            "init": self.state_init.to_json(),
            "goal": self.state_goal.to_json(),
            "before": self.state_before.to_json(),
            "after": self.state_after.to_json(),
            "hop": self.hop,
            "hop_bin": self.hop_bin,
            "dist_bin": self.distance_bin,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> HopSample:
        return cls(
            task_description=obj["task"],
            state_init=StateObservation.from_json(obj["init"]),
            state_goal=StateObservation.from_json(obj["goal"]),
            state_before=StateObservation.from_json(obj["before"]),
            state_after=StateObservation.from_json(obj["after"]),
            hop=float(obj["hop"]),
            hop_bin=obj["hop_bin"],
            distance_bin=obj["dist_bin"],
        )


@dataclass
class LabelResult:
    samples: list[HopSample]
    infeasible: list[tuple[int, int]] = field(default_factory=list)
    zero_shortfall: int = 0


def _within_threshold(dist: np.ndarray, M: int, eps: float) -> np.ndarray:
    # |i/M - j/M| <= eps, decided on integer distances so i/M rounding cannot flip it
    return dist <= eps * M * (1.0 + 1e-12)


def sequence_rng(seq: SampledSequence, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(seq.trajectory_id.encode())])


def label_sequence(seq: SampledSequence, cfg: LabelerConfig) -> LabelResult:
    """Pick one pair per (hop bin, distance bin) cell plus a zero-hop share."""
    M = seq.M
    if M < 2:
        raise ValueError(f"need at least 3 states (M >= 2) to label, got M={M}")
    rng = sequence_rng(seq, cfg.rng_seed)

    idx = np.arange(M + 1)
    p, q = np.meshgrid(idx, idx, indexing="ij")
    p, q = p.ravel(), q.ravel()
    dist = np.abs(q - p)
    zero_mask = _within_threshold(dist, M, cfg.zero_hop_threshold)

    nt_p, nt_q = p[~zero_mask], q[~zero_mask]
    phi_p, phi_q = nt_p / M, nt_q / M
    with np.errstate(divide="ignore", invalid="ignore"):
        hops = np.where(phi_q >= phi_p, (phi_q - phi_p) / (1.0 - phi_p), (phi_q - phi_p) / phi_p)
    hop_bins = np.minimum(np.floor((hops + 1.0) * cfg.n_hop_bins / 2.0).astype(int), cfg.n_hop_bins - 1)
    nt_dist = np.abs(nt_q - nt_p)

    samples: list[HopSample] = []
    infeasible: list[tuple[int, int]] = []
    for b in range(cfg.n_hop_bins):
        in_bin = np.flatnonzero(hop_bins == b)
        if in_bin.size == 0:
            infeasible.extend((b, k) for k in range(cfg.n_distance_bins))
            continue
        d = nt_dist[in_bin]
        dmin, dmax = int(d.min()), int(d.max())
        dist_bins = ((d - dmin) * cfg.n_distance_bins) // (dmax - dmin + 1)
        for k in range(cfg.n_distance_bins):
            cell = in_bin[dist_bins == k]
            if cell.size == 0:
                infeasible.append((b, k))
                continue
            j = cell[rng.integers(cell.size)]
            i_p, i_q = int(nt_p[j]), int(nt_q[j])
            h = hop_label(i_p / M, i_q / M)
            samples.append(_sample(seq, i_p, i_q, h, b, k))

    n_zero = cfg.zero_hop_count(len(samples))
    zp, zq = p[zero_mask], q[zero_mask]
    take = min(n_zero, zp.size)
    shortfall = n_zero - take
    if take:
        chosen = np.sort(rng.choice(zp.size, size=take, replace=False))
        samples.extend(_sample(seq, int(zp[j]), int(zq[j]), 0.0, ZERO, ZERO) for j in chosen)
    if infeasible:
        log.debug("%s: %d infeasible bins", seq.trajectory_id, len(infeasible))
    if shortfall:
        log.warning("%s: only %d of %d zero-hop pairs available", seq.trajectory_id, take, n_zero)
    return LabelResult(samples, infeasible, shortfall)


def _sample(seq: SampledSequence, i_p: int, i_q: int, hop: float, hb: Bin, db: Bin) -> HopSample:
    return HopSample(
        task_description=seq.task_description,
        state_init=seq.init,
        state_goal=seq.goal,
        state_before=seq.states[i_p],
        state_after=seq.states[i_q],
        hop=hop,
        hop_bin=hb,
        distance_bin=db,
    )


def build_hop_samples(seq: SampledSequence, cfg: LabelerConfig) -> list[HopSample]:
    return label_sequence(seq, cfg).samples


@dataclass
class BalanceReport:
    counts: dict[tuple[int, int], int]
    zero_count: int
    total: int
    infeasible: list[tuple[int, int]]
    imbalanced: list[tuple[int, int]]

    @property
    def zero_fraction(self) -> float:
        return self.zero_count / self.total if self.total else 0.0

    @property
    def balanced(self) -> bool:
        return not self.imbalanced


def validate_balance(samples: Iterable[HopSample], cfg: LabelerConfig) -> BalanceReport:
    """Per-cell counts; cells with more than min+1 samples are flagged."""
    samples = list(samples)
    counter = Counter((s.hop_bin, s.distance_bin) for s in samples if not s.is_zero)
    zero_count = sum(1 for s in samples if s.is_zero)
    counts = {cell: counter[cell] for cell in sorted(counter)}
    if not samples:
        return BalanceReport({}, 0, 0, [], [])
    grid = [(b, k) for b in range(cfg.n_hop_bins) for k in range(cfg.n_distance_bins)]
    infeasible = [c for c in grid if counter[c] == 0]
    imbalanced: list[tuple[int, int]] = []
    if counts:
        floor = min(counts.values())
        imbalanced = [c for c, n in counts.items() if n - floor > 1]
    return BalanceReport(counts, zero_count, len(samples), infeasible, imbalanced)
