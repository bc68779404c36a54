"""Trajectories, keyframe segmentation and dense state sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


@dataclass(frozen=True)
class Trajectory:
    """A multi-view expert trajectory segmented by keyframes K_0..K_N."""

    id: str
    task_description: str
    views: tuple[str, ...]
    frame_count: int
    keyframe_indices: tuple[int, ...]
    frames: Mapping[str, Sequence[str]] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "keyframe_indices", tuple(int(k) for k in self.keyframe_indices))
        if not self.views:
            raise ValueError(f"trajectory {self.id!r}: at least one view is required")
        if len(set(self.views)) != len(self.views):
            raise ValueError(f"trajectory {self.id!r}: duplicate view names")
        if self.frame_count < 1:
            raise ValueError(f"trajectory {self.id!r}: frame_count must be >= 1")
        k = self.keyframe_indices
        if len(k) < 2:
            raise ValueError(f"trajectory {self.id!r}: need at least one segment (2 keyframes)")
        if len(k) - 1 > self.frame_count - 1:
            raise ValueError(
                f"trajectory {self.id!r}: {len(k) - 1} segments cannot fit in {self.frame_count} frames"
            )
        if k[0] != 0 or k[-1] != self.frame_count - 1:
            raise ValueError(
                f"trajectory {self.id!r}: keyframes must start at 0 and end at frame_count-1"
            )
        if any(b <= a for a, b in zip(k, k[1:])):
            raise ValueError(f"trajectory {self.id!r}: keyframes must be strictly increasing")
        if self.frames is not None:
            for view in self.views:
                handles = self.frames.get(view)
                if handles is None or len(handles) != self.frame_count:
                    raise ValueError(
                        f"trajectory {self.id!r}: view {view!r} must list {self.frame_count} frame handles"
                    )

    @property
    def n_segments(self) -> int:
        return len(self.keyframe_indices) - 1

    def view_refs(self, frame_index: int) -> tuple[str, ...]:
        if self.frames is not None:
            return tuple(str(self.frames[v][frame_index]) for v in self.views)
        return tuple(f"{self.id}/{v}/{frame_index:06d}" for v in self.views)

    def observation(self, frame_index: int) -> StateObservation:
        if not 0 <= frame_index < self.frame_count:
            raise IndexError(f"frame {frame_index} outside [0, {self.frame_count - 1}]")
        return StateObservation(self.id, frame_index, self.view_refs(frame_index))


@dataclass(frozen=True)
class StateObservation:
    """Synchronized multi-view observation of one frame; view refs are opaque handles."""

    trajectory_id: str
    frame_index: int
    view_refs: tuple[str, ...]

    def to_json(self) -> dict:
        return {"traj": self.trajectory_id, "frame": self.frame_index, "views": list(self.view_refs)}

    @classmethod
    def from_json(cls, obj: Mapping) -> StateObservation:
        return cls(str(obj["traj"]), int(obj["frame"]), tuple(str(v) for v in obj["views"]))


@dataclass(frozen=True)
class SampledSequence:
    """Dense state sequence s_0..s_M with ground-truth progress i/M."""

    trajectory_id: str
    task_description: str
    states: tuple[StateObservation, ...]
    chunk_size: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise ValueError("a sampled sequence needs at least two states")
        frames = [s.frame_index for s in self.states]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("state frame indices must be strictly increasing")

    @property
    def M(self) -> int:
        return len(self.states) - 1

    @property
    def init(self) -> StateObservation:
        return self.states[0]

    @property
    def goal(self) -> StateObservation:
        return self.states[-1]

    def progress(self, i: int) -> float:
        return ground_truth_progress(self, i)

    def progress_values(self) -> list[float]:
        return [i / self.M for i in range(self.M + 1)]


def intermediate_count(L: int, C: int, N: int) -> int:
    """Number of interior samples per segment, floor(floor(L / C) / N)."""
    if L < 1 or C < 1 or N < 1:
        raise ValueError(f"L, C and N must be positive, got L={L}, C={C}, N={N}")
    return (L // C) // N


def _round_half_up(num: int, den: int) -> int:
    # nearest integer to num/den for nonnegative num, den > 0; halves round up
    return (2 * num + den) // (2 * den)


def segment_frames(start: int, end: int, m: int) -> list[int]:
    """Interior frames of segment [start, end], uniformly spaced, capped at the free frames."""
    span = end - start
    m = min(m, span - 1)
    if m <= 0:
        return []
    out: list[int] = []
    for k in range(1, m + 1):
        f = start + _round_half_up(k * span, m + 1)
        if start < f < end and (not out or f != out[-1]):
            out.append(f)
    return out


def sample_sequence(traj: Trajectory, C: int) -> SampledSequence:
    """Adaptive per-segment sampling: every keyframe plus m interior states per segment."""
    m = intermediate_count(traj.frame_count, C, traj.n_segments)
    k = traj.keyframe_indices
    frames = [k[0]]
    for a, b in zip(k, k[1:]):
        frames.extend(segment_frames(a, b, m))
        frames.append(b)
    states = tuple(traj.observation(f) for f in frames)
    return SampledSequence(traj.id, traj.task_description, states, C)


def ground_truth_progress(seq: SampledSequence, i: int) -> float:
    if not 0 <= i <= seq.M:
        raise IndexError(f"state index {i} outside [0, {seq.M}]")
    return i / seq.M


# -- JSONL I/O ---------------------------------------------------------------


def trajectory_to_json(traj: Trajectory) -> dict:
    obj = {
        "id": traj.id,
        "task": traj.task_description,
        "views": list(traj.views),
        "frame_count": traj.frame_count,
        "keyframes": list(traj.keyframe_indices),
    }
    if traj.frames is not None:
        obj["frames"] = {v: list(traj.frames[v]) for v in traj.views}
    return obj


def trajectory_from_json(obj: Mapping) -> Trajectory:
    return Trajectory(
        id=str(obj["id"]),
        task_description=str(obj["task"]),
        views=tuple(obj["views"]),
        frame_count=int(obj["frame_count"]),
        keyframe_indices=tuple(obj["keyframes"]),
        frames=obj.get("frames"),
    )


def iter_trajectories(path: str | Path) -> Iterator[Trajectory]:
    from .schemas import TRAJECTORY_SCHEMA, validate_record

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            validate_record(obj, TRAJECTORY_SCHEMA, where=f"{path}:{lineno}")
            yield trajectory_from_json(obj)


def read_trajectories(path: str | Path) -> list[Trajectory]:
    return list(iter_trajectories(path))


def dumps_trajectories(trajs: Iterable[Trajectory]) -> str:
    return "".join(json.dumps(trajectory_to_json(t), separators=(",", ":")) + "\n" for t in trajs)
