"""(u, v, d) keypoints and traces: pinhole back-projection and trace metrics.

Depth is metric (meters) along the optical axis; 3D points live in the camera
frame. Boxes are axis-aligned in that same frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    d: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("u and v must be finite")
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ValueError(f"depth must be positive, got {self.d!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.u, self.v, self.d)


@dataclass(frozen=True)
class Trace:
    points: tuple[Keypoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))

    @classmethod
    def from_uvd(cls, rows: Iterable[Sequence[float]]) -> Trace:
        return cls(tuple(Keypoint(float(u), float(v), float(d)) for u, v, d in rows))

    def __len__(self) -> int:
        return len(self.points)

    def reversed(self) -> Trace:
        return Trace(self.points[::-1])

    def as_array(self) -> np.ndarray:
        return np.array([p.as_tuple() for p in self.points], dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @classmethod
    def parse(cls, text: str) -> CameraIntrinsics:
        fx, fy, cx, cy = (float(x) for x in text.split(","))
        return cls(fx, fy, cx, cy)


@dataclass(frozen=True)
class Box:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self) -> None:
        lo, hi = tuple(map(float, self.min)), tuple(map(float, self.max))
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box corners must satisfy min <= max per axis: {lo}, {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.min) + np.array(self.max)) / 2

    def inflated(self, margin: float) -> Box:
        return Box(tuple(a - margin for a in self.min), tuple(b + margin for b in self.max))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Closed-box membership for an (n, 3) array."""
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.min)) & (pts <= np.array(self.max)), axis=1)

    def intersects_segment(self, a: np.ndarray, b: np.ndarray) -> bool:
        """Exact slab test for the closed segment [a, b]."""
        t0, t1 = 0.0, 1.0
        d = b - a
        for k in range(3):
            if d[k] == 0.0:
                if a[k] < self.min[k] or a[k] > self.max[k]:
                    return False
                continue
            ta = (self.min[k] - a[k]) / d[k]
            tb = (self.max[k] - a[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return False
        return True

    @classmethod
    def from_json(cls, obj) -> Box:
        return cls(tuple(obj["min"]), tuple(obj["max"]))


@dataclass(frozen=True)
class SceneSpec:
    target_points: np.ndarray
    destination_box: Box
    obstacle_boxes: tuple[Box, ...] = ()
    start_radius: float = 0.05
    end_margin: float = 0.0
    clearance: float = 0.0
    check_start: bool = True

    def __post_init__(self) -> None:
        pts = np.asarray(self.target_points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "target_points", pts)
        object.__setattr__(self, "obstacle_boxes", tuple(self.obstacle_boxes))
        if self.start_radius <= 0:
            raise ValueError("start_radius must be positive")
        if self.end_margin < 0 or self.clearance < 0:
            raise ValueError("end_margin and clearance must be >= 0")

    @classmethod
    def from_json(cls, obj) -> SceneSpec:
        return cls(
            target_points=np.asarray(obj["target_points"], dtype=float).reshape(-1, 3),
            destination_box=Box.from_json(obj["dest_box"]),
            obstacle_boxes=tuple(Box.from_json(b) for b in obj.get("obstacles", [])),
            start_radius=float(obj["start_radius"]),
            end_margin=float(obj["end_margin"]),
            clearance=float(obj["clearance"]),
        )


def backproject(p: Keypoint, K: CameraIntrinsics) -> np.ndarray:
    if not p.d > 0:
        raise ValueError("depth must be positive")
    return np.array([(p.u - K.cx) * p.d / K.fx, (p.v - K.cy) * p.d / K.fy, p.d])


def project(x: float, y: float, z: float, K: CameraIntrinsics) -> Keypoint:
    if not z > 0:
        raise ValueError(f"cannot project a point with z={z!r} <= 0")
    return Keypoint(K.fx * x / z + K.cx, K.fy * y / z + K.cy, z)


def backproject_trace(trace: Trace, K: CameraIntrinsics) -> np.ndarray:
    uvd = trace.as_array()
    if len(uvd) and np.any(uvd[:, 2] <= 0):
        raise ValueError("depth must be positive")
    x = (uvd[:, 0] - K.cx) * uvd[:, 2] / K.fx
    y = (uvd[:, 1] - K.cy) * uvd[:, 2] / K.fy
    return np.stack([x, y, uvd[:, 2]], axis=1)


def to_2d_trace(trace: Trace) -> list[tuple[float, float]]:
    return [(p.u, p.v) for p in trace.points]


def referring_endpoints(trace: Trace) -> tuple[Keypoint, Keypoint]:
    if len(trace) < 2:
        raise ValueError("a trace needs at least two points to have endpoints")
    return trace.points[0], trace.points[-1]


def resample_polyline(pts: np.ndarray, n: int) -> np.ndarray:
    """``n`` points evenly spaced by arc length along the polyline."""
    pts = np.asarray(pts, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    targets = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(targets, s, pts[:, k]) for k in range(pts.shape[1])], axis=1)


def trace_rmse(pred: Trace, gt: Trace, K: CameraIntrinsics, n_points: int = 64) -> float:
    """RMSE between arc-length resampled 3D traces over the gt bounding-box diagonal."""
    if len(pred) < 2 or len(gt) < 2:
        raise ValueError("both traces need at least two points")
    g3 = backproject_trace(gt, K)
    extent = float(np.linalg.norm(g3.max(axis=0) - g3.min(axis=0)))
    if extent == 0.0:
        raise ValueError("ground-truth trace has zero extent")
    a = resample_polyline(backproject_trace(pred, K), n_points)
    b = resample_polyline(g3, n_points)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)))) / extent


@dataclass
class TraceEvaluation:
    start_ok: bool
    end_ok: bool
    collision_free: bool
    start_distance: float = math.nan
    collisions: list[int] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.start_ok and self.end_ok and self.collision_free


def densify(pts: np.ndarray, step: float, min_samples: int = 16) -> np.ndarray:
    """Points along each segment at spacing <= ``step`` (at least ``min_samples`` per segment)."""
    chunks = []
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.linalg.norm(b - a))
        n = max(min_samples, math.ceil(length / step) + 1 if step > 0 else 0)
        t = np.linspace(0.0, 1.0, n)[:, None]
        chunks.append(a + t * (b - a))
    if not chunks:
        return pts.copy()
    return np.concatenate(chunks)


def evaluate_trace(
    trace: Trace, scene: SceneSpec, K: CameraIntrinsics, exact: bool = False
) -> TraceEvaluation:
    """Grasp (start), placement (end) and collision checks of one predicted trace.

    With ``exact=True`` segments are tested against the inflated obstacle boxes
    analytically instead of by dense sampling.
    """
    if len(trace) < 2:
        raise ValueError("a trace needs at least two points")
    pts = backproject_trace(trace, K)

    start_dist = math.nan
    if scene.check_start:
        if len(scene.target_points) == 0:
            raise ValueError("start check requested but the target point cloud is empty")
        start_dist = float(np.min(np.linalg.norm(scene.target_points - pts[0], axis=1)))
        start_ok = start_dist <= scene.start_radius
    else:
        start_ok = True

    end_ok = bool(scene.destination_box.inflated(scene.end_margin).contains(pts[-1])[0])

    boxes = [b.inflated(scene.clearance) for b in scene.obstacle_boxes]
    hits: list[int] = []
    if exact:
        for j, box in enumerate(boxes):
            if any(box.intersects_segment(a, b) for a, b in zip(pts[:-1], pts[1:])):
                hits.append(j)
    else:
        dense = densify(pts, scene.clearance / 2)
        hits = [j for j, box in enumerate(boxes) if box.contains(dense).any()]
    return TraceEvaluation(start_ok, end_ok, not hits, start_dist, hits)
