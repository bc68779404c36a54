"""Synthetic trajectories with abstract view handles for exercising the pipeline."""

from __future__ import annotations

import numpy as np

from .trajectory import Trajectory

VIEWS = ("cam_high", "cam_left_wrist", "cam_right_wrist")

TASKS = (
    "stack the three bowls",
    "open the top drawer",
    "fold the pants",
    "put the cup on the plate",
    "clean the table",
    "hang the towel on the rack",
)


def simulate(
    n_traj: int,
    length_range: tuple[int, int] = (50, 500),
    segment_range: tuple[int, int] = (2, 8),
    seed: int = 0,
) -> list[Trajectory]:
    """Random keyframe-segmented trajectories, deterministic in ``seed``.

    ``segment_range`` bounds N, the number of keyframe segments.
    """
    lmin, lmax = length_range
    nmin, nmax = segment_range
    if n_traj < 0:
        raise ValueError("n_traj must be >= 0")
    if lmin < 2 or lmax < lmin:
        raise ValueError(f"invalid length range {length_range}")
    if nmin < 1 or nmax < nmin:
        raise ValueError(f"invalid segment range {segment_range}")
    if nmin > lmin - 1:
        raise ValueError(f"{nmin} segments do not fit in {lmin} frames")

    rng = np.random.default_rng(seed)
    out = []
    for j in range(n_traj):
        L = int(rng.integers(lmin, lmax + 1))
        N = int(rng.integers(nmin, min(nmax, L - 1) + 1))
        inner = np.sort(rng.choice(np.arange(1, L - 1), size=N - 1, replace=False)) if N > 1 else []
        keyframes = (0, *(int(k) for k in inner), L - 1)
        task = TASKS[int(rng.integers(len(TASKS)))]
        out.append(Trajectory(f"sim_{seed}_{j:05d}", task, VIEWS, L, keyframes))
    return out
