"""Clustering-style pruning that caps grasp labels while keeping diversity.

Dense annotation sets (some objects carry 700+ grasps, many differing only
by rotation) are reduced to a fixed cap by greedy farthest-point sampling
under the SE(3) pose distance, seeded at the set medoid. Greedy FPS directly
suppresses near-duplicate rotations and, unlike iterative clustering, is
deterministic without any random-seed contract: ties always break toward
the smaller original index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SubsetError
from .geometry import GraspPose, GraspSet, poses_to_array
from .metrics import coverage_rate

__all__ = ["PruneConfig", "prune_labels", "pruning_coverage"]


@dataclass(frozen=True)
class PruneConfig:
    """cap: retained poses per set; seed_rule names the deterministic seeding."""

    cap: int = 100
    seed_rule: str = "medoid-start"

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if self.seed_rule != "medoid-start":
            raise ValueError(f"unknown seed_rule {self.seed_rule!r}")


def _pose_key(p: GraspPose) -> bytes:
    return p.rotation.tobytes() + p.translation.tobytes() + np.float64(p.width).tobytes()


def prune_labels(labels: GraspSet, config: PruneConfig = PruneConfig()) -> GraspSet:
    """Select at most config.cap poses by medoid-seeded farthest-point sampling.

    Sets at or under the cap pass through unchanged. Otherwise the pose
    minimizing total distance to the rest seeds the selection, and each step
    adds the pose farthest from everything already kept. The returned subset
    preserves the input ordering of the survivors.
    """
    if len(labels) == 0:
        raise ValueError("labels must be nonempty")
    if len(labels) <= config.cap:
        return labels
    vecs = poses_to_array(labels)[:, :6]
    diff = vecs[:, None, :] - vecs[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    medoid = int(np.argmin(dist.sum(axis=1)))

    selected = [medoid]
    d_min = dist[medoid].copy()
    d_min[medoid] = -np.inf
    for _ in range(config.cap - 1):
        nxt = int(np.argmax(d_min))  # argmax breaks ties toward lower index
        selected.append(nxt)
        d_min = np.minimum(d_min, dist[nxt])
        d_min[nxt] = -np.inf
    return labels.subset(sorted(selected))


def pruning_coverage(original: GraspSet, pruned: GraspSet, theta: float) -> float:
    """Fraction of original labels within theta of some retained label."""
    keys = {_pose_key(p) for p in original}
    for p in pruned:
        if _pose_key(p) not in keys:
            raise SubsetError("pruned set contains a pose absent from the original")
    return coverage_rate(pruned, original, theta)
