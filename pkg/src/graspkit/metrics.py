"""Evaluation metrics: coverage rate, pose-set EMD, collision-free rate.

Coverage rate at threshold theta is the fraction of ground-truth poses with
at least one prediction within SE(3) distance theta. EMD is the exact
optimal-transport cost between the two pose sets as uniform discrete
distributions under the same ground distance. CFR checks a parametric
parallel-jaw gripper volume against the scene points, and EW-CFR discounts
it by distributional error: CFR / (1 + EMD). That last formula is a toolkit
convention -- the metric's published definition states intent, not math --
so EW-CFR values are not comparable against published tables.

Gripper geometry convention: the grasp frame closes along local +y, fingers
extend along local +z and are centered on the grasp point, the palm block
sits behind them at -z. The palm cross-section is fixed by the model
(finger_height squared) so box volumes never depend on the pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix

from .errors import EmptyGroundTruthError, EmptyPredictionError
from .geometry import GraspPose, GraspSet, poses_to_array
from .views import Scene

__all__ = [
    "MetricConfig",
    "GripperModel",
    "OrientedBox",
    "MetricReport",
    "pairwise_pose_distance",
    "coverage_rate",
    "emd",
    "gripper_boxes",
    "collision_free",
    "cfr",
    "ew_cfr",
    "evaluate",
]


@dataclass(frozen=True)
class MetricConfig:
    """Thresholds for CR@theta (strictly decreasing) and the width flag."""

    thresholds: Tuple[float, ...] = (0.4, 0.3, 0.2)
    include_width_in_distance: bool = False

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        if not th or any(t <= 0 for t in th):
            raise ValueError("thresholds must be strictly positive")
        if any(a <= b for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        object.__setattr__(self, "thresholds", th)


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw gripper dimensions in normalized scene units."""

    finger_length: float = 0.06
    finger_thickness: float = 0.01
    finger_height: float = 0.02
    palm_depth: float = 0.02
    base_width_margin: float = 0.0

    def __post_init__(self):
        for name in ("finger_length", "finger_thickness", "finger_height", "palm_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.base_width_margin < 0:
            raise ValueError("base_width_margin must be >= 0")


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """A rigid box: world center, per-axis half extents, rotation (axis columns)."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict interior test per point; face points are outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        local = (pts - self.center) @ self.rotation
        return np.all(np.abs(local) < self.half_extents, axis=1)

    def corners(self) -> np.ndarray:
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return self.center + (signs * self.half_extents) @ self.rotation.T

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_extents))


@dataclass(frozen=True)
class MetricReport:
    """Per-scene metric values; cr_at maps threshold -> coverage."""

    cr_at: Dict[float, float]
    emd: float
    cfr: float
    ew_cfr: float

    def to_json(self) -> Dict[str, float]:
        out = {f"cr@{t:g}": v for t, v in self.cr_at.items()}
        out.update({"emd": self.emd, "cfr": self.cfr, "ew_cfr": self.ew_cfr})
        return out


def pairwise_pose_distance(
    a: GraspSet, b: GraspSet, include_width: bool = False
) -> np.ndarray:
    """(len(a), len(b)) matrix of encoded-vector Euclidean distances."""
    n_comp = 7 if include_width else 6
    va = poses_to_array(a)[:, :n_comp]
    vb = poses_to_array(b)[:, :n_comp]
    diff = va[:, None, :] - vb[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def coverage_rate(
    preds: GraspSet, gts: GraspSet, theta: float, include_width: bool = False
) -> float:
    """Fraction of ground-truth poses within theta of some prediction."""
    if len(gts) == 0:
        raise EmptyGroundTruthError("coverage rate needs ground-truth poses")
    if theta <= 0:
        raise ValueError("theta must be positive")
    if len(preds) == 0:
        return 0.0
    d = pairwise_pose_distance(preds, gts, include_width)
    return float(np.count_nonzero(d.min(axis=0) <= theta)) / len(gts)


def emd(preds: GraspSet, gts: GraspSet, include_width: bool = False) -> float:
    """Exact optimal-transport cost between the sets as uniform distributions.

    Equal sizes reduce to an assignment problem (mean matched distance);
    unequal sizes solve the uniform-marginal transport LP, each pose
    carrying mass 1/|set|. Returns the total transported cost.
    """
    if len(preds) == 0 or len(gts) == 0:
        raise ValueError("emd needs two nonempty pose sets")
    d = pairwise_pose_distance(preds, gts, include_width)
    n, m = d.shape
    if n == m:
        rows, cols = linear_sum_assignment(d)
        # fsum is exactly rounded, so emd(a, b) == emd(b, a) bit-for-bit
        return math.fsum(d[rows, cols]) / n
    # Uniform-mass transport LP: minimize <d, g>, rows sum to 1/n, cols to 1/m.
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n)
    var = np.arange(n * m)
    a_eq = coo_matrix(
        (
            np.ones(2 * n * m),
            (np.concatenate([row_idx, n + col_idx]), np.concatenate([var, var])),
        ),
        shape=(n + m, n * m),
    )
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(d.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def gripper_boxes(
    pose: GraspPose, model: GripperModel
) -> Tuple[OrientedBox, OrientedBox, OrientedBox]:
    """The (left finger, right finger, palm) boxes in the world frame.

    Finger inner faces sit at +/-(width + margin)/2 along the closing axis;
    the palm block is immediately behind the fingers.
    """
    half_gap = 0.5 * (pose.width + model.base_width_margin)
    t, length, h, d = (
        model.finger_thickness,
        model.finger_length,
        model.finger_height,
        model.palm_depth,
    )
    finger_half = np.array([h / 2, t / 2, length / 2])
    palm_half = np.array([h / 2, h / 2, d / 2])
    centers_local = np.array(
        [
            [0.0, -(half_gap + t / 2), 0.0],
            [0.0, +(half_gap + t / 2), 0.0],
            [0.0, 0.0, -(length / 2 + d / 2)],
        ]
    )
    centers = pose.translation + centers_local @ pose.rotation.T
    return (
        OrientedBox(centers[0], finger_half, pose.rotation),
        OrientedBox(centers[1], finger_half, pose.rotation),
        OrientedBox(centers[2], palm_half, pose.rotation),
    )


def collision_free(pose: GraspPose, scene: Scene, model: GripperModel) -> bool:
    """True iff no scene point lies strictly inside any gripper box.

    Points between the fingers are the grasped matter and never count.
    """
    if len(scene.points) == 0:
        raise ValueError("scene must be nonempty")
    for box in gripper_boxes(pose, model):
        if bool(box.contains(scene.points).any()):
            return False
    return True


def cfr(preds: GraspSet, scene: Scene, model: GripperModel) -> float:
    """Fraction of predictions whose gripper volume is collision-free."""
    if len(preds) == 0:
        raise EmptyPredictionError("collision-free rate needs predictions")
    free = sum(1 for p in preds if collision_free(p, scene, model))
    return free / len(preds)


def ew_cfr(
    preds: GraspSet,
    gts: GraspSet,
    scene: Scene,
    model: GripperModel,
    include_width: bool = False,
) -> float:
    """CFR discounted by distributional error: CFR / (1 + EMD)."""
    return cfr(preds, scene, model) / (1.0 + emd(preds, gts, include_width))


def evaluate(
    preds: GraspSet,
    gts: GraspSet,
    scene: Scene,
    config: Optional[MetricConfig] = None,
    model: Optional[GripperModel] = None,
) -> MetricReport:
    """Full per-scene metric report; deterministic."""
    cfg = config or MetricConfig()
    grip = model or GripperModel()
    iw = cfg.include_width_in_distance
    cr = {t: coverage_rate(preds, gts, t, iw) for t in cfg.thresholds}
    e = emd(preds, gts, iw)
    c = cfr(preds, scene, grip)
    return MetricReport(cr_at=cr, emd=e, cfr=c, ew_cfr=c / (1.0 + e))
