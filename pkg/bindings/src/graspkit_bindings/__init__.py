"""Array-first bindings over graspkit for training loops.

Everything here is a pure batch function over contiguous float64 buffers:
no callbacks cross the boundary, no state is kept between calls, and the
outputs are bit-identical to the library/CLI path (the heavy lifting simply
delegates to graspkit). Buffers are used in place, never copied; anything
non-contiguous or wrongly typed is rejected up front with a typed error.
Calls are independent, so hosts may invoke them from multiple threads;
numpy drops the interpreter lock inside the numeric kernels.

Versioned in lockstep with graspkit (enforced at import).
"""

from typing import Dict, Mapping, Optional

import numpy as np

import graspkit
from graspkit import (
    GraspSet,
    GripperModel,
    MetricConfig,
    Scene,
    ViewConfig,
    poses_from_array,
)
from graspkit.dataset import select_candidates as _select_candidates
from graspkit.metrics import evaluate as _evaluate
from graspkit.pruning import PruneConfig, prune_labels
from graspkit.views import scene_to_tokens as _scene_to_tokens

__version__ = "0.1.0"

if graspkit.__version__ != __version__:
    raise ImportError(
        f"graspkit-bindings {__version__} requires graspkit {__version__}, "
        f"found {graspkit.__version__}"
    )

__all__ = [
    "BindingError",
    "ShapeError",
    "DtypeError",
    "ContiguityError",
    "evaluate",
    "prune",
    "select_candidates",
    "scene_to_tokens",
]


class BindingError(ValueError):
    """Base class for buffer validation failures."""


class ShapeError(BindingError):
    pass


class DtypeError(BindingError):
    pass


class ContiguityError(BindingError):
    pass


def _view(buf, name: str, ndim: int, last_dim: Optional[int] = None) -> np.ndarray:
    """Validate a buffer without copying it."""
    if not isinstance(buf, np.ndarray):
        raise DtypeError(f"{name} must be a numpy array, got {type(buf).__name__}")
    if buf.dtype != np.float64:
        raise DtypeError(f"{name} must be float64, got {buf.dtype}")
    if not buf.flags["C_CONTIGUOUS"]:
        raise ContiguityError(f"{name} must be C-contiguous")
    if buf.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {buf.shape}")
    if last_dim is not None and (buf.shape[-1] != last_dim or buf.shape[0] == 0):
        raise ShapeError(
            f"{name} must have shape (n>=1, {last_dim}), got {buf.shape}"
        )
    return buf


def _pose_set(vectors: np.ndarray, name: str,
              confidences: Optional[np.ndarray] = None) -> GraspSet:
    _view(vectors, name, ndim=2, last_dim=7)
    conf = None
    if confidences is not None:
        _view(confidences, f"{name} confidences", ndim=1)
        if confidences.shape[0] != vectors.shape[0]:
            raise ShapeError(
                f"{name} confidences length {confidences.shape[0]} does not "
                f"match {vectors.shape[0]} poses"
            )
        conf = tuple(float(c) for c in confidences)
    return GraspSet(poses_from_array(vectors, validate=False), conf)


def evaluate(
    pred_poses: np.ndarray,
    confidences: np.ndarray,
    gt_poses: np.ndarray,
    scene_points: np.ndarray,
    config: Optional[Mapping] = None,
) -> Dict[str, float]:
    """Full metric suite on raw buffers; values equal the library path.

    pred_poses: (n, 7), confidences: (n,), gt_poses: (m, 7),
    scene_points: (p, 3). config may carry "thresholds",
    "include_width_in_distance", and "gripper" (GripperModel kwargs).
    """
    cfg = dict(config or {})
    preds = _pose_set(pred_poses, "pred_poses", confidences)
    gts = _pose_set(gt_poses, "gt_poses")
    pts = _view(scene_points, "scene_points", ndim=2, last_dim=3)
    scene = Scene(pts, np.zeros_like(pts))
    metric_cfg = MetricConfig(
        thresholds=tuple(cfg.get("thresholds", (0.4, 0.3, 0.2))),
        include_width_in_distance=bool(cfg.get("include_width_in_distance", False)),
    )
    model = GripperModel(**cfg.get("gripper", {}))
    return _evaluate(preds, gts, scene, metric_cfg, model).to_json()


def prune(poses: np.ndarray, cap: int = 100) -> np.ndarray:
    """Indices of the poses kept by diversity pruning, in original order."""
    gs = _pose_set(poses, "poses")
    kept = prune_labels(gs, PruneConfig(cap=cap))
    index_of = {id(p): i for i, p in enumerate(gs)}
    return np.asarray([index_of[id(p)] for p in kept], dtype=np.int64)


def select_candidates(
    poses: np.ndarray,
    k: int,
    mode: str = "top_confidence",
    seed: int = 0,
    confidences: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Indices of the selected candidates, in original order."""
    gs = _pose_set(poses, "poses", confidences)
    out = _select_candidates(gs, k, mode=mode, seed=seed)
    index_of = {id(p): i for i, p in enumerate(gs)}
    return np.asarray([index_of[id(p)] for p in out], dtype=np.int64)


def scene_to_tokens(
    points: np.ndarray,
    colors: np.ndarray,
    config: Optional[Mapping] = None,
) -> Dict[str, np.ndarray]:
    """Multi-view token pipeline on raw buffers.

    Returns {"positions": (t, 3), "features": (t, f), "view_ids": (t,)};
    pooled tokens are always valid, so no mask is emitted.
    """
    pts = _view(points, "points", ndim=2, last_dim=3)
    cols = _view(colors, "colors", ndim=2, last_dim=3)
    if cols.shape != pts.shape:
        raise ShapeError(
            f"colors shape {cols.shape} must match points shape {pts.shape}"
        )
    cfg = dict(config or {})
    tokens = _scene_to_tokens(Scene(pts, cols), ViewConfig(**cfg))
    if not tokens:
        return {
            "positions": np.zeros((0, 3)),
            "features": np.zeros((0, 0)),
            "view_ids": np.zeros(0, dtype=np.int64),
        }
    return {
        "positions": np.stack([t.position for t in tokens]),
        "features": np.stack([t.feature for t in tokens]),
        "view_ids": np.asarray([t.view_id for t in tokens], dtype=np.int64),
    }
