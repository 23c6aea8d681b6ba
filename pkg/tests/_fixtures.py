"""Shared random fixtures and the synthetic benchmark generator."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from graspkit import (
    AnnotationRecord,
    GraspPose,
    GraspSet,
    PoseVector,
    PredictionRecord,
    Scene,
    SceneRecord,
    pose_from_vector,
    store_scene,
    write_annotations,
    write_predictions,
)


def random_pose_vector(rng: np.random.Generator, margin: float = 0.0) -> PoseVector:
    """A uniformly random in-range vector; margin shrinks every bound."""
    lo, hi = -1.0 + margin, 1.0 - margin
    return PoseVector(
        x=rng.uniform(lo, hi),
        y=rng.uniform(lo, hi),
        z=rng.uniform(lo, hi),
        rx=rng.uniform(lo, hi),
        ry=rng.uniform(lo, hi),
        rz=rng.uniform(margin, math.pi - margin),
        width=rng.uniform(0.0, 0.1),
    )


def random_pose(rng: np.random.Generator, margin: float = 0.0) -> GraspPose:
    return pose_from_vector(random_pose_vector(rng, margin))


def random_grasp_set(
    rng: np.random.Generator, n: int, with_confidences: bool = False
) -> GraspSet:
    poses = tuple(random_pose(rng) for _ in range(n))
    conf = None
    if with_confidences:
        conf = tuple(float(c) for c in rng.uniform(0, 1, n))
    return GraspSet(poses, conf)


def random_scene(rng: np.random.Generator, n: int = 300, extent: float = 0.4) -> Scene:
    pts = rng.uniform(-extent, extent, (n, 3))
    cols = rng.uniform(0, 1, (n, 3))
    return Scene(pts, cols)


def make_benchmark(
    out_dir: Path,
    n_scenes: int = 20,
    seed: int = 7,
    perturb: float = 0.0,
    n_objects: int = 2,
    labels_per_object: int = 12,
):
    """Write a synthetic scene/annotation/prediction benchmark.

    Predictions are the ground-truth poses perturbed in vector space by
    `perturb` (0 keeps them identical), each with a confidence score.
    Returns (scene_dir, anno_path, pred_path).
    """
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    scene_dir = out_dir / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)
    annos = {}
    preds = []
    for idx in range(n_scenes):
        sid = f"scene{idx:03d}"
        scene = random_scene(rng, n=250)
        record = SceneRecord(
            scene_id=sid,
            scene=scene,
            description=f"synthetic tabletop layout {idx}",
            objects=tuple(
                (f"obj{j}", f"category{j}") for j in range(n_objects)
            ),
        )
        store_scene(scene_dir / f"{sid}.ply", record)

        labels = {}
        gt_vectors = []
        for j in range(n_objects):
            vecs = [random_pose_vector(rng, margin=0.05)
                    for _ in range(labels_per_object)]
            labels[f"obj{j}"] = GraspSet(tuple(pose_from_vector(v) for v in vecs))
            gt_vectors.extend(vecs)
        annos[sid] = AnnotationRecord(scene_id=sid, labels=labels)

        pred_poses = []
        for v in gt_vectors:
            arr = v.as_array()
            if perturb:
                arr = arr + rng.uniform(-perturb, perturb, 7)
                arr[:5] = np.clip(arr[:5], -1, 1)
                arr[5] = np.clip(arr[5], 0, math.pi)
                arr[6] = max(arr[6], 0.0)
            pred_poses.append(pose_from_vector(PoseVector.from_sequence(arr)))
        conf = tuple(float(c) for c in rng.uniform(0.5, 1.0, len(pred_poses)))
        preds.append(PredictionRecord(
            scene_id=sid, instruction_id="0",
            poses=GraspSet(tuple(pred_poses), conf),
        ))

    anno_path = out_dir / "labels.anno.jsonl"
    pred_path = out_dir / "model.pred.jsonl"
    write_annotations(anno_path, annos)
    write_predictions(pred_path, preds)
    return scene_dir, anno_path, pred_path
