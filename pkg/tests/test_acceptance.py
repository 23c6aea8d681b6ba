"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion.
"""

import functools
import itertools
import json
import math
import time

import numpy as np
import pytest

from graspkit import (
    CostMatrix,
    GraspPose,
    GraspSet,
    GripperModel,
    Instruction,
    PoseVector,
    PruneConfig,
    Scene,
    build_property_qa,
    build_cot_sequence,
    collision_free,
    coverage_rate,
    default_library,
    emd,
    focal_loss,
    focal_loss_grad,
    gripper_boxes,
    hungarian,
    l1_regression_grad,
    l1_regression_loss,
    make_virtual_cameras,
    parse_answer,
    patchify,
    pose_from_vector,
    pose_to_vector,
    prune_labels,
    render_view,
    se3_distance,
    validate_instruction,
    voxel_pool,
)
from graspkit.cli import main as cli_main
from graspkit.losses import Assignment, build_cost_matrix
from graspkit.views import VisualToken, back_project
from graspkit.cot import PROPERTY_GROUPS
from _fixtures import (
    make_benchmark,
    random_grasp_set,
    random_pose,
    random_pose_vector,
)
from test_metrics import oracle_point_inside_gripper
from test_pruning import bimodal_set


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name}")
        return wrapper
    return deco


@criterion("hungarian optimality: brute-force exact (sizes 2-6), 512x512 < 1 s")
def test_hungarian_optimality():
    rng = np.random.default_rng(101)
    for size in range(2, 7):
        for _ in range(100):
            c = rng.uniform(0, 10, (size, size))
            got = hungarian(CostMatrix(c))
            mine = sum(c[i, j] for i, j in got.pairs)
            best = min(
                sum(c[i, p[i]] for i in range(size))
                for p in itertools.permutations(range(size))
            )
            assert mine == best
    big = CostMatrix(rng.uniform(0, 1, (512, 512)))
    start = time.perf_counter()
    got = hungarian(big)
    elapsed = time.perf_counter() - start
    assert len(got.pairs) == 512
    assert elapsed < 1.0, f"512x512 took {elapsed:.3f}s"


@criterion("emd: permutation-minimum oracle to 1e-9; emd(A,A)=0 and symmetry exact")
def test_emd_oracle():
    rng = np.random.default_rng(102)
    for _ in range(50):
        a = random_grasp_set(rng, 6)
        b = random_grasp_set(rng, 6)
        d = np.array([[se3_distance(p, g) for g in b] for p in a])
        best = min(
            sum(d[i, p[i]] for i in range(6)) / 6
            for p in itertools.permutations(range(6))
        )
        assert abs(emd(a, b) - best) < 1e-9
        assert emd(a, b) == emd(b, a)
        assert emd(a, a) == 0.0


@criterion("coverage rate: double-loop oracle exact on 100 fixtures; CR monotone")
def test_coverage_rate_oracle_and_monotonicity():
    rng = np.random.default_rng(103)
    thresholds = (0.4, 0.3, 0.2)
    for _ in range(100):
        preds = random_grasp_set(rng, int(rng.integers(3, 20)))
        gts = random_grasp_set(rng, int(rng.integers(2, 12)))
        theta = float(rng.uniform(0.1, 1.5))
        covered = sum(
            1 for g in gts if min(se3_distance(p, g) for p in preds) <= theta
        )
        assert coverage_rate(preds, gts, theta) == covered / len(gts)
        values = [coverage_rate(preds, gts, t) for t in thresholds]
        assert values[0] >= values[1] >= values[2]


@criterion("collision: per-point oriented-box oracle exact on 1000 fixtures; "
           "seeded cfr fixture = 0.7")
def test_collision_oracle_and_cfr():
    rng = np.random.default_rng(104)
    model = GripperModel()
    for _ in range(1000):
        pose = random_pose(rng)
        pts = pose.translation + rng.uniform(-0.1, 0.1, (12, 3))
        scene = Scene(pts, np.zeros_like(pts))
        expected = not any(oracle_point_inside_gripper(p, pose, model) for p in pts)
        assert collision_free(pose, scene, model) == expected

    poses = [random_pose(rng) for _ in range(10)]
    pts = [np.array([9.0, 9.0, 9.0])]
    for pose in poses[:3]:
        left, _, _ = gripper_boxes(pose, model)
        pts.append(left.center)
    scene = Scene(np.array(pts), np.zeros((len(pts), 3)))
    from graspkit import cfr
    assert cfr(GraspSet(tuple(poses)), scene, model) == pytest.approx(0.7)


@criterion("gradients: focal and L1 match central differences (rel err < 1e-4); "
           "focal(g=0, a=0.5) = 0.5 x cross-entropy to 1e-12")
def test_gradient_checks():
    rng = np.random.default_rng(105)
    h = 1e-5

    checked = 0
    while checked < 100:
        p = rng.uniform(0.05, 0.95, 6)
        y = rng.integers(0, 2, 6)
        alpha = float(rng.uniform(0.1, 0.9))
        gamma = float(rng.choice([0.0, 1.0, 2.0]))
        grad = focal_loss_grad(p, y, alpha, gamma)
        k = int(rng.integers(0, 6))
        dp = np.zeros(6)
        dp[k] = h
        numeric = (focal_loss(p + dp, y, alpha, gamma)
                   - focal_loss(p - dp, y, alpha, gamma)) / (2 * h)
        assert abs(numeric - grad[k]) / max(1.0, abs(numeric)) < 1e-4
        checked += 1

    pc = rng.uniform(0.01, 0.99, 200)
    yc = rng.integers(0, 2, 200)
    ce = np.mean([-math.log(pi if yi else 1 - pi) for pi, yi in zip(pc, yc)])
    assert abs(focal_loss(pc, yc, alpha=0.5, gamma=0.0) - 0.5 * ce) < 1e-12

    checked = 0
    names = ("x", "y", "z", "rx", "ry", "rz", "width")
    while checked < 100:
        va = random_pose_vector(rng, margin=0.1)
        vb = random_pose_vector(rng, margin=0.1)
        vals_a = {n: getattr(va, n) for n in names}
        for n in names:  # keep away from the nonsmooth equal-component locus
            if abs(vals_a[n] - getattr(vb, n)) < 0.02:
                vals_a[n] = getattr(vb, n) + 0.05
        va = PoseVector(**vals_a)
        preds = GraspSet((pose_from_vector(va),))
        gts = GraspSet((pose_from_vector(vb),))
        assign = Assignment(pairs=((0, 0),), unmatched_preds=())
        grad = l1_regression_grad(preds, gts, assign)
        k = int(rng.integers(0, 7))

        def loss_at(delta):
            bumped = dict(vals_a)
            bumped[names[k]] += delta
            return l1_regression_loss(
                GraspSet((pose_from_vector(PoseVector(**bumped)),)), gts, assign
            )

        numeric = (loss_at(h) - loss_at(-h)) / (2 * h)
        assert abs(numeric - grad[0, k]) / max(1.0, abs(numeric)) < 1e-4
        checked += 1


@criterion("geometry round trips: 10k encode/decode to 1e-9; render/back-project "
           "within one-pixel angular tolerance; voxel mass to 1e-9 + count parity")
def test_geometry_round_trips():
    rng = np.random.default_rng(106)
    for _ in range(10000):
        v = random_pose_vector(rng)
        g = pose_from_vector(v)
        fresh = GraspPose(g.rotation, g.translation, g.width)  # drop the cache
        v2 = pose_to_vector(fresh)
        assert np.max(np.abs(v.as_array() - v2.as_array())) < 1e-9

    for _ in range(25):
        point = rng.uniform(-0.2, 0.2, 3)
        anchors = np.array([[0.4, 0, 0], [-0.4, 0, 0]])
        ring_scene = Scene(np.vstack([point, anchors]), np.full((3, 3), 0.5))
        cam = make_virtual_cameras(ring_scene, 4, resolution=96)[2]
        img = render_view(Scene(point[None, :], np.full((1, 3), 0.5)), cam, 1)
        tokens = [t for t in back_project(patchify(img, 1), cam) if t.valid]
        assert len(tokens) == 1
        depth = float(np.linalg.norm(point - cam.position))
        tol = 1e-6 + depth / cam.focal_px
        assert np.linalg.norm(tokens[0].position - point) <= tol

    tokens = [
        VisualToken(rng.uniform(-1, 1, 3), rng.uniform(0, 1, 3), 0, True)
        for _ in range(800)
    ]
    voxel = 0.23
    pooled = voxel_pool(tokens, voxel)
    counts = {}
    for t in tokens:
        key = tuple(np.floor(t.position / voxel).astype(int))
        counts[key] = counts.get(key, 0) + 1
    assert len(pooled) == len(counts)
    mass_out = sum(counts[k] * tok.feature for k, tok in zip(sorted(counts), pooled))
    mass_in = sum(t.feature for t in tokens)
    assert np.max(np.abs(mass_out - mass_in)) < 1e-9


@criterion("pruning: size min(n,100); idempotent and deterministic; "
           "bimodal cap-2 keeps one pose per cluster")
def test_pruning():
    rng = np.random.default_rng(107)
    config = PruneConfig(cap=100)
    for n in (5, 99, 100, 101, 700):
        gs = random_grasp_set(rng, n)
        out = prune_labels(gs, config)
        assert len(out) == min(n, 100)
        again = prune_labels(out, config)
        assert again is out
        assert prune_labels(gs, config).poses == out.poses

    gs, _ = bimodal_set(np.random.default_rng(108))
    out = prune_labels(gs, PruneConfig(cap=2))
    sides = {int(pose_to_vector(p).x > 0) for p in out}
    assert sides == {0, 1}


@criterion("CoT: 1000 render/parse inversions; zero-weight slots = 10 x targets; "
           "drive example accepted, explicit name rejected")
def test_cot_templates():
    rng = np.random.default_rng(109)
    lib = default_library()
    objects = ["glass cup", "mug", "remote control", "vase", "spoon"]
    for _ in range(1000):
        name = objects[int(rng.integers(0, len(objects)))]
        group = PROPERTY_GROUPS[int(rng.integers(0, 3))]
        values = {
            c: str(rng.choice(lib.descriptors(group, c)))
            for c in lib.characteristics(group)
        }
        rec = build_property_qa(name, group, lib).fill(values)
        parsed = parse_answer(rec.render(), rec, lib)
        assert {c: parsed.values[c] for c in values} == values

    for k in (1, 2, 3, 7):
        seq = build_cot_sequence([f"o{i}" for i in range(k)])
        assert sum(r.zero_weight_slot_count() for r in seq) == 10 * k

    drive = Instruction(
        text="It's sunny outside and I want to go for a drive",
        scene_id="s", target_names=("car keys", "sunglasses"),
    )
    assert validate_instruction(drive).accepted
    explicit = Instruction(
        text="Grasp the black car keys", scene_id="s", target_names=("car keys",),
    )
    assert not validate_instruction(explicit).accepted


@criterion("end-to-end: cmd_eval byte-identical across runs on the 20-scene "
           "fixture set, < 60 s single-threaded")
def test_end_to_end_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("GRASPKIT_THREADS", "1")
    scene_dir, anno, pred = make_benchmark(
        tmp_path / "bench", n_scenes=20, seed=42, perturb=0.08
    )
    blobs = []
    start = time.perf_counter()
    for run in ("r1", "r2"):
        out = tmp_path / run
        code = cli_main([
            "eval", str(pred), str(anno), str(scene_dir),
            "--out", str(out), "--no-figures",
        ])
        assert code == 0
        blobs.append((
            (out / "per_scene.jsonl").read_bytes(),
            (out / "aggregate.json").read_bytes(),
            (out / "per_scene.csv").read_bytes(),
        ))
    elapsed = time.perf_counter() - start
    assert blobs[0] == blobs[1]
    assert elapsed < 60.0, f"two runs took {elapsed:.1f}s"
    agg = json.loads(blobs[0][1])
    for key in ("cr@0.4", "cr@0.3", "cr@0.2", "emd", "cfr", "ew_cfr"):
        assert key in agg
