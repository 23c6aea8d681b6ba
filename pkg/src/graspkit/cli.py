"""Batch command-line surface for dataset processing and evaluation runs.

Subcommands: tokens (scene -> visual-token JSONL), prune (cap annotation
labels), eval (metric reports + figures), qa (CoT records + instruction
prompt), validate (flexible-instruction acceptance).

Exit codes are stable: 0 ok, 2 format error, 3 degenerate input, 4 id
mismatch, 5 unknown target. Every subcommand is deterministic given its
flags and inputs. GRASPKIT_THREADS bounds the eval worker pool (default 1);
reports are written once, ordered by scene id, after all workers finish.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .cot import (
    build_cot_sequence,
    build_instruction_prompt,
    parse_answer,
    QARecord,
    validate_instruction,
)
from .dataset import (
    AnnotationRecord,
    filter_valid_poses,
    load_annotations,
    load_instructions,
    load_predictions,
    load_scene,
    select_candidates,
    write_annotations,
    write_qa_records,
    write_tokens,
)
from .errors import (
    DegenerateSceneError,
    FormatError,
    GraspkitError,
    UnknownDescriptorError,
    UnknownTargetError,
    ValidationError,
)
from .metrics import GripperModel, MetricConfig, evaluate
from .pruning import PruneConfig, prune_labels
from .report import metric_columns, render_figures, write_per_scene_csv
from .views import back_project, make_virtual_cameras, patchify, render_view, voxel_pool

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_DEGENERATE = 3
EXIT_ID_MISMATCH = 4
EXIT_UNKNOWN_TARGET = 5


class IdMismatch(GraspkitError):
    pass


def _thresholds(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("threshold list is empty")
    return values


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _worker_count() -> int:
    raw = os.environ.get("GRASPKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# tokens
# ---------------------------------------------------------------------------

def cmd_tokens(args: argparse.Namespace) -> int:
    record = load_scene(args.scene)
    scene = record.scene
    voxel_size = args.voxel_size
    if voxel_size is None:
        voxel_size = scene.bbox_diagonal / 32.0
        if voxel_size == 0.0:
            raise DegenerateSceneError("scene bounding box collapses to a point")
    cameras = make_virtual_cameras(scene, args.views, args.resolution)
    tokens = []
    per_view = []
    for vid, cam in enumerate(cameras):
        image = render_view(scene, cam, args.splat)
        grid = patchify(image, args.patch_size)
        view_tokens = back_project(grid, cam, view_id=vid)
        per_view.append(sum(1 for t in view_tokens if t.valid))
        tokens.extend(view_tokens)
    pooled = voxel_pool(tokens, voxel_size)
    out = Path(args.out) if args.out else Path(args.scene).with_suffix(".tokens.jsonl")
    write_tokens(out, pooled)
    print(f"scene {record.scene_id}: {len(pooled)} tokens -> {out}")
    for vid, count in enumerate(per_view):
        print(f"  view {vid}: {count} valid patches")
    return EXIT_OK


# ---------------------------------------------------------------------------
# prune
# ---------------------------------------------------------------------------

def cmd_prune(args: argparse.Namespace) -> int:
    records = load_annotations(args.annotations)
    config = PruneConfig(cap=args.cap)
    pruned = {}
    before = after = 0
    for sid, rec in records.items():
        labels = {}
        for oid, gs in rec.labels.items():
            kept = prune_labels(gs, config)
            before += len(gs)
            after += len(kept)
            labels[oid] = kept
        pruned[sid] = AnnotationRecord(scene_id=sid, labels=labels)
    out = Path(args.out) if args.out else Path(args.annotations).with_suffix(".pruned.jsonl")
    write_annotations(
        out, pruned,
        provenance={"tool": "graspkit", "version": __version__, "cap": args.cap},
    )
    print(f"pruned {before} -> {after} labels (cap {args.cap}) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval_one(pred, annos, scene_dir, config, model, args) -> Dict:
    gts = annos[pred.scene_id].all_poses()
    scene = load_scene(Path(scene_dir) / f"{pred.scene_id}.ply").scene
    poses = filter_valid_poses(pred.poses)
    row: Dict = {"scene_id": pred.scene_id, "instruction_id": pred.instruction_id}
    if len(poses) == 0:
        row.update({c: 0.0 for c in metric_columns(config.thresholds)})
        row["emd"] = None
        row["n_candidates"] = 0
        return row
    mode = "uniform" if args.mode == "uniform" else "top_confidence"
    poses = select_candidates(poses, args.k, mode=mode, seed=args.seed)
    report = evaluate(poses, gts, scene, config, model)
    row.update(report.to_json())
    row["n_candidates"] = len(poses)
    return row


def cmd_eval(args: argparse.Namespace) -> int:
    preds = load_predictions(args.predictions)
    annos = load_annotations(args.annotations)
    scene_dir = Path(args.scenes)

    missing = sorted(
        {p.scene_id for p in preds
         if p.scene_id not in annos or not (scene_dir / f"{p.scene_id}.ply").exists()}
    )
    if missing:
        raise IdMismatch(f"ids without annotations or scene files: {missing}")

    config = MetricConfig(thresholds=args.thresholds)
    model = GripperModel()
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda p: _eval_one(p, annos, scene_dir, config, model, args), preds
            ))
    else:
        rows = [_eval_one(p, annos, scene_dir, config, model, args) for p in preds]
    rows.sort(key=lambda r: (r["scene_id"], r["instruction_id"]))

    cols = metric_columns(config.thresholds)
    aggregate = {}
    for c in cols:
        values = [r[c] for r in rows if r.get(c) is not None]
        aggregate[c] = sum(values) / len(values) if values else None
    aggregate["n_units"] = len(rows)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "per_scene.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dumps(row) + "\n")
    (out_dir / "aggregate.json").write_text(_dumps(aggregate) + "\n", "utf-8")
    write_per_scene_csv(out_dir / "per_scene.csv", rows, config.thresholds)
    if not args.no_figures:
        render_figures(out_dir, rows, aggregate, config.thresholds)
    print(f"evaluated {len(rows)} units -> {out_dir}")
    for c in cols:
        value = aggregate[c]
        print(f"  {c}: {value:.4f}" if value is not None else f"  {c}: n/a")
    return EXIT_OK


# ---------------------------------------------------------------------------
# qa
# ---------------------------------------------------------------------------

def _resolve_meta(path: str) -> Path:
    p = Path(path)
    if p.suffix == ".ply":
        return p.with_suffix(".meta.json")
    return p


def cmd_qa(args: argparse.Namespace) -> int:
    meta_path = _resolve_meta(args.meta)
    try:
        meta = json.loads(meta_path.read_text("utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise FormatError(f"sidecar is not valid JSON: {e}", e.pos)
    categories = [c for _, c in (tuple(o) for o in meta.get("objects", []))]
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    unknown = [t for t in targets if t not in categories]
    if unknown:
        raise UnknownTargetError(
            f"targets not present in scene {meta.get('scene_id')}: {unknown}"
        )
    records = build_cot_sequence(targets)
    prompt = build_instruction_prompt(meta.get("description", ""), categories)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_qa_records(out_dir / "qa.jsonl", records)
    (out_dir / "prompt.txt").write_text(prompt, "utf-8")
    print(f"wrote {len(records)} QA records and prompt -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    meta_path = _resolve_meta(args.meta)
    meta = json.loads(meta_path.read_text("utf-8"))
    categories = [c for _, c in (tuple(o) for o in meta.get("objects", []))]
    instructions = load_instructions(args.instructions, default_targets=categories or None)

    accepted = 0
    results = []
    for ins in instructions:
        check = validate_instruction(ins)
        accepted += int(check.accepted)
        verdict = "accepted" if check.accepted else f"rejected ({check.reason})"
        print(f"[{verdict}] {ins.text}")
        results.append({
            "scene_id": ins.scene_id,
            "text": ins.text,
            "accepted": check.accepted,
            "reason": check.reason,
        })
    print(f"summary: {accepted} accepted, {len(results) - accepted} rejected, "
          f"{len(results)} total")

    if args.qa:
        novel = 0
        for lineno, line in enumerate(
            Path(args.qa).read_text("utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            record = QARecord.from_json(json.loads(line))
            parsed = parse_answer(record.render(), record,
                                  strict=args.strict_descriptors)
            novel += len(parsed.novel)
        print(f"qa answers parsed; {novel} novel descriptors")

    if args.out:
        Path(args.out).write_text(_dumps({
            "accepted": accepted,
            "rejected": len(results) - accepted,
            "total": len(results),
            "results": results,
        }) + "\n", "utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspkit",
        description="6-DoF grasp detection toolkit: tokens, pruning, metrics, QA.",
    )
    parser.add_argument("--version", action="version", version=f"graspkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokens", help="render a scene into 3D-aware visual tokens")
    p.add_argument("scene", help="scene .ply path (with .meta.json sidecar)")
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--resolution", type=int, default=224)
    p.add_argument("--patch-size", type=int, default=14)
    p.add_argument("--voxel-size", type=float, default=None)
    p.add_argument("--splat", type=int, default=3)
    p.add_argument("--out", default=None, help="token JSONL output path")
    p.set_defaults(func=cmd_tokens)

    p = sub.add_parser("prune", help="cap per-object grasp labels, keeping diversity")
    p.add_argument("annotations", help="annotation .anno.jsonl path")
    p.add_argument("--cap", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="run the metric suite over prediction files")
    p.add_argument("predictions", help="prediction .pred.jsonl path")
    p.add_argument("annotations", help="annotation .anno.jsonl path")
    p.add_argument("scenes", help="directory of <scene_id>.ply files")
    p.add_argument("--thresholds", type=_thresholds, default=(0.4, 0.3, 0.2),
                   help="comma list, strictly decreasing (default 0.4,0.3,0.2)")
    p.add_argument("--mode", choices=("uniform", "top"), default="top")
    p.add_argument("--k", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="eval_out", help="report directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering the report figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("qa", help="emit CoT QA records and the instruction prompt")
    p.add_argument("meta", help="scene .meta.json (or .ply) path")
    p.add_argument("--targets", required=True, help="comma list of target categories")
    p.add_argument("--out-dir", default="qa_out")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("validate", help="check flexible instructions for explicit names")
    p.add_argument("instructions", help="instruction JSONL path")
    p.add_argument("meta", help="scene .meta.json (or .ply) path")
    p.add_argument("--qa", default=None,
                   help="also re-parse a filled QA-record JSONL")
    p.add_argument("--strict-descriptors", action="store_true",
                   help="reject unknown descriptors instead of flagging them")
    p.add_argument("--out", default=None, help="write the acceptance report JSON")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IdMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ID_MISMATCH
    except UnknownTargetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_TARGET
    except DegenerateSceneError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except UnknownDescriptorError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (FormatError, ValidationError, FileNotFoundError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
