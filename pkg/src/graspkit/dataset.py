"""File formats, benchmark splits, and candidate selection.

Scenes live as PLY (ascii or binary little-endian; x/y/z float32 plus
red/green/blue uchar) with a ``<stem>.meta.json`` sidecar for the scene id,
description, and object list. Annotations, predictions, instructions, QA
records, and visual tokens are all JSON Lines, one record per line; poses
travel as the 7-element array [x, y, z, rx, ry, rz, width]. Writers are
canonical (sorted keys, shortest round-trip floats) so store(load(f)) is
byte-identical on canonical files.

The split shuffle is a Fisher-Yates permutation driven by splitmix64, with
the swap index taken as ``next() mod (i + 1)``. That fully pins the
manifest for a given (ids, ratio, seed) across implementations, which a
library RNG would not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .cot import Instruction, QARecord
from .errors import (
    DuplicateIdError,
    EncodingError,
    FormatError,
    MissingConfidenceError,
    RangeError,
    ValidationError,
)
from .geometry import (
    GraspPose,
    GraspSet,
    pose_to_vector,
    poses_from_array,
)
from .views import Scene, VisualToken

__all__ = [
    "SplitMix64",
    "SceneRecord",
    "AnnotationRecord",
    "PredictionRecord",
    "SplitManifest",
    "read_ply",
    "write_ply",
    "load_scene",
    "store_scene",
    "load_annotations",
    "write_annotations",
    "load_predictions",
    "write_predictions",
    "load_instructions",
    "write_instructions",
    "write_tokens",
    "write_qa_records",
    "make_split",
    "load_split",
    "write_split",
    "select_candidates",
    "filter_valid_poses",
]

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64: z = (s += 0x9E3779B97F4A7C15); mix by 30/27/31 xor-shifts."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates; swap index j = next() mod (i + 1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next() % (i + 1)
            items[i], items[j] = items[j], items[i]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneRecord:
    """A scene plus its description and (object_id, category) list."""

    scene_id: str
    scene: Scene
    description: str
    objects: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        objs = tuple((str(i), str(c)) for i, c in self.objects)
        ids = [i for i, _ in objs]
        if len(set(ids)) != len(ids):
            raise ValidationError("object_ids must be unique within a scene")
        object.__setattr__(self, "objects", objs)

    @property
    def categories(self) -> Tuple[str, ...]:
        return tuple(c for _, c in self.objects)


@dataclass(frozen=True)
class AnnotationRecord:
    """Ground-truth labels per object of one scene."""

    scene_id: str
    labels: Mapping[str, GraspSet]

    def __post_init__(self):
        object.__setattr__(self, "labels", dict(self.labels))

    def all_poses(self) -> GraspSet:
        """Union of every object's labels, in object-id order."""
        poses: List[GraspPose] = []
        for oid in sorted(self.labels):
            poses.extend(self.labels[oid].poses)
        return GraspSet(tuple(poses))


@dataclass(frozen=True)
class PredictionRecord:
    """Predicted poses (with confidences) for one scene and instruction."""

    scene_id: str
    instruction_id: str
    poses: GraspSet

    def __post_init__(self):
        if self.poses.confidences is None:
            raise ValidationError("prediction records require confidences")


@dataclass(frozen=True)
class SplitManifest:
    ratio: float
    seed: int
    train_ids: Tuple[str, ...]
    eval_ids: Tuple[str, ...]


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "float": ("<f4", float), "float32": ("<f4", float),
    "double": ("<f8", float), "float64": ("<f8", float),
    "uchar": ("<u1", int), "uint8": ("<u1", int),
    "char": ("<i1", int), "int8": ("<i1", int),
    "short": ("<i2", int), "ushort": ("<u2", int),
    "int": ("<i4", int), "int32": ("<i4", int),
    "uint": ("<u4", int), "uint32": ("<u4", int),
}
_REQUIRED_FLOAT = ("x", "y", "z")
_REQUIRED_UCHAR = ("red", "green", "blue")


def _fmt_f32(v: float) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="0")


def write_ply(path: Union[str, Path], scene: Scene, binary: bool = False) -> None:
    """Write the canonical vertex-only PLY (float32 xyz, uchar rgb)."""
    n = scene.points.shape[0]
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    rgb = np.clip(np.rint(scene.colors * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            rec = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                     ("red", "<u1"), ("green", "<u1"), ("blue", "<u1")])
            for k, col in zip(("x", "y", "z"), scene.points.T):
                rec[k] = col.astype(np.float32)
            for k, col in zip(("red", "green", "blue"), rgb.T):
                rec[k] = col
            fh.write(rec.tobytes())
        else:
            lines = [
                f"{_fmt_f32(p[0])} {_fmt_f32(p[1])} {_fmt_f32(p[2])} "
                f"{c[0]} {c[1]} {c[2]}\n"
                for p, c in zip(scene.points, rgb)
            ]
            fh.write("".join(lines).encode("ascii"))


def read_ply(path: Union[str, Path]) -> Scene:
    """Parse a vertex PLY into a Scene; FormatError carries a byte offset."""
    raw = Path(path).read_bytes()
    offset = 0
    lines: List[Tuple[int, str]] = []
    while True:
        nl = raw.find(b"\n", offset)
        if nl < 0:
            raise FormatError("header is not terminated by end_header", offset)
        try:
            line = raw[offset:nl].decode("ascii").strip()
        except UnicodeDecodeError:
            raise FormatError("non-ascii bytes inside header", offset)
        lines.append((offset, line))
        offset = nl + 1
        if line == "end_header":
            break
    body_start = offset

    if not lines or lines[0][1] != "ply":
        raise FormatError("file does not start with 'ply'", 0)
    fmt = None
    count = None
    props: List[Tuple[str, str]] = []
    for off, line in lines[1:-1]:
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise FormatError(f"unsupported format line {line!r}", off)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if count is not None:
                raise FormatError("only a single vertex element is supported", off)
            if len(tokens) != 3 or tokens[1] != "vertex":
                raise FormatError(f"unsupported element {line!r}", off)
            count = int(tokens[2])
        elif tokens[0] == "property":
            if len(tokens) != 3 or tokens[1] == "list":
                raise FormatError(f"unsupported property {line!r}", off)
            if tokens[1] not in _PLY_TYPES:
                raise FormatError(f"unknown property type {tokens[1]!r}", off)
            props.append((tokens[2], tokens[1]))
        else:
            raise FormatError(f"unexpected header line {line!r}", off)
    if fmt is None:
        raise FormatError("missing format line", 0)
    if count is None:
        raise FormatError("missing 'element vertex' line", 0)
    names = [n for n, _ in props]
    for need, family in ((_REQUIRED_FLOAT, ("float", "float32")),
                         (_REQUIRED_UCHAR, ("uchar", "uint8"))):
        for name in need:
            if name not in names:
                raise FormatError(f"missing required property {name!r}", body_start)
            ptype = dict(props)[name]
            if ptype not in family:
                raise FormatError(
                    f"property {name!r} must be {family[0]}, got {ptype}", body_start
                )

    if fmt == "ascii":
        rows = np.zeros((count, 6), dtype=np.float64)
        pos = body_start
        col_idx = {n: i for i, (n, _) in enumerate(props)}
        ptype = dict(props)
        picks = [col_idx[n] for n in _REQUIRED_FLOAT + _REQUIRED_UCHAR]
        # single-precision columns widen through float32 so the stored value
        # is recovered exactly, matching the binary reader
        narrow = [ptype[n] in ("float", "float32")
                  for n in _REQUIRED_FLOAT + _REQUIRED_UCHAR]
        for i in range(count):
            nl = raw.find(b"\n", pos)
            end = nl if nl >= 0 else len(raw)
            if pos >= len(raw):
                raise FormatError(f"expected {count} vertices, found {i}", pos)
            fields = raw[pos:end].decode("ascii", "replace").split()
            if len(fields) < len(props):
                raise FormatError(
                    f"vertex line has {len(fields)} fields, needs {len(props)}", pos
                )
            try:
                rows[i] = [
                    float(np.float32(fields[j])) if is_n else float(fields[j])
                    for j, is_n in zip(picks, narrow)
                ]
            except ValueError:
                raise FormatError(f"unparsable vertex line {raw[pos:end]!r}", pos)
            pos = end + 1
        pts = np.asarray(rows[:, :3], dtype=np.float64)
        rgb = rows[:, 3:6] / 255.0
    else:
        dtype = np.dtype([(n, _PLY_TYPES[t][0]) for n, t in props])
        need = count * dtype.itemsize
        if len(raw) - body_start < need:
            raise FormatError(
                f"binary body truncated: need {need} bytes, have "
                f"{len(raw) - body_start}", body_start
            )
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=body_start)
        pts = np.stack([rec[n].astype(np.float64) for n in _REQUIRED_FLOAT], axis=1)
        rgb = np.stack(
            [rec[n].astype(np.float64) for n in _REQUIRED_UCHAR], axis=1
        ) / 255.0
    try:
        return Scene(points=pts, colors=rgb)
    except ValueError as e:
        raise ValidationError(f"scene invariant violated: {e}") from e


def _meta_path(ply_path: Union[str, Path]) -> Path:
    return Path(ply_path).with_suffix(".meta.json")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_scene(path: Union[str, Path]) -> SceneRecord:
    """Load a scene PLY plus its .meta.json sidecar."""
    scene = read_ply(path)
    meta_path = _meta_path(path)
    if not meta_path.exists():
        raise FormatError(f"missing sidecar {meta_path}", 0)
    try:
        meta = json.loads(meta_path.read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"sidecar is not valid JSON: {e}", e.pos)
    for key in ("scene_id", "description", "objects"):
        if key not in meta:
            raise FormatError(f"sidecar missing key {key!r}", 0)
    return SceneRecord(
        scene_id=str(meta["scene_id"]),
        scene=scene,
        description=str(meta["description"]),
        objects=tuple((o[0], o[1]) for o in meta["objects"]),
    )


def store_scene(path: Union[str, Path], record: SceneRecord,
                binary: bool = False) -> None:
    write_ply(path, record.scene, binary=binary)
    meta = {
        "scene_id": record.scene_id,
        "description": record.description,
        "objects": [[i, c] for i, c in record.objects],
    }
    _meta_path(path).write_text(_dumps(meta) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# JSON Lines files
# ---------------------------------------------------------------------------

def _iter_jsonl(path: Union[str, Path]):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"line {lineno} is not valid JSON: {e}", e.pos)


def _pose_from_row(row: Mapping, lineno: int) -> GraspPose:
    pose = row.get("pose")
    if not isinstance(pose, list) or len(pose) != 7:
        raise FormatError(f"line {lineno}: pose must be a 7-element array", 0)
    try:
        return poses_from_array(np.asarray([pose], dtype=np.float64),
                                validate=False)[0]
    except ValueError as e:
        raise ValidationError(f"line {lineno}: {e}") from e


def load_annotations(path: Union[str, Path]) -> Dict[str, AnnotationRecord]:
    """Read *.anno.jsonl into per-scene records; provenance headers are skipped."""
    grouped: Dict[str, Dict[str, List[GraspPose]]] = {}
    for lineno, row in _iter_jsonl(path):
        if "provenance" in row:
            continue
        for key in ("scene_id", "object_id", "pose"):
            if key not in row:
                raise FormatError(f"line {lineno}: missing key {key!r}", 0)
        pose = _pose_from_row(row, lineno)
        grouped.setdefault(str(row["scene_id"]), {}).setdefault(
            str(row["object_id"]), []
        ).append(pose)
    return {
        sid: AnnotationRecord(
            scene_id=sid,
            labels={oid: GraspSet(tuple(poses)) for oid, poses in objs.items()},
        )
        for sid, objs in grouped.items()
    }


def write_annotations(
    path: Union[str, Path],
    records: Mapping[str, AnnotationRecord],
    provenance: Optional[Mapping] = None,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if provenance is not None:
            fh.write(_dumps({"provenance": dict(provenance)}) + "\n")
        for sid in sorted(records):
            rec = records[sid]
            for oid in sorted(rec.labels):
                for pose in rec.labels[oid]:
                    vec = pose_to_vector(pose)
                    fh.write(_dumps({
                        "scene_id": sid,
                        "object_id": oid,
                        "pose": vec.as_list(),
                    }) + "\n")


def load_predictions(path: Union[str, Path]) -> List[PredictionRecord]:
    """Read *.pred.jsonl grouped by (scene_id, instruction_id), file order."""
    order: List[Tuple[str, str]] = []
    grouped: Dict[Tuple[str, str], Tuple[List[GraspPose], List[float]]] = {}
    for lineno, row in _iter_jsonl(path):
        if "provenance" in row:
            continue
        for key in ("scene_id", "pose", "confidence"):
            if key not in row:
                raise FormatError(f"line {lineno}: missing key {key!r}", 0)
        key = (str(row["scene_id"]), str(row.get("instruction_id", "0")))
        if key not in grouped:
            grouped[key] = ([], [])
            order.append(key)
        pose = _pose_from_row(row, lineno)
        conf = float(row["confidence"])
        if not (0.0 <= conf <= 1.0):
            raise ValidationError(f"line {lineno}: confidence {conf} outside [0, 1]")
        grouped[key][0].append(pose)
        grouped[key][1].append(conf)
    return [
        PredictionRecord(
            scene_id=sid,
            instruction_id=iid,
            poses=GraspSet(tuple(grouped[(sid, iid)][0]),
                           tuple(grouped[(sid, iid)][1])),
        )
        for sid, iid in order
    ]


def write_predictions(path: Union[str, Path],
                      records: Sequence[PredictionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            for pose, conf in zip(rec.poses, rec.poses.confidences):
                fh.write(_dumps({
                    "scene_id": rec.scene_id,
                    "instruction_id": rec.instruction_id,
                    "pose": pose_to_vector(pose).as_list(),
                    "confidence": conf,
                }) + "\n")


def load_instructions(
    path: Union[str, Path],
    default_targets: Optional[Sequence[str]] = None,
) -> List[Instruction]:
    """Read instruction JSONL rows {scene_id, text, targets}.

    Rows without targets fall back to default_targets (e.g. every category
    in the scene) so files produced before target labeling still validate.
    """
    out = []
    for lineno, row in _iter_jsonl(path):
        targets = row.get("targets") or default_targets
        if not targets:
            raise FormatError(f"line {lineno}: no targets and no default", 0)
        try:
            out.append(Instruction(
                text=str(row.get("text", "")),
                scene_id=str(row.get("scene_id", "")),
                target_names=tuple(str(t) for t in targets),
            ))
        except ValueError as e:
            raise ValidationError(f"line {lineno}: {e}") from e
    return out


def write_instructions(path: Union[str, Path],
                       instructions: Sequence[Instruction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ins in instructions:
            fh.write(_dumps({
                "scene_id": ins.scene_id,
                "text": ins.text,
                "targets": list(ins.target_names),
            }) + "\n")


def write_tokens(path: Union[str, Path], tokens: Sequence[VisualToken]) -> None:
    """Token JSONL: view_id, position (3-array), feature (array), valid."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tokens:
            pos = [None, None, None] if not t.valid else [float(v) for v in t.position]
            fh.write(_dumps({
                "view_id": t.view_id,
                "position": pos,
                "feature": [float(v) for v in t.feature],
                "valid": t.valid,
            }) + "\n")


def write_qa_records(path: Union[str, Path], records: Sequence[QARecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dumps(rec.to_json()) + "\n")


# ---------------------------------------------------------------------------
# Splits and candidate selection
# ---------------------------------------------------------------------------

def make_split(ids: Sequence[str], ratio: float, seed: int) -> SplitManifest:
    """Deterministic shuffle-then-prefix split; both sides stay nonempty."""
    ids = [str(i) for i in ids]
    if not ids:
        raise ValueError("ids must be nonempty")
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateIdError(f"duplicate ids: {dupes}")
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    shuffled = list(ids)
    SplitMix64(seed).shuffle(shuffled)
    n_train = int(round(ratio * len(ids)))
    if len(ids) >= 2:
        n_train = min(max(n_train, 1), len(ids) - 1)
    return SplitManifest(
        ratio=float(ratio),
        seed=int(seed),
        train_ids=tuple(shuffled[:n_train]),
        eval_ids=tuple(shuffled[n_train:]),
    )


def write_split(path: Union[str, Path], manifest: SplitManifest) -> None:
    Path(path).write_text(_dumps({
        "ratio": manifest.ratio,
        "seed": manifest.seed,
        "train_ids": list(manifest.train_ids),
        "eval_ids": list(manifest.eval_ids),
    }) + "\n", "utf-8")


def load_split(path: Union[str, Path]) -> SplitManifest:
    obj = json.loads(Path(path).read_text("utf-8"))
    return SplitManifest(
        ratio=float(obj["ratio"]),
        seed=int(obj["seed"]),
        train_ids=tuple(obj["train_ids"]),
        eval_ids=tuple(obj["eval_ids"]),
    )


def select_candidates(
    preds: GraspSet, k: int, mode: str = "top_confidence", seed: int = 0
) -> GraspSet:
    """Pick at most k candidate poses.

    "uniform" draws without replacement through the seeded splitmix64
    shuffle; "top_confidence" keeps the k highest-confidence poses with ties
    broken toward the lower original index. Either way the survivors come
    back in their original order.
    """
    if len(preds) == 0:
        raise ValueError("preds must be nonempty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(preds) <= k:
        return preds
    if mode == "uniform":
        indices = list(range(len(preds)))
        SplitMix64(seed).shuffle(indices)
        return preds.subset(sorted(indices[:k]))
    if mode in ("top", "top_confidence"):
        if preds.confidences is None:
            raise MissingConfidenceError("top_confidence mode needs confidences")
        ranked = sorted(range(len(preds)),
                        key=lambda i: (-preds.confidences[i], i))
        return preds.subset(sorted(ranked[:k]))
    raise ValueError(f"unknown mode {mode!r}")


def filter_valid_poses(preds: GraspSet) -> GraspSet:
    """Drop poses whose encoding violates the bounded-vector ranges."""
    keep = []
    for i, pose in enumerate(preds):
        try:
            vec = pose_to_vector(pose)
        except (EncodingError, RangeError):
            continue
        if vec.in_bounds():
            keep.append(i)
    return preds.subset(keep)
