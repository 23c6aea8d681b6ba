"""SE(3) grasp pose representation and the bounded 6-vector encoding.

A grasp is a rigid gripper configuration: rotation R in SO(3), translation T
in normalized scene units, and a nonnegative opening width. The bounded
vector encoding packs it as (x, y, z, rx, ry, rz, width) with x, y, z and
rx, ry in [-1, 1] and rz in [0, pi]. Rotations compose intrinsically as
Rz(rz) @ Ry(ry) @ Rx(rx), which puts the half-turn-ranged axis outermost.

All values are immutable after construction and every operation is a pure
function, so everything here is safe for unrestricted parallel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import EncodingError, RangeError

# Decoded angles may overshoot their bound by float noise; snap within this.
_BOUND_SNAP = 1e-12
# Recomposition mismatch beyond this means the rotation is not reachable.
_DECODE_TOL = 1e-6

__all__ = [
    "GraspPose",
    "PoseVector",
    "GraspSet",
    "euler_to_rotation",
    "pose_from_vector",
    "pose_to_vector",
    "se3_distance",
    "poses_to_array",
    "poses_from_array",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GraspPose:
    """One SE(3) gripper configuration.

    rotation must be orthonormal with det +1 (checked to 1e-9), width >= 0.
    """

    rotation: np.ndarray
    translation: np.ndarray
    width: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, GraspPose):
            return NotImplemented
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.width == other.width
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes(), self.width))

    def __post_init__(self):
        rot = _frozen(np.asarray(self.rotation, dtype=np.float64))
        trans = _frozen(np.asarray(self.translation, dtype=np.float64))
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if trans.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {trans.shape}")
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal (tolerance 1e-9)")
        if abs(float(np.linalg.det(rot)) - 1.0) > 1e-9:
            raise ValueError("rotation determinant differs from +1")
        if not (self.width >= 0.0):
            raise ValueError(f"width must be >= 0, got {self.width}")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "width", float(self.width))


@dataclass(frozen=True)
class PoseVector:
    """Bounded 7-vector encoding (x, y, z, rx, ry, rz, width).

    Serializes externally as the JSON array [x, y, z, rx, ry, rz, width].
    """

    x: float
    y: float
    z: float
    rx: float
    ry: float
    rz: float
    width: float = 0.0

    def validate(self) -> "PoseVector":
        """Raise RangeError unless every component is inside its bound."""
        for name in ("x", "y", "z", "rx", "ry"):
            v = getattr(self, name)
            if not (-1.0 <= v <= 1.0):
                raise RangeError(f"{name}={v} outside [-1, 1]")
        if not (0.0 <= self.rz <= math.pi):
            raise RangeError(f"rz={self.rz} outside [0, pi]")
        if not (self.width >= 0.0):
            raise RangeError(f"width={self.width} negative")
        return self

    def in_bounds(self) -> bool:
        try:
            self.validate()
        except RangeError:
            return False
        return True

    def as_array(self, include_width: bool = True) -> np.ndarray:
        vals = [self.x, self.y, self.z, self.rx, self.ry, self.rz]
        if include_width:
            vals.append(self.width)
        return np.asarray(vals, dtype=np.float64)

    def as_list(self) -> list:
        """The 7-element JSON wire form."""
        return [self.x, self.y, self.z, self.rx, self.ry, self.rz, self.width]

    @classmethod
    def from_sequence(cls, seq: Sequence[float]) -> "PoseVector":
        if len(seq) != 7:
            raise ValueError(f"pose vector needs 7 elements, got {len(seq)}")
        return cls(*(float(v) for v in seq))


@dataclass(frozen=True)
class GraspSet:
    """An ordered pose set, optionally with per-pose confidences in [0, 1]."""

    poses: Tuple[GraspPose, ...]
    confidences: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if self.confidences is not None:
            conf = tuple(float(c) for c in self.confidences)
            if len(conf) != len(self.poses):
                raise ValueError(
                    f"{len(conf)} confidences for {len(self.poses)} poses"
                )
            for c in conf:
                if not (0.0 <= c <= 1.0):
                    raise ValueError(f"confidence {c} outside [0, 1]")
            object.__setattr__(self, "confidences", conf)

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(self.poses)

    def subset(self, indices: Iterable[int]) -> "GraspSet":
        idx = list(indices)
        conf = None
        if self.confidences is not None:
            conf = tuple(self.confidences[i] for i in idx)
        return GraspSet(tuple(self.poses[i] for i in idx), conf)


def euler_to_rotation(rx: float, ry: float, rz: float) -> np.ndarray:
    """Compose R = Rz(rz) @ Ry(ry) @ Rx(rx) (angles in radians)."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    return np.array(
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ],
        dtype=np.float64,
    )


def pose_from_vector(v: PoseVector) -> GraspPose:
    """Decode a bounded vector into a pose; RangeError on out-of-bound fields.

    The pose remembers the exact vector it came from, so encoding it back is
    bit-identical (file round trips stay byte-equivalent).
    """
    v.validate()
    g = GraspPose(
        rotation=euler_to_rotation(v.rx, v.ry, v.rz),
        translation=np.array([v.x, v.y, v.z]),
        width=v.width,
    )
    object.__setattr__(g, "_encoded", v)
    return g


def _snap(value: float, lo: float, hi: float) -> float:
    if lo - _BOUND_SNAP <= value < lo:
        return lo
    if hi < value <= hi + _BOUND_SNAP:
        return hi
    return value


def pose_to_vector(g: GraspPose) -> PoseVector:
    """Encode a pose back into the bounded vector.

    Poses built by pose_from_vector return their original vector verbatim.
    Otherwise this inverts the Rz@Ry@Rx composition: because ry is confined
    to [-1, 1], cos(ry) > 0 and only the principal Euler branch can be in
    range; if the recomposed rotation misses the input by more than 1e-6
    (Frobenius) the rotation is unreachable and EncodingError is raised.
    Translation and width are copied verbatim; bounds on them are a
    validity question (see ``dataset.filter_valid_poses``), not an
    encoding one.
    """
    cached = getattr(g, "_encoded", None)
    if cached is not None:
        return cached
    r = g.rotation
    sy = -float(r[2, 0])
    sy = min(1.0, max(-1.0, sy))
    ry = math.asin(sy)
    if abs(abs(ry) - math.pi / 2) < 1e-6:
        raise EncodingError("rotation is gimbal-locked (|ry| at pi/2)")
    rx = math.atan2(float(r[2, 1]), float(r[2, 2]))
    rz = math.atan2(float(r[1, 0]), float(r[0, 0]))
    if rz < 0.0 and rz <= -math.pi + _BOUND_SNAP:
        rz += 2.0 * math.pi  # atan2 returned the -pi representation of pi
    rx = _snap(rx, -1.0, 1.0)
    ry = _snap(ry, -1.0, 1.0)
    rz = _snap(rz, 0.0, math.pi)
    if not (-1.0 <= rx <= 1.0 and -1.0 <= ry <= 1.0 and 0.0 <= rz <= math.pi):
        raise EncodingError(
            f"no in-range Euler triple: decoded (rx={rx:.6g}, ry={ry:.6g}, rz={rz:.6g})"
        )
    if float(np.linalg.norm(euler_to_rotation(rx, ry, rz) - r)) > _DECODE_TOL:
        raise EncodingError("rotation not reproducible by in-range Euler angles")
    t = g.translation
    return PoseVector(
        x=float(t[0]), y=float(t[1]), z=float(t[2]),
        rx=rx, ry=ry, rz=rz, width=g.width,
    )


def se3_distance(a: GraspPose, b: GraspPose, include_width: bool = False) -> float:
    """Euclidean norm of the encoded-vector difference.

    Covers (x, y, z, rx, ry, rz) and, when include_width is set, width too.
    Symmetric; zero iff the encodings coincide. EncodingError propagates
    from unreachable rotations.
    """
    va = pose_to_vector(a).as_array(include_width=include_width)
    vb = pose_to_vector(b).as_array(include_width=include_width)
    return float(np.linalg.norm(va - vb))


def poses_to_array(poses: Iterable[GraspPose]) -> np.ndarray:
    """Encode poses into an (n, 7) array of bounded vectors."""
    rows = [pose_to_vector(p).as_array(include_width=True) for p in poses]
    if not rows:
        return np.zeros((0, 7), dtype=np.float64)
    return np.stack(rows)


def poses_from_array(vectors: np.ndarray, validate: bool = True) -> Tuple[GraspPose, ...]:
    """Decode an (n, 7) array of bounded vectors into poses."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 7:
        raise ValueError(f"expected an (n, 7) array, got {arr.shape}")
    out = []
    for row in arr:
        v = PoseVector.from_sequence(row)
        if validate:
            out.append(pose_from_vector(v))
        else:
            g = GraspPose(
                rotation=euler_to_rotation(v.rx, v.ry, v.rz),
                translation=np.array([v.x, v.y, v.z]),
                width=v.width,
            )
            object.__setattr__(g, "_encoded", v)
            out.append(g)
    return tuple(out)
