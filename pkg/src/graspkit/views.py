"""Multi-view token geometry: render, patchify, back-project, voxel-pool.

A colored point cloud is observed from a ring of virtual cameras (equal
azimuth spacing, 45 degrees above the centroid plane, radius 2.5x the
bounding-sphere radius), splatted into z-buffered RGB-D images, cut into
patches, lifted back to 3D at each patch's representative depth, and pooled
on a voxel grid into position-anchored tokens.

Feature extraction is deliberately dumb: the default patch feature is the
mean RGB over hit pixels. Any callable with the same (rgb_block, hit_mask)
-> vector signature can replace it, so a learned encoder can slot in
without touching the geometry.

Per-view rendering is independent (each view owns its frame buffer) and the
final pooling is a deterministic reduction in lexicographic voxel order, so
the composed pipeline is reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSceneError, DimensionError

__all__ = [
    "Scene",
    "VirtualCamera",
    "RGBDImage",
    "PatchGrid",
    "VisualToken",
    "ViewConfig",
    "mean_rgb_reducer",
    "make_virtual_cameras",
    "render_view",
    "patchify",
    "back_project",
    "voxel_pool",
    "scene_to_tokens",
]

FeatureReducer = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Scene:
    """Colored point cloud: (n, 3) float positions, parallel (n, 3) RGB in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        col = np.ascontiguousarray(self.colors, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be (n>=1, 3), got {pts.shape}")
        if col.shape != pts.shape:
            raise ValueError("colors must parallel points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        if col.min() < 0.0 or col.max() > 1.0:
            raise ValueError("color channels must lie in [0, 1]")
        pts.setflags(write=False)
        col.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", col)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.colors, other.colors
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.colors.tobytes()))

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def bounding_sphere_radius(self) -> float:
        """Radius of the centroid-centered sphere enclosing every point."""
        return float(np.linalg.norm(self.points - self.centroid, axis=1).max())

    @property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass(frozen=True, eq=False)
class VirtualCamera:
    """Pinhole camera defined by position, look-at target, and up hint."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    focal_px: float
    width_px: int
    height_px: int

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.look_at, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if self.focal_px <= 0 or self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("focal and image dimensions must be positive")
        view = tgt - pos
        norm = np.linalg.norm(view)
        if norm == 0.0:
            raise ValueError("camera position coincides with look_at")
        cos_angle = abs(np.dot(view / norm, up / np.linalg.norm(up)))
        if cos_angle > math.cos(1e-6):
            raise ValueError("up vector is parallel to the view direction")
        for name, arr in (("position", pos), ("look_at", tgt), ("up", up)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, true_up, forward) orthonormal camera axes."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    @property
    def principal_point(self) -> Tuple[float, float]:
        return (self.width_px - 1) / 2.0, (self.height_px - 1) / 2.0


@dataclass(frozen=True, eq=False)
class RGBDImage:
    """Rendered view: rgb (h, w, 3) in [0, 1], depth (h, w), 0 where nothing hit."""

    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape or self.rgb.shape[2:] != (3,):
            raise ValueError("rgb must be (h, w, 3) matching depth (h, w)")


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """Patchified view: features (gy, gx, f), depths (gy, gx), pixel centers (gy, gx, 2)."""

    features: np.ndarray
    depths: np.ndarray
    centers: np.ndarray
    patch_size: int


@dataclass(frozen=True, eq=False)
class VisualToken:
    """A feature vector anchored at a back-projected 3D patch center."""

    position: np.ndarray
    feature: np.ndarray
    view_id: int
    valid: bool


@dataclass(frozen=True)
class ViewConfig:
    """Knobs for the composed pipeline; None fields derive from the scene."""

    n_views: int = 4
    resolution: int = 224
    patch_size: int = 14
    voxel_size: Optional[float] = None  # default: bbox diagonal / 32
    splat_px: int = 3
    focal_px: Optional[float] = None  # default: 0.7 * resolution


def mean_rgb_reducer(rgb_block: np.ndarray, hit_mask: np.ndarray) -> np.ndarray:
    """Default patch feature: mean RGB over pixels that saw geometry."""
    if not hit_mask.any():
        return np.zeros(3, dtype=np.float64)
    return rgb_block[hit_mask].mean(axis=0)


def make_virtual_cameras(
    scene: Scene,
    n_views: int,
    resolution: int = 224,
    focal_px: Optional[float] = None,
) -> List[VirtualCamera]:
    """Place n_views cameras on the standard observation ring.

    Equal azimuth steps of 2*pi/n_views, elevation 45 degrees, orbit radius
    2.5x the scene bounding-sphere radius, all aimed at the centroid.
    Deterministic given the scene.
    """
    if not (2 <= n_views <= 8):
        raise ValueError(f"n_views must be in [2, 8], got {n_views}")
    radius = scene.bounding_sphere_radius
    if radius == 0.0:
        raise DegenerateSceneError("scene bounding-sphere radius is zero")
    center = scene.centroid
    orbit = 2.5 * radius
    focal = focal_px if focal_px is not None else 0.7 * resolution
    cameras = []
    for k in range(n_views):
        azim = 2.0 * math.pi * k / n_views
        offset = orbit * np.array(
            [
                math.cos(math.pi / 4) * math.cos(azim),
                math.cos(math.pi / 4) * math.sin(azim),
                math.sin(math.pi / 4),
            ]
        )
        cameras.append(
            VirtualCamera(
                position=center + offset,
                look_at=center,
                up=np.array([0.0, 0.0, 1.0]),
                focal_px=focal,
                width_px=resolution,
                height_px=resolution,
            )
        )
    return cameras


def render_view(scene: Scene, camera: VirtualCamera, splat_px: int = 3) -> RGBDImage:
    """Z-buffered point-splat render through the pinhole model.

    Each point covers an odd splat_px x splat_px pixel footprint; per pixel
    the nearest point along the ray wins. Points behind the camera are
    skipped; untouched pixels keep depth 0 and black RGB.
    """
    if splat_px < 1 or splat_px % 2 == 0:
        raise ValueError(f"splat_px must be odd and positive, got {splat_px}")
    w, h = camera.width_px, camera.height_px
    rgb = np.zeros((h, w, 3), dtype=np.float64)
    depth = np.zeros((h, w), dtype=np.float64)

    right, true_up, fwd = camera.basis()
    cx, cy = camera.principal_point
    rel = scene.points - camera.position
    x = rel @ right
    y = rel @ true_up
    z = rel @ fwd
    front = z > 1e-12
    if not front.any():
        return RGBDImage(rgb=rgb, depth=depth)
    x, y, z = x[front], y[front], z[front]
    colors = scene.colors[front]
    u = cx + camera.focal_px * x / z
    v = cy - camera.focal_px * y / z
    px = np.floor(u + 0.5).astype(np.int64)
    py = np.floor(v + 0.5).astype(np.int64)

    half = splat_px // 2
    offsets = np.arange(-half, half + 1)
    dx, dy = np.meshgrid(offsets, offsets, indexing="xy")
    sx = (px[:, None] + dx.ravel()[None, :]).ravel()
    sy = (py[:, None] + dy.ravel()[None, :]).ravel()
    sz = np.repeat(z, offsets.size ** 2)
    sidx = np.repeat(np.arange(z.size), offsets.size ** 2)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    if not inside.any():
        return RGBDImage(rgb=rgb, depth=depth)
    sx, sy, sz, sidx = sx[inside], sy[inside], sz[inside], sidx[inside]
    flat = sy * w + sx
    # stable sort by (pixel, depth): first hit per pixel is the z-buffer winner
    order = np.lexsort((sz, flat))
    flat, sz, sidx = flat[order], sz[order], sidx[order]
    uniq, first = np.unique(flat, return_index=True)
    depth.ravel()[uniq] = sz[first]
    rgb.reshape(-1, 3)[uniq] = colors[sidx[first]]
    return RGBDImage(rgb=rgb, depth=depth)


def patchify(
    image: RGBDImage,
    patch_size: int,
    reducer: FeatureReducer = mean_rgb_reducer,
) -> PatchGrid:
    """Cut the image into patch_size x patch_size cells.

    Representative depth is the median of a patch's nonzero depths (0 when
    the patch saw nothing); the feature is reducer() over the hit pixels.
    """
    if patch_size < 1:
        raise ValueError("patch_size must be positive")
    h, w = image.depth.shape
    if h % patch_size or w % patch_size:
        raise DimensionError(
            f"patch_size {patch_size} must divide image dimensions {w}x{h}"
        )
    gy, gx = h // patch_size, w // patch_size
    feat0 = reducer(
        image.rgb[:patch_size, :patch_size], image.depth[:patch_size, :patch_size] > 0
    )
    features = np.zeros((gy, gx, feat0.shape[0]), dtype=np.float64)
    depths = np.zeros((gy, gx), dtype=np.float64)
    centers = np.zeros((gy, gx, 2), dtype=np.float64)
    for iy in range(gy):
        for ix in range(gx):
            ys, xs = iy * patch_size, ix * patch_size
            dblock = image.depth[ys:ys + patch_size, xs:xs + patch_size]
            cblock = image.rgb[ys:ys + patch_size, xs:xs + patch_size]
            hits = dblock > 0
            if hits.any():
                depths[iy, ix] = float(np.median(dblock[hits]))
            features[iy, ix] = reducer(cblock, hits)
            centers[iy, ix] = (xs + (patch_size - 1) / 2.0,
                               ys + (patch_size - 1) / 2.0)
    return PatchGrid(features=features, depths=depths, centers=centers,
                     patch_size=patch_size)


def back_project(
    grid: PatchGrid, camera: VirtualCamera, view_id: int = 0
) -> List[VisualToken]:
    """Lift each patch to the scene frame at its representative depth.

    Inverts the pinhole projection at the patch's pixel center; patches
    with depth 0 become invalid tokens (NaN position) that pooling drops.
    """
    right, true_up, fwd = camera.basis()
    cx, cy = camera.principal_point
    tokens: List[VisualToken] = []
    gy, gx = grid.depths.shape
    for iy in range(gy):
        for ix in range(gx):
            d = grid.depths[iy, ix]
            feature = grid.features[iy, ix].copy()
            if d > 0:
                u, v = grid.centers[iy, ix]
                xc = (u - cx) / camera.focal_px * d
                yc = -(v - cy) / camera.focal_px * d
                pos = camera.position + xc * right + yc * true_up + d * fwd
                tokens.append(VisualToken(pos, feature, view_id, True))
            else:
                tokens.append(
                    VisualToken(np.full(3, np.nan), feature, view_id, False)
                )
    return tokens


def voxel_pool(tokens: Sequence[VisualToken], voxel_size: float) -> List[VisualToken]:
    """Merge valid tokens per voxel: floor(position / voxel_size) buckets.

    Each occupied voxel emits one token at the mean position with the mean
    feature, output ordered by lexicographic voxel index. A merged token
    keeps the common view_id when all contributors share one and -1
    otherwise; invalid tokens are dropped.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    valid = [t for t in tokens if t.valid]
    if not valid:
        return []
    buckets: dict = {}
    for t in valid:
        key = tuple(int(i) for i in np.floor(t.position / voxel_size))
        buckets.setdefault(key, []).append(t)
    out = []
    for key in sorted(buckets):
        members = buckets[key]
        pos = np.mean([m.position for m in members], axis=0)
        feat = np.mean([m.feature for m in members], axis=0)
        ids = {m.view_id for m in members}
        vid = ids.pop() if len(ids) == 1 else -1
        out.append(VisualToken(pos, feat, vid, True))
    return out


def scene_to_tokens(
    scene: Scene,
    config: ViewConfig = ViewConfig(),
    reducer: FeatureReducer = mean_rgb_reducer,
) -> List[VisualToken]:
    """Full pipeline: cameras -> render -> patchify -> back-project -> pool."""
    voxel_size = config.voxel_size
    if voxel_size is None:
        voxel_size = scene.bbox_diagonal / 32.0
        if voxel_size == 0.0:
            raise DegenerateSceneError("scene bounding box collapses to a point")
    cameras = make_virtual_cameras(
        scene, config.n_views, config.resolution, config.focal_px
    )
    tokens: List[VisualToken] = []
    for vid, cam in enumerate(cameras):
        image = render_view(scene, cam, config.splat_px)
        grid = patchify(image, config.patch_size, reducer)
        tokens.extend(back_project(grid, cam, view_id=vid))
    return voxel_pool(tokens, voxel_size)
