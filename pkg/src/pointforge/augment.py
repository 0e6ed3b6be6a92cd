"""Training-time augmentation in two stages around voxelization.

Pre-voxelize: random rotation about the up axis. Post-voxelize: color auto
contrast, random scaling, jitter, and color drop, in that fixed order.
Labels are never touched, every transform takes an explicit RNG, and
heights are recomputed whenever geometry moved.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import PointCloud, axis_index, compute_heights

PRE_VOXELIZE = "pre_voxelize"
POST_VOXELIZE = "post_voxelize"


@dataclass(frozen=True)
class AugmentConfig:
    rotation_enabled: bool = True
    up_axis: str = "y"
    scale_range: tuple = (0.9, 1.1)
    jitter_sigma: float = 0.005
    jitter_clip: float = 0.02
    color_drop_prob: float = 0.2
    color_contrast_prob: float = 0.2
    contrast_blend: float = 0.5
    loop_factor: int = 12

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        for name in ("color_drop_prob", "color_contrast_prob", "contrast_blend"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.jitter_sigma < 0 or self.jitter_clip < 0:
            raise ValueError("jitter_sigma and jitter_clip must be nonnegative")
        if self.loop_factor < 1:
            raise ValueError(f"loop_factor must be >= 1, got {self.loop_factor}")


def rotation_matrix(up_axis, theta: float) -> np.ndarray:
    """Right-handed rotation by theta about the given axis."""
    c, s = math.cos(theta), math.sin(theta)
    axis = axis_index(up_axis)
    mat = np.eye(3, dtype=np.float64)
    others = [i for i in range(3) if i != axis]
    a, b = others
    mat[a, a] = c
    mat[a, b] = -s
    mat[b, a] = s
    mat[b, b] = c
    return mat


def random_rotation(cloud: PointCloud, up_axis, rng, theta=None) -> PointCloud:
    """Rotate coords (and normals) about the up axis by theta ~ U[0, 2pi)."""
    if theta is None:
        theta = rng.uniform(0.0, 2.0 * math.pi)
    mat = rotation_matrix(up_axis, theta).astype(np.float32)
    updates = {"coords": cloud.coords @ mat}
    if cloud.normals is not None:
        updates["normals"] = cloud.normals @ mat
    return cloud.with_(**updates)


def random_scaling(cloud: PointCloud, scale_range, rng, factor=None) -> PointCloud:
    """Scale all coords by one factor ~ U[lo, hi]; normals are unchanged."""
    lo, hi = scale_range
    if factor is None:
        factor = rng.uniform(lo, hi)
    return cloud.with_(coords=cloud.coords * np.float32(factor))


def jitter(cloud: PointCloud, sigma: float, clip: float, rng) -> PointCloud:
    """Add i.i.d. Gaussian offsets, clamped componentwise to [-clip, clip]."""
    if sigma == 0 or clip == 0:
        return cloud
    noise = rng.normal(0.0, sigma, size=cloud.coords.shape)
    np.clip(noise, -clip, clip, out=noise)
    return cloud.with_(coords=cloud.coords + noise.astype(np.float32))


def color_drop(cloud: PointCloud, prob: float, rng) -> PointCloud:
    """With probability prob, zero the whole cloud's colors."""
    if cloud.colors is None:
        raise ValueError("color_drop requires colors")
    if rng.random() < prob:
        return cloud.with_(colors=np.zeros_like(cloud.colors))
    return cloud


def color_auto_contrast(cloud: PointCloud, prob: float, blend: float, rng) -> PointCloud:
    """With probability prob, blend colors toward a per-channel min/max rescale."""
    if cloud.colors is None:
        raise ValueError("color_auto_contrast requires colors")
    if rng.random() >= prob:
        return cloud
    colors = cloud.colors
    lo = colors.min(axis=0, keepdims=True)
    hi = colors.max(axis=0, keepdims=True)
    span = hi - lo
    stretched = np.where(span > 0, (colors - lo) / np.where(span > 0, span, 1), colors)
    out = np.float32(blend) * stretched + np.float32(1 - blend) * colors
    return cloud.with_(colors=np.clip(out, 0.0, 1.0))


def apply_pipeline(cloud: PointCloud, config: AugmentConfig, stage: str, rng) -> PointCloud:
    """Run one augmentation stage; recomputes heights if geometry changed."""
    if stage == PRE_VOXELIZE:
        moved = False
        if config.rotation_enabled:
            cloud = random_rotation(cloud, config.up_axis, rng)
            moved = True
    elif stage == POST_VOXELIZE:
        if cloud.colors is not None:
            cloud = color_auto_contrast(
                cloud, config.color_contrast_prob, config.contrast_blend, rng
            )
        cloud = random_scaling(cloud, config.scale_range, rng)
        cloud = jitter(cloud, config.jitter_sigma, config.jitter_clip, rng)
        if cloud.colors is not None:
            cloud = color_drop(cloud, config.color_drop_prob, rng)
        moved = True
    else:
        raise ValueError(f"unknown stage {stage!r}")
    if moved and cloud.heights is not None:
        cloud = compute_heights(cloud, config.up_axis)
    return cloud
