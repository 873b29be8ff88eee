"""Plane-sweep features: per-level mean and standard deviation of the warped inputs."""
from dataclasses import dataclass

import numpy as np

from .lfio import LightField, corner_coords
from .warp import shift_constant


@dataclass(frozen=True)
class SweepConfig:
    levels: int = 100
    d_min: float = -21.0
    d_max: float = 21.0

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"need at least 2 disparity levels, got {self.levels}")
        if not self.d_min < self.d_max:
            raise ValueError(f"d_min ({self.d_min}) must be below d_max ({self.d_max})")

    @property
    def channels(self) -> int:
        return 2 * self.levels

    @property
    def spacing(self) -> float:
        return (self.d_max - self.d_min) / (self.levels - 1)


@dataclass
class FeatureStack:
    data: np.ndarray  # (h, w, 2L): M_1, V_1, ..., M_L, V_L
    config: SweepConfig

    @property
    def mean(self) -> np.ndarray:
        return self.data[..., 0::2]

    @property
    def std(self) -> np.ndarray:
        return self.data[..., 1::2]


def disparity_levels(cfg: SweepConfig) -> np.ndarray:
    return np.linspace(cfg.d_min, cfg.d_max, cfg.levels)


def luminance(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=2, keepdims=True)


def mean_std(stack: np.ndarray):
    """Mean and sample standard deviation (divisor N - 1) over axis 0."""
    mean = stack.mean(axis=0)
    var = ((stack - mean) ** 2).sum(axis=0) / (stack.shape[0] - 1)
    return mean, np.sqrt(var)


def sweep_views(views, positions, q, cfg: SweepConfig, region=None) -> np.ndarray:
    """Plane-sweep feature tensor for arbitrary input views.

    ``views`` are (H, W, 3) images at angular ``positions``; ``region`` is an
    optional ``(x, y, w, h)`` crop of the full-frame result. Warping is done
    on the full frame so crops match full-frame features exactly.
    """
    lum = [luminance(v.astype(np.float64))[..., 0] for v in views]
    height, width = lum[0].shape
    if region is None:
        region = (0, 0, width, height)
    x, y, w, h = region
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise ValueError(f"region {region} outside {width}x{height} view")

    levels = disparity_levels(cfg)
    out = np.empty((h, w, cfg.channels), dtype=np.float32)
    for l, d in enumerate(levels):
        warped = np.stack([
            shift_constant(img, (p[0] - q[0]) * d, (p[1] - q[1]) * d)[y:y + h, x:x + w]
            for img, p in zip(lum, positions)
        ])
        m, s = mean_std(warped)
        out[..., 2 * l] = m
        out[..., 2 * l + 1] = s
    return out


def compute_features(lf: LightField, q, cfg: SweepConfig, region=None) -> FeatureStack:
    """Features ``K`` for novel position ``q`` from the four corner views."""
    data = sweep_views(lf.corners(), corner_coords(lf.grid_size), q, cfg, region)
    return FeatureStack(data, cfg)


def wta_disparity(features: FeatureStack) -> np.ndarray:
    """Per-pixel level with minimal standard deviation; ties go to smaller |d|."""
    levels = disparity_levels(features.config)
    order = np.argsort(np.abs(levels), kind="stable")
    best = np.argmin(features.std[..., order], axis=2)
    return levels[order][best][..., None].astype(np.float32)
