"""Novel-view synthesis: features -> disparity -> backward warp -> colour."""
import warnings
from dataclasses import dataclass

import numpy as np

from .lfio import LightField, corner_coords
from .nets import Model, assemble_color_features, network_forward
from .sweep import compute_features
from .warp import backward_warp


@dataclass
class PipelineState:
    """Everything the backward pass needs from one forward evaluation."""
    q: tuple
    disp_origin: tuple  # (x, y) of the disparity map in view coordinates
    offsets: list  # p_i - q per corner
    disp_cache: object
    disparity: np.ndarray  # (h, w, 1)
    warped: list
    color_input: np.ndarray
    color_cache: object
    prediction: np.ndarray


def run_pipeline(model: Model, features: np.ndarray, corners, q, origin=(0, 0)) -> PipelineState:
    """Forward pass on a feature crop whose top-left sits at ``origin``.

    ``corners`` are full-frame input views so warps near the crop edge read
    real pixels rather than clamped ones.
    """
    positions = corner_coords(model.grid_size)
    disp, disp_cache = network_forward(model.disparity, features)
    m = model.disparity.reduction // 2
    disp_origin = (origin[0] + m, origin[1] + m)
    offsets = [(p[0] - q[0], p[1] - q[1]) for p in positions]
    warped = [backward_warp(c, disp, off, disp_origin).astype(disp.dtype)
              for c, off in zip(corners, offsets)]
    h = assemble_color_features(warped, disp, q, model.grid_size)
    pred, color_cache = network_forward(model.color, h)
    return PipelineState(tuple(q), disp_origin, offsets, disp_cache, disp, warped, h,
                         color_cache, pred)


def in_hull(q, grid_size: int) -> bool:
    return 0 <= q[0] <= grid_size - 1 and 0 <= q[1] <= grid_size - 1


def synthesize(model: Model, lf: LightField, q, features=None):
    """Full-frame novel view at (possibly fractional) position ``q``.

    Returns ``(image, disparity)``. The image covers the valid interior:
    ``model.margin`` pixels are missing on each side.
    """
    if not in_hull(q, lf.grid_size):
        warnings.warn(f"view {tuple(q)} lies outside the input grid; extrapolating", stacklevel=2)
    if lf.grid_size != model.grid_size:
        raise ValueError(f"model trained for grid {model.grid_size}, light field has {lf.grid_size}")
    if features is None:
        features = compute_features(lf, q, model.sweep).data
    state = run_pipeline(model, features, lf.corners(), q)
    return state.prediction, state.disparity
