"""Bicubic sampling and disparity-driven backward warping.

Sampling uses Keys cubic convolution (a = -0.5) on a 4x4 neighbourhood
with clamp-to-edge addressing. Positions are in pixel units, ``x`` along
columns and ``y`` along rows.
"""
import numpy as np

KEYS_A = -0.5
JACOBIAN_STEP = 0.01


def keys_kernel(x, a: float = KEYS_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    inner = (a + 2) * x3 - (a + 3) * x2 + 1
    outer = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, inner, np.where(x < 2, outer, 0.0))


def cubic_weights(t):
    """Weights of taps at offsets -1, 0, 1, 2 for fractional position ``t``.

    Closed form of :func:`keys_kernel` for a = -0.5; at ``t = 0`` the
    weights are exactly (0, 1, 0, 0).
    """
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    return np.stack([
        0.5 * (-t3 + 2 * t2 - t),
        1.5 * t3 - 2.5 * t2 + 1,
        -1.5 * t3 + 2 * t2 + 0.5 * t,
        0.5 * (t3 - t2),
    ], axis=-1)


_TAPS = np.arange(-1, 3)


def bicubic_sample(img: np.ndarray, x, y, channel=None):
    """Sample ``img`` (h, w, c) at real positions ``x``, ``y``.

    ``x`` and ``y`` broadcast together; the result has their shape plus the
    channel axis, or no channel axis when ``channel`` is given.
    """
    if img.dtype.kind != "f":
        img = img.astype(np.float64)
    h, w, c = img.shape
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    bad = ~(np.isfinite(x) & np.isfinite(y))
    if bad.any():
        # non-finite positions (a diverged disparity) sample as NaN
        out = bicubic_sample(img, np.where(bad, 0.0, x), np.where(bad, 0.0, y))
        out[bad] = np.nan
        return out[..., channel] if channel is not None else out
    x0 = np.floor(x)
    y0 = np.floor(y)
    wx = cubic_weights(x - x0).astype(img.dtype)
    wy = cubic_weights(y - y0).astype(img.dtype)
    xi = np.clip(x0.astype(np.intp)[..., None] + _TAPS, 0, w - 1)
    yi = np.clip(y0.astype(np.intp)[..., None] + _TAPS, 0, h - 1) * w
    idx = (yi[..., :, None] + xi[..., None, :]).reshape(x.shape + (16,))
    taps = np.take(img.reshape(-1, c), idx, axis=0)  # (..., 16, c)
    weights = (wy[..., :, None] * wx[..., None, :]).reshape(x.shape + (1, 16))
    out = np.matmul(weights, taps)[..., 0, :]
    return out[..., channel] if channel is not None else out


def _as_map(D: np.ndarray) -> np.ndarray:
    return D[..., 0] if D.ndim == 3 else D


def _center_origin(src_shape, map_shape):
    return ((src_shape[1] - map_shape[1]) // 2, (src_shape[0] - map_shape[0]) // 2)


def _warp(src, disp, offset, origin):
    # disp: (..., h, w); origin is the (x, y) of disp[..., 0, 0] inside src
    rows, cols = np.indices(disp.shape[-2:], dtype=np.float64)
    x = cols + origin[0] + offset[0] * disp
    y = rows + origin[1] + offset[1] * disp
    return bicubic_sample(src, x, y)


def backward_warp(src: np.ndarray, D: np.ndarray, offset, origin=None) -> np.ndarray:
    """Resample ``src`` so that pixel ``s`` reads ``src[s + offset * D(s)]``.

    ``offset`` is ``p_i - q`` in angular grid units: its first component
    scales the horizontal shift, the second the vertical one. ``D`` may be
    smaller than ``src``; ``origin`` gives the (x, y) position of its top-left
    pixel inside ``src`` and defaults to centring it.
    """
    disp = _as_map(D).astype(np.float64)
    if origin is None:
        origin = _center_origin(src.shape, disp.shape)
    return _warp(src, disp, offset, origin)


def shift_constant(src: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Full-frame bicubic resampling at ``s + (dx, dy)`` for a constant shift.

    Separable equivalent of :func:`backward_warp` with a constant disparity
    map; used by the plane sweep where the same shift applies everywhere.
    """
    h, w = src.shape[:2]
    work = src.astype(np.float64)

    x0 = int(np.floor(dx))
    wx = cubic_weights(dx - x0)
    cols = np.arange(w)
    tmp = np.zeros_like(work)
    for n in range(4):
        idx = np.clip(cols + x0 + n - 1, 0, w - 1)
        tmp += wx[n] * work[:, idx]

    y0 = int(np.floor(dy))
    wy = cubic_weights(dy - y0)
    rows = np.arange(h)
    out = np.zeros_like(work)
    for m in range(4):
        idx = np.clip(rows + y0 + m - 1, 0, h - 1)
        out += wy[m] * tmp[idx]
    return out.astype(src.dtype)


def warp_jacobian_numeric(src: np.ndarray, D: np.ndarray, offset, h: float = JACOBIAN_STEP,
                          origin=None) -> np.ndarray:
    """Central-difference derivative of the warped image w.r.t. disparity.

    Returns an array shaped like the warp output: one derivative per pixel
    and colour channel. The warp is pointwise, so this is the diagonal of
    the full Jacobian.
    """
    if h <= 0:
        raise ValueError("jacobian step must be positive")
    disp = _as_map(D).astype(np.float64)
    if origin is None:
        origin = _center_origin(src.shape, disp.shape)
    plus, minus = _warp(src, np.stack([disp + h, disp - h]), offset, origin)
    return (plus - minus) / np.asarray(2 * h, dtype=plus.dtype)
