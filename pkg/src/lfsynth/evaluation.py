"""PSNR / SSIM, non-learned baselines and the held-out evaluation protocol."""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .lfio import corner_coords
from .parallel import SERIAL
from .pipeline import synthesize
from .sweep import FeatureStack, SweepConfig, compute_features, wta_disparity
from .warp import backward_warp

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
BORDER = 12
METHODS = ("ours", "wta-blend", "nearest")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for unit peak, capped at 99 dB."""
    _same_shape(a, b)
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _gray(img):
    img = np.asarray(img, np.float64)
    return img.mean(axis=2) if img.ndim == 3 else img


def ssim_map(a, b, peak: float = 1.0) -> np.ndarray:
    x, y = _gray(a), _gray(b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def filt(z):
        return convolve2d(z, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM on luminance with an 11x11 Gaussian window (sigma 1.5)."""
    _same_shape(a, b)
    return float(np.mean(ssim_map(a, b)))


# ---------------------------------------------------------------------------
# baselines

def baseline_nearest_view(lf, q) -> np.ndarray:
    """The input corner closest to ``q``; ties resolve in corner order."""
    dists = [math.hypot(p[0] - q[0], p[1] - q[1]) for p in lf.corner_ids]
    return lf.corners()[int(np.argmin(dists))]


def baseline_wta_blend(lf, q, cfg: SweepConfig, features=None) -> np.ndarray:
    """Winner-take-all disparity from the sweep, then an unweighted blend of warps."""
    if features is None:
        features = compute_features(lf, q, cfg)
    elif not isinstance(features, FeatureStack):
        features = FeatureStack(features, cfg)
    disp = wta_disparity(features)
    warped = [backward_warp(c, disp, (p[0] - q[0], p[1] - q[1]), (0, 0))
              for c, p in zip(lf.corners(), corner_coords(lf.grid_size))]
    return np.mean(warped, axis=0).astype(np.float32)


def occlusion_band(lf, q) -> np.ndarray:
    """Pixels of view ``q`` hidden in at least one corner view.

    Needs ground-truth disparity sidecars. A pixel is occluded in corner
    ``p`` when the surface visible there at ``s + (p - q) D_q(s)`` has a
    different disparity.
    """
    dq = lf.disparity[tuple(q)][..., 0].astype(np.float64)
    height, width = dq.shape
    rows, cols = np.indices(dq.shape)
    band = np.zeros(dq.shape, dtype=bool)
    for p in lf.corner_ids:
        dp = lf.disparity[p][..., 0]
        x = np.rint(cols + (p[0] - q[0]) * dq).astype(int)
        y = np.rint(rows + (p[1] - q[1]) * dq).astype(int)
        inside = (x >= 0) & (x < width) & (y >= 0) & (y < height)
        seen = dp[np.clip(y, 0, height - 1), np.clip(x, 0, width - 1)]
        band |= inside & (np.abs(seen - dq) > 1e-4)
    return band


# ---------------------------------------------------------------------------
# protocol

@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"aggregates": self.aggregates, "rows": self.rows}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        keys = ["scene", "u", "v", "method", "psnr", "ssim", "psnr_band", "band_pixels"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in keys})


def non_corner_positions(grid_size: int) -> list:
    corners = set(corner_coords(grid_size))
    return [(u, v) for v in range(grid_size) for u in range(grid_size) if (u, v) not in corners]


def aggregate(rows) -> dict:
    out = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        sel = [r for r in rows if r["method"] == method]
        band = [r["psnr_band"] for r in sel if r["psnr_band"] is not None]
        out[method] = {
            "views": len(sel),
            "psnr": float(np.mean([r["psnr"] for r in sel])),
            "ssim": float(np.mean([r["ssim"] for r in sel])),
            "psnr_band": float(np.mean(band)) if band else None,
            "band_views": len(band),
        }
    return out


def _crop(img, full_shape, border):
    """Crop ``img`` (full frame or centred interior) to the metric region."""
    trim_y = (full_shape[0] - img.shape[0]) // 2
    trim_x = (full_shape[1] - img.shape[1]) // 2
    if trim_y > border or trim_x > border:
        raise ValueError(f"prediction lacks {max(trim_x, trim_y)} border pixels; metric border is {border}")
    by, bx = border - trim_y, border - trim_x
    return img[by:img.shape[0] - by, bx:img.shape[1] - bx]


def evaluate_view(lf, q, methods, model=None, sweep=None, border=BORDER, scene="") -> list:
    gt = lf.view(q)
    needs_features = any(m in ("ours", "wta-blend") for m in methods)
    cfg = model.sweep if model is not None else sweep
    features = compute_features(lf, q, cfg).data if needs_features else None
    band = None
    if lf.disparity:
        band = _crop(occlusion_band(lf, q)[..., None], gt.shape, border)[..., 0]
    gt_c = _crop(gt, gt.shape, border)
    rows = []
    for method in methods:
        if method == "ours":
            pred = synthesize(model, lf, q, features)[0]
        elif method == "wta-blend":
            pred = baseline_wta_blend(lf, q, cfg, features)
        elif method == "nearest":
            pred = baseline_nearest_view(lf, q)
        elif method == "ground-truth":
            pred = gt
        else:
            raise ValueError(f"unknown method {method!r}")
        pred_c = _crop(pred, gt.shape, border)
        row = {
            "scene": scene, "u": q[0], "v": q[1], "method": method,
            "psnr": psnr(pred_c, gt_c), "ssim": ssim(pred_c, gt_c),
            "psnr_band": None, "band_pixels": 0,
        }
        if band is not None and band.any():
            row["band_pixels"] = int(band.sum())
            row["psnr_band"] = psnr(pred_c[band], gt_c[band])
        rows.append(row)
    return rows


def evaluate(model, lightfields, positions=None, methods=METHODS, sweep=None, border=BORDER,
             workers=SERIAL) -> EvalReport:
    """Synthesize every requested view and score it against ground truth.

    ``positions`` defaults to every non-corner grid view. Metrics skip a
    ``border``-pixel frame, the margin lost to valid convolutions.
    """
    if "ours" in methods and model is None:
        raise ValueError("method 'ours' needs a model")
    if model is None and sweep is None and "wta-blend" in methods:
        raise ValueError("wta-blend needs a sweep configuration")
    jobs = []
    for idx, lf in enumerate(lightfields):
        for q in positions or non_corner_positions(lf.grid_size):
            jobs.append((lf, tuple(q), lf.name or f"scene_{idx}"))
    per_view = workers.map(
        lambda job: evaluate_view(job[0], job[1], methods, model, sweep, border, job[2]), jobs)
    rows = [r for rs in per_view for r in rs]
    return EvalReport(rows, aggregate(rows))
