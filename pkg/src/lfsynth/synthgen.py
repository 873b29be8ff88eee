"""Procedural layered light fields with exact disparity.

A scene is a stack of fronto-parallel layers. Each layer carries a smooth
analytic texture and, except for the background, a hard-edged mask. View
``(u, v)`` sees layer content at ``s - d * (u - c, v - c)`` where ``c`` is
the grid centre, so backward warping with the true disparity maps one view
onto another exactly wherever the surface is visible in both.
"""
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lfio import LightField, ViewCoord, load_lightfield, save_lightfield

TEXTURE_KINDS = ("noise", "stripes", "blobs")


@dataclass
class Texture:
    kind: str
    base: list  # RGB
    # sinusoid parameters (noise, stripes)
    freqs: list = field(default_factory=list)  # [(fx, fy)] cycles per pixel
    phases: list = field(default_factory=list)
    amps: list = field(default_factory=list)  # [(r, g, b)]
    # gaussian parameters (blobs)
    centers: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    colors: list = field(default_factory=list)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape + (3,), dtype=np.float64)
        out[...] = self.base
        for (fx, fy), ph, amp in zip(self.freqs, self.phases, self.amps):
            wave = np.sin(2 * np.pi * (fx * x + fy * y) + ph)
            out += wave[..., None] * np.asarray(amp)
        for (cx, cy), sig, col in zip(self.centers, self.sigmas, self.colors):
            g = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sig * sig))
            out += g[..., None] * np.asarray(col)
        return np.clip(out, 0.0, 1.0)


@dataclass
class Mask:
    """Union of rotated ellipses."""
    ellipses: list  # [(cx, cy, rx, ry, angle)]

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        inside = np.zeros(x.shape, dtype=bool)
        for cx, cy, rx, ry, ang in self.ellipses:
            c, s = np.cos(ang), np.sin(ang)
            dx, dy = x - cx, y - cy
            a = (c * dx + s * dy) / rx
            b = (-s * dx + c * dy) / ry
            inside |= a * a + b * b <= 1.0
        return inside


@dataclass
class Layer:
    disparity: float
    texture: Texture
    mask: Mask = None  # None means the layer covers everything


@dataclass
class SceneSpec:
    layers: list  # back to front
    width: int = 128
    height: int = 128
    grid_size: int = 8
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 4:
            raise ValueError(f"scenes have 1 to 4 layers, got {len(self.layers)}")
        d = [layer.disparity for layer in self.layers]
        if any(a >= b for a, b in zip(d, d[1:])):
            raise ValueError(f"layer disparities must increase from back to front, got {d}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SceneSpec":
        layers = []
        for layer in data["layers"]:
            mask = Mask(**layer["mask"]) if layer.get("mask") else None
            layers.append(Layer(layer["disparity"], Texture(**layer["texture"]), mask))
        return cls(layers, **{k: v for k, v in data.items() if k != "layers"})


def render_view(spec: SceneSpec, u: float, v: float):
    """One sub-aperture image and its visible-surface disparity, noise-free."""
    c = (spec.grid_size - 1) / 2
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    img = np.zeros((spec.height, spec.width, 3))
    disp = np.zeros((spec.height, spec.width))
    for layer in spec.layers:
        lx = xs - layer.disparity * (u - c)
        ly = ys - layer.disparity * (v - c)
        if layer.mask is None:
            cover = np.ones(xs.shape, dtype=bool)
        else:
            cover = layer.mask.evaluate(lx, ly)
        color = layer.texture.evaluate(lx, ly)
        img[cover] = color[cover]
        disp[cover] = layer.disparity
    return img, disp


def render_lightfield(spec: SceneSpec, name: str = "", sweep_range=None):
    """Render every view of the grid.

    Returns ``(lightfield, disparity)``; ``disparity`` maps each ViewCoord to
    an (H, W, 1) array, and is also attached to the light field as sidecars.
    """
    if sweep_range is not None:
        lo, hi = sweep_range
        outside = [l.disparity for l in spec.layers if not lo <= l.disparity <= hi]
        if outside:
            warnings.warn(f"layer disparities {outside} outside sweep range {sweep_range}",
                          stacklevel=2)
    rng = np.random.default_rng(spec.seed)
    views, disparity = {}, {}
    for v in range(spec.grid_size):
        for u in range(spec.grid_size):
            img, disp = render_view(spec, u, v)
            if spec.noise_sigma > 0:
                img = np.clip(img + rng.normal(0.0, spec.noise_sigma, img.shape), 0.0, 1.0)
            views[ViewCoord(u, v)] = img.astype(np.float32)
            disparity[ViewCoord(u, v)] = disp[..., None].astype(np.float32)
    lf = LightField(spec.grid_size, views, name, disparity)
    return lf, disparity


def random_texture(rng, kind=None) -> Texture:
    kind = kind or TEXTURE_KINDS[rng.integers(len(TEXTURE_KINDS))]
    base = rng.uniform(0.3, 0.7, 3)
    if kind == "blobs":
        n = int(rng.integers(6, 14))
        return Texture(
            kind, base.tolist(),
            freqs=[_random_freq(rng, 1 / 24, 1 / 12)],
            phases=[float(rng.uniform(0, 2 * np.pi))],
            amps=[rng.uniform(-0.08, 0.08, 3).tolist()],
            centers=rng.uniform(-40, 170, (n, 2)).tolist(),
            sigmas=rng.uniform(3, 9, n).tolist(),
            colors=rng.uniform(-0.3, 0.3, (n, 3)).tolist(),
        )
    if kind == "stripes":
        n = 2
        lo, hi = 1 / 16, 1 / 7
        amp = 0.2
    else:
        n = 8
        lo, hi = 1 / 40, 1 / 8
        amp = 0.09
    return Texture(
        kind, base.tolist(),
        freqs=[_random_freq(rng, lo, hi) for _ in range(n)],
        phases=rng.uniform(0, 2 * np.pi, n).tolist(),
        amps=(rng.uniform(0.3, 1.0, (n, 1)) * rng.uniform(-amp, amp, (n, 3))).tolist(),
    )


def _random_freq(rng, lo, hi):
    mag = rng.uniform(lo, hi)
    ang = rng.uniform(0, np.pi)
    return [float(mag * np.cos(ang)), float(mag * np.sin(ang))]


def _random_mask(rng, width, height) -> Mask:
    n = int(rng.integers(1, 3))
    ellipses = []
    for _ in range(n):
        cx = rng.uniform(0.25, 0.75) * width
        cy = rng.uniform(0.25, 0.75) * height
        rx = rng.uniform(0.12, 0.3) * width
        ry = rng.uniform(0.12, 0.3) * height
        ellipses.append([float(cx), float(cy), float(rx), float(ry), float(rng.uniform(0, np.pi))])
    return Mask(ellipses)


def random_scene(rng, width=128, height=128, grid_size=8, disparity_range=(-1.5, 1.5),
                 noise_sigma=0.01, layers=None) -> SceneSpec:
    """Background plus up to three masked foreground layers, depths spread over the range."""
    lo, hi = disparity_range
    n = int(layers or rng.choice([1, 2, 2, 3, 3]))
    # strictly increasing disparities with a minimum gap between layers
    gap = (hi - lo) / (2 * n)
    while True:
        d = np.sort(rng.uniform(lo, hi, n))
        if n == 1 or np.min(np.diff(d)) >= gap:
            break
    out = [Layer(float(d[0]), random_texture(rng))]
    for di in d[1:]:
        out.append(Layer(float(di), random_texture(rng), _random_mask(rng, width, height)))
    return SceneSpec(out, width, height, grid_size, noise_sigma, int(rng.integers(2 ** 31)))


def make_dataset(out_dir, count: int, size=128, seed=0, grid_size=8, noise_sigma=0.01,
                 disparity_range=(-1.5, 1.5)) -> Path:
    """Write ``count`` random light fields (with disparity sidecars) under ``out_dir``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    width, height = (size, size) if np.isscalar(size) else size
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(count)
    names = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        spec = random_scene(rng, width, height, grid_size, disparity_range, noise_sigma)
        name = f"lf_{i:03d}"
        lf, _ = render_lightfield(spec, name)
        save_lightfield(lf, out / name)
        (out / name / "scene.json").write_text(json.dumps(spec.to_json(), indent=1) + "\n")
        names.append(name)
    manifest = {
        "count": count,
        "seed": seed,
        "width": width,
        "height": height,
        "grid_size": grid_size,
        "noise_sigma": noise_sigma,
        "disparity_range": list(disparity_range),
        "lightfields": names,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return out


def load_dataset(path, with_disparity: bool = True) -> list:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    return [load_lightfield(path / name, with_disparity) for name in manifest["lightfields"]]
