"""Light-field container, image files and training patch extraction.

On disk a light field is a directory holding ``manifest.json`` and one
``view_{u}_{v}.lfv`` file per sub-aperture image. ``.lfv`` is a lossless
float container::

    b"LFV1" | u32 height | u32 width | u32 channels | float32 data (row-major, HWC)

All integers are little-endian. ``.ppm`` (binary P6) is an 8-bit export
for looking at results.
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

LFV_MAGIC = b"LFV1"
_LFV_HEADER = struct.Struct("<4sIII")


class LFIOError(OSError):
    """A light-field or image file is missing, malformed or inconsistent."""


class ViewCoord(NamedTuple):
    """Angular position; ``u`` moves horizontally (x), ``v`` vertically (y)."""
    u: float
    v: float


def corner_coords(grid_size: int) -> list:
    g = grid_size - 1
    return [ViewCoord(0, 0), ViewCoord(0, g), ViewCoord(g, 0), ViewCoord(g, g)]


@dataclass
class LightField:
    grid_size: int
    views: dict  # ViewCoord(int, int) -> (H, W, 3) float32
    name: str = ""
    disparity: dict = field(default_factory=dict)  # optional ground-truth sidecars

    def __post_init__(self):
        shapes = {v.shape for v in self.views.values()}
        if len(shapes) > 1:
            raise LFIOError(f"views of light field {self.name!r} differ in shape: {sorted(shapes)}")

    @property
    def corner_ids(self) -> list:
        return corner_coords(self.grid_size)

    @property
    def height(self) -> int:
        return next(iter(self.views.values())).shape[0]

    @property
    def width(self) -> int:
        return next(iter(self.views.values())).shape[1]

    def corners(self) -> list:
        """The N=4 input views in fixed corner order."""
        try:
            return [self.views[c] for c in self.corner_ids]
        except KeyError as err:
            raise LFIOError(f"light field {self.name!r} lacks corner view {err.args[0]}") from None

    def view(self, q) -> np.ndarray:
        key = ViewCoord(int(q[0]), int(q[1]))
        if key != tuple(q) or key not in self.views:
            raise LFIOError(f"light field {self.name!r} has no ground-truth view at {tuple(q)}")
        return self.views[key]


# ---------------------------------------------------------------------------
# image files

def _check_channels(img: np.ndarray, path):
    if img.ndim != 3:
        raise ValueError(f"expected (h, w, c) image for {path}, got shape {img.shape}")


def save_lfv(img: np.ndarray, path) -> None:
    _check_channels(img, path)
    h, w, c = img.shape
    data = np.ascontiguousarray(img, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_LFV_HEADER.pack(LFV_MAGIC, h, w, c))
        fh.write(data.tobytes())


def load_lfv(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise LFIOError(f"missing file {path}") from None
    if len(raw) < _LFV_HEADER.size:
        raise LFIOError(f"{path}: truncated header")
    magic, h, w, c = _LFV_HEADER.unpack_from(raw)
    if magic != LFV_MAGIC:
        raise LFIOError(f"{path}: bad magic {magic!r}")
    expected = _LFV_HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise LFIOError(f"{path}: expected {expected} bytes for {h}x{w}x{c}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_LFV_HEADER.size)
    return data.reshape(h, w, c).astype(np.float32)


def to_bytes8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_ppm(img: np.ndarray, path) -> None:
    _check_channels(img, path)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(to_bytes8(img).tobytes())


def load_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P6":
        raise LFIOError(f"{path}: not a binary PPM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise LFIOError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=pos + 1, count=w * h * 3)
    return data.reshape(h, w, 3).astype(np.float32) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write ``.lfv`` (lossless) or ``.ppm`` (8-bit preview) by extension."""
    _check_channels(img, path)
    if img.shape[2] not in (1, 3):
        raise ValueError(f"unsupported channel count {img.shape[2]} (expected 1 or 3)")
    if str(path).endswith(".ppm"):
        save_ppm(img, path)
    else:
        save_lfv(img, path)


def load_image(path) -> np.ndarray:
    if str(path).endswith(".ppm"):
        return load_ppm(path)
    return load_lfv(path)


# ---------------------------------------------------------------------------
# light-field directories

def view_filename(u: int, v: int) -> str:
    return f"view_{u}_{v}.lfv"


def disparity_filename(u: int, v: int) -> str:
    return f"disp_{u}_{v}.lfv"


def save_lightfield(lf: LightField, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for (u, v) in sorted(lf.views):
        entry = {"u": u, "v": v, "file": view_filename(u, v)}
        save_lfv(lf.views[(u, v)], path / entry["file"])
        if (u, v) in lf.disparity:
            entry["disparity"] = disparity_filename(u, v)
            save_lfv(lf.disparity[(u, v)], path / entry["disparity"])
        entries.append(entry)
    manifest = {
        "name": lf.name,
        "grid_size": lf.grid_size,
        "width": lf.width,
        "height": lf.height,
        "views": entries,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_lightfield(path, with_disparity: bool = True) -> LightField:
    path = Path(path)
    manifest_path = path / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise LFIOError(f"missing manifest {manifest_path}") from None
    except json.JSONDecodeError as err:
        raise LFIOError(f"corrupt manifest {manifest_path}: {err}") from None

    size = (manifest["height"], manifest["width"])
    views, disparity = {}, {}
    for entry in manifest["views"]:
        key = ViewCoord(int(entry["u"]), int(entry["v"]))
        img = load_lfv(path / entry["file"])
        if img.shape[:2] != size:
            raise LFIOError(f"{path / entry['file']}: size {img.shape[:2]} differs from manifest {size}")
        views[key] = img
        if with_disparity and "disparity" in entry:
            disparity[key] = load_lfv(path / entry["disparity"])
    return LightField(manifest["grid_size"], views, manifest.get("name", path.name), disparity)


# ---------------------------------------------------------------------------
# training samples

@dataclass
class TrainingSample:
    input_patches: list  # N views of (patch, patch, 3), corner order
    novel_pos: ViewCoord
    gt_patch: np.ndarray  # (patch - 2 * margin) square crop of the ground truth
    lf_id: int
    origin: tuple  # (x, y) of the input patch in view coordinates


def patch_origins(length: int, patch: int, stride: int) -> list:
    """Patch start positions along one axis, with a final edge-aligned one."""
    if length < patch:
        raise ValueError(f"view dimension {length} smaller than patch {patch}")
    starts = list(range(0, length - patch + 1, stride))
    if starts[-1] != length - patch:
        starts.append(length - patch)
    return starts


def extract_samples(lf: LightField, novel_positions, patch: int = 60, stride: int = 16,
                    margin: int = 12, lf_id: int = 0) -> list:
    """Cut every ``patch`` x ``patch`` window (stride ``stride``) for each position."""
    xs = patch_origins(lf.width, patch, stride)
    ys = patch_origins(lf.height, patch, stride)
    corners = lf.corners()
    out_size = patch - 2 * margin
    samples = []
    for q in novel_positions:
        gt = lf.view(q)
        for y in ys:
            for x in xs:
                samples.append(TrainingSample(
                    input_patches=[c[y:y + patch, x:x + patch] for c in corners],
                    novel_pos=ViewCoord(*q),
                    gt_patch=gt[y + margin:y + margin + out_size, x + margin:x + margin + out_size],
                    lf_id=lf_id,
                    origin=(x, y),
                ))
    return samples


def sample_novel_positions(lf_or_grid, count: int = 4, rng=None) -> list:
    """Draw ``count`` distinct non-corner grid positions uniformly."""
    grid = lf_or_grid.grid_size if isinstance(lf_or_grid, LightField) else int(lf_or_grid)
    rng = np.random.default_rng(rng)
    corners = set(corner_coords(grid))
    candidates = [ViewCoord(u, v) for v in range(grid) for u in range(grid)
                  if ViewCoord(u, v) not in corners]
    if count > len(candidates):
        raise ValueError(f"cannot draw {count} novel positions from {len(candidates)} non-corner views")
    picks = rng.choice(len(candidates), size=count, replace=False)
    return [candidates[i] for i in picks]


def count_origins(width: int, height: int, patch: int = 60, stride: int = 16) -> int:
    return len(patch_origins(width, patch, stride)) * len(patch_origins(height, patch, stride))

