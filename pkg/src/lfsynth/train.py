"""Loss, end-to-end gradients, ADAM and the three-stage training schedule.

Per-sample losses are summed over the output patch and channels; a batch
gradient is the mean of its per-sample gradients, accumulated in sample
order.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lfio import corner_coords, extract_samples, sample_novel_positions
from .nets import Model, assemble_color_features, network_backward, network_forward
from .parallel import SERIAL
from .pipeline import run_pipeline
from .sweep import SweepConfig, compute_features
from .warp import JACOBIAN_STEP, backward_warp, warp_jacobian_numeric

log = logging.getLogger(__name__)

STAGES = ("disparity", "color", "joint")
DESK_ITERATIONS = {"disparity": 500, "color": 900, "joint": 500}
SUPERVISING_CORNER = 0  # stage 1 compares the warp of corner (0, 0) with ground truth


class TrainingDiverged(RuntimeError):
    pass


def loss_l2(pred: np.ndarray, gt: np.ndarray):
    """Sum of squared differences and its gradient ``2 (pred - gt)``."""
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    diff = pred - gt
    return float(np.sum(diff.astype(np.float64) ** 2)), 2 * diff


# ---------------------------------------------------------------------------
# ADAM

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    lr: object = 1e-4  # one rate, or a dict of per-stage rates
    eps: float = 1e-8


def adam_init(params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                     0, beta1, beta2, lr, eps)


def adam_step(params, grads, state: AdamState) -> AdamState:
    """Bias-corrected ADAM update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and state lists differ in length")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        p -= step.astype(p.dtype, copy=False)
    return state


# ---------------------------------------------------------------------------
# data

@dataclass
class TrainConfig:
    batch_size: int = 20
    iterations: dict = field(default_factory=lambda: dict(DESK_ITERATIONS))
    lr: object = 1e-4  # one rate, or a dict of per-stage rates
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    sweep: SweepConfig = field(default_factory=SweepConfig)
    jacobian_step: float = JACOBIAN_STEP
    stages: tuple = STAGES
    patch: int = 60
    stride: int = 16
    positions_per_lf: int = 4

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stages {sorted(unknown)}")
        rates = self.lr.values() if isinstance(self.lr, dict) else [self.lr]
        if any(r < 0 for r in rates):
            raise ValueError("learning rates must be non-negative")

    def lr_for(self, stage: str) -> float:
        return self.lr[stage] if isinstance(self.lr, dict) else self.lr


class TrainingData:
    """Samples plus the full-frame arrays they index into.

    Plane-sweep features do not depend on the weights, so they are computed
    once per (light field, novel position) on the full frame and cropped
    per patch.
    """

    def __init__(self, lightfields, sweep: SweepConfig, rng, positions_per_lf=4, patch=60,
                 stride=16, margin=12, workers=SERIAL):
        self.sweep = sweep
        self.corners = [lf.corners() for lf in lightfields]
        self.gt = {}
        self.features = {}
        self.samples = []
        self.patch = patch
        jobs = []
        for idx, lf in enumerate(lightfields):
            positions = sample_novel_positions(lf, positions_per_lf, rng)
            for q in positions:
                self.gt[idx, q] = lf.view(q)
                jobs.append((idx, lf, q))
            self.samples += extract_samples(lf, positions, patch, stride, margin, lf_id=idx)
        feats = workers.map(lambda job: compute_features(job[1], job[2], sweep).data, jobs)
        for (idx, _, q), f in zip(jobs, feats):
            self.features[idx, q] = f
        log.info("prepared %d samples from %d light fields", len(self.samples), len(lightfields))

    def __len__(self):
        return len(self.samples)

    def crop_features(self, sample) -> np.ndarray:
        x, y = sample.origin
        f = self.features[sample.lf_id, sample.novel_pos]
        return f[y:y + self.patch, x:x + self.patch]


def cast_model(model: Model, dtype) -> Model:
    return replace(model, disparity=model.disparity.astype(dtype), color=model.color.astype(dtype),
                   optimizer={})


# ---------------------------------------------------------------------------
# gradients

def disparity_grad_from_color_input(state, corners, grad_h, h=JACOBIAN_STEP) -> np.ndarray:
    """dE/dD given dE/dH: numeric warp Jacobians, 1 for the disparity channel, 0 for q."""
    grad_d = np.zeros(state.disparity.shape[:2], dtype=grad_h.dtype)
    for i, (src, off) in enumerate(zip(corners, state.offsets)):
        jac = warp_jacobian_numeric(src, state.disparity, off, h, state.disp_origin)
        grad_d += np.sum(grad_h[..., 3 * i:3 * i + 3] * jac, axis=2)
    grad_d += grad_h[..., 3 * len(corners)]
    return grad_d[..., None]


def end_to_end_gradients(model: Model, features, corners, q, origin, gt, h=JACOBIAN_STEP):
    """Loss and gradients of both networks for one patch.

    Returns ``(E, grad_disparity, grad_color)`` with the gradient lists
    mirroring ``Network.params()``.
    """
    state = run_pipeline(model, features, corners, q, origin)
    E, grad_pred = loss_l2(state.prediction, gt)
    grad_c, grad_h = network_backward(model.color, state.color_cache, grad_pred)
    grad_disp = disparity_grad_from_color_input(state, corners, grad_h, h)
    grad_d, _ = network_backward(model.disparity, state.disp_cache, grad_disp,
                                 need_input_grad=False)
    return E, grad_d, grad_c


def disparity_stage_gradients(model: Model, features, corners, q, origin, gt_full,
                              h=JACOBIAN_STEP, corner=SUPERVISING_CORNER):
    """Stage-1 objective: warp one corner with the predicted disparity.

    ``gt_full`` is the full ground-truth view; the loss covers the whole
    disparity-map footprint.
    """
    disp, cache = network_forward(model.disparity, features)
    m = model.disparity.reduction // 2
    ox, oy = origin[0] + m, origin[1] + m
    p = corner_coords(model.grid_size)[corner]
    off = (p[0] - q[0], p[1] - q[1])
    src = corners[corner]
    warped = backward_warp(src, disp, off, (ox, oy)).astype(disp.dtype)
    hh, ww = disp.shape[:2]
    E, grad_w = loss_l2(warped, gt_full[oy:oy + hh, ox:ox + ww].astype(disp.dtype))
    jac = warp_jacobian_numeric(src, disp, off, h, (ox, oy))
    grad_disp = np.sum(grad_w * jac, axis=2, keepdims=True)
    grad_d, _ = network_backward(model.disparity, cache, grad_disp, need_input_grad=False)
    return E, grad_d


def color_stage_gradients(model: Model, color_input, gt):
    pred, cache = network_forward(model.color, color_input)
    E, grad_pred = loss_l2(pred, gt)
    grad_c, _ = network_backward(model.color, cache, grad_pred, need_input_grad=False)
    return E, grad_c


def mean_gradients(per_sample) -> list:
    """Average gradient lists, summing strictly in sample order."""
    total = [g.copy() for g in per_sample[0]]
    for grads in per_sample[1:]:
        for acc, g in zip(total, grads):
            acc += g
    n = len(per_sample)
    return [acc / np.asarray(n, dtype=acc.dtype) for acc in total]


# ---------------------------------------------------------------------------
# schedule

class BatchStream:
    """Mini-batches drawn from per-epoch seeded permutations."""

    def __init__(self, n, batch_size, rng):
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._perm = np.empty(0, dtype=np.intp)
        self._pos = 0

    def next(self) -> list:
        out = []
        while len(out) < self.batch_size:
            if self._pos >= len(self._perm):
                self._perm = self.rng.permutation(self.n)
                self._pos = 0
            take = min(self.batch_size - len(out), len(self._perm) - self._pos)
            out.extend(self._perm[self._pos:self._pos + take].tolist())
            self._pos += take
        return out


def _check_finite(E, stage, it, ids):
    if not math.isfinite(E):
        raise TrainingDiverged(f"non-finite loss in stage {stage} at iteration {it}; "
                               f"samples {ids}")


def _log_line(logger_fh, it, stage, E):
    if logger_fh is not None:
        logger_fh.write(f"{it},{stage},{E:.9g}\n")


def train_stage1_disparity(model: Model, data: TrainingData, cfg: TrainConfig, rng,
                           workers=SERIAL, metrics=None, history=None) -> Model:
    iters = cfg.iterations.get("disparity", 0)
    state = adam_init(model.disparity.params(), cfg.lr_for("disparity"), cfg.beta1, cfg.beta2, cfg.eps)
    stream = BatchStream(len(data), cfg.batch_size, rng)

    def one(i):
        s = data.samples[i]
        return disparity_stage_gradients(model, data.crop_features(s), data.corners[s.lf_id],
                                         s.novel_pos, s.origin, data.gt[s.lf_id, s.novel_pos],
                                         cfg.jacobian_step)

    for it in range(iters):
        ids = stream.next()
        results = workers.map(one, ids)
        E = sum(r[0] for r in results) / len(results)
        _check_finite(E, "disparity", it, ids)
        adam_step(model.disparity.params(), mean_gradients([r[1] for r in results]), state)
        _record(metrics, history, it, "disparity", E)
    model.optimizer = {"disparity": state}
    return model


def color_input_for(model: Model, data: TrainingData, s) -> np.ndarray:
    """Colour-network input of one sample under the current disparity network."""
    disp, _ = network_forward(model.disparity, data.crop_features(s))
    m = model.disparity.reduction // 2
    origin = (s.origin[0] + m, s.origin[1] + m)
    q = s.novel_pos
    warped = [backward_warp(c, disp, (p[0] - q[0], p[1] - q[1]), origin).astype(disp.dtype)
              for c, p in zip(data.corners[s.lf_id], corner_coords(model.grid_size))]
    return assemble_color_features(warped, disp, q, model.grid_size)


def precompute_color_inputs(model: Model, data: TrainingData, workers=SERIAL) -> list:
    return workers.map(lambda s: color_input_for(model, data, s), data.samples)


def train_stage2_color(model: Model, data: TrainingData, cfg: TrainConfig, rng,
                       workers=SERIAL, metrics=None, history=None) -> Model:
    iters = cfg.iterations.get("color", 0)
    state = adam_init(model.color.params(), cfg.lr_for("color"), cfg.beta1, cfg.beta2, cfg.eps)
    stream = BatchStream(len(data), cfg.batch_size, rng)
    inputs = precompute_color_inputs(model, data, workers) if iters else []

    def one(i):
        return color_stage_gradients(model, inputs[i], data.samples[i].gt_patch)

    for it in range(iters):
        ids = stream.next()
        results = workers.map(one, ids)
        E = sum(r[0] for r in results) / len(results)
        _check_finite(E, "color", it, ids)
        adam_step(model.color.params(), mean_gradients([r[1] for r in results]), state)
        _record(metrics, history, it, "color", E)
    model.optimizer = {"color": state}
    return model


def train_stage3_joint(model: Model, data: TrainingData, cfg: TrainConfig, rng,
                       workers=SERIAL, metrics=None, history=None) -> Model:
    iters = cfg.iterations.get("joint", 0)
    lr = cfg.lr_for("joint")
    st_d = adam_init(model.disparity.params(), lr, cfg.beta1, cfg.beta2, cfg.eps)
    st_c = adam_init(model.color.params(), lr, cfg.beta1, cfg.beta2, cfg.eps)
    stream = BatchStream(len(data), cfg.batch_size, rng)

    def one(i):
        s = data.samples[i]
        return end_to_end_gradients(model, data.crop_features(s), data.corners[s.lf_id],
                                    s.novel_pos, s.origin, s.gt_patch, cfg.jacobian_step)

    for it in range(iters):
        ids = stream.next()
        results = workers.map(one, ids)
        E = sum(r[0] for r in results) / len(results)
        _check_finite(E, "joint", it, ids)
        grad_d = mean_gradients([r[1] for r in results])
        grad_c = mean_gradients([r[2] for r in results])
        adam_step(model.disparity.params(), grad_d, st_d)
        adam_step(model.color.params(), grad_c, st_c)
        _record(metrics, history, it, "joint", E)
    model.optimizer = {"disparity": st_d, "color": st_c}
    return model


def _record(metrics, history, it, stage, E):
    _log_line(metrics, it, stage, E)
    if history is not None:
        history.setdefault(stage, []).append(E)
    if it % 50 == 0:
        log.info("stage %s iter %d loss %.4f", stage, it, E)


STAGE_FUNCS = {
    "disparity": train_stage1_disparity,
    "color": train_stage2_color,
    "joint": train_stage3_joint,
}


def train(model: Model, data: TrainingData, cfg: TrainConfig, rng, workers=SERIAL,
          metrics=None, on_stage_end=None) -> dict:
    """Run the configured stages in order; returns per-stage loss histories."""
    history = {}
    for stage in STAGES:
        if stage not in cfg.stages:
            continue
        STAGE_FUNCS[stage](model, data, cfg, rng, workers, metrics, history)
        if on_stage_end is not None:
            on_stage_end(stage, model)
    return history


def window_means(losses, window: int = 100) -> list:
    """Means of consecutive non-overlapping windows (a trailing partial one is dropped)."""
    n = len(losses) // window
    return [float(np.mean(losses[i * window:(i + 1) * window])) for i in range(n)]
