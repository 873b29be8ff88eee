"""Finite-difference checks of every hand-written backward pass.

Two suites: single layers on small random tensors, and the whole
synthesis pipeline on a tiny scene. Errors are relative in the
Euclidean norm, ``|a - b| / max(|a|, |b|)``, taken over all parameters
of a network at once (and separately for input gradients).
"""
from dataclasses import dataclass

import numpy as np

from .nets import init_model, network_backward, network_forward, xavier_init
from .pipeline import run_pipeline
from .sweep import SweepConfig, compute_features
from .synthgen import random_scene, render_lightfield
from .tensor import ConvLayer, conv2d_backward, conv2d_forward, relu_backward, relu_forward
from .train import cast_model, end_to_end_gradients, loss_l2

LAYER_TOL = 1e-4
COLOR_TOL = {"double": 1e-4, "single": 1e-2}
DISPARITY_TOL = 1e-2


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tol)

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{self.name:<28} rel err {self.error:.3e} (tol {self.tol:.0e}) {status}"


def rel_error(a, b) -> float:
    """Relative error; infinite when both are zero, since that checks nothing."""
    a, b = np.ravel(a).astype(np.float64), np.ravel(b).astype(np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float("inf") if scale == 0 else float(np.linalg.norm(a - b) / scale)


def _flat(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a).astype(np.float64) for a in arrays])


def numeric_grad(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    g = np.zeros(x.shape, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


# ---------------------------------------------------------------------------
# layer suite

def check_conv(rng, k: int, shape=(8, 8, 4), c_out=3, eps=1e-6, perturb=0.0) -> CheckResult:
    x = rng.standard_normal(shape)
    layer = ConvLayer(rng.standard_normal((k, k, shape[2], c_out)), rng.standard_normal(c_out))
    out = conv2d_forward(x, layer)
    weight = rng.standard_normal(out.shape)

    def f():
        return float(np.sum(conv2d_forward(x, layer) * weight))

    gx, gk, gb = conv2d_backward(x, layer, weight)
    gk = gk * (1 + perturb)
    err = max(rel_error(gx, numeric_grad(f, x, eps)),
              rel_error(gk, numeric_grad(f, layer.kernel, eps)),
              rel_error(gb, numeric_grad(f, layer.bias, eps)))
    return CheckResult(f"conv k={k}", err, LAYER_TOL)


def check_relu(rng, shape=(8, 8, 4), eps=1e-6) -> CheckResult:
    # keep inputs away from the kink so central differences stay one-sided-free
    x = rng.standard_normal(shape)
    x += np.sign(x) * 0.1
    weight = rng.standard_normal(shape)

    def f():
        return float(np.sum(relu_forward(x) * weight))

    return CheckResult("relu", rel_error(relu_backward(x, weight), numeric_grad(f, x, eps)),
                       LAYER_TOL)


def check_l2(rng, shape=(8, 8, 3), eps=1e-6) -> CheckResult:
    pred = rng.standard_normal(shape)
    gt = rng.standard_normal(shape)
    _, grad = loss_l2(pred, gt)
    num = numeric_grad(lambda: loss_l2(pred, gt)[0], pred, eps)
    return CheckResult("l2 loss", rel_error(grad, num), LAYER_TOL)


def check_network(rng, shape=(8, 8, 4), eps=1e-6, perturb=0.0) -> CheckResult:
    net = xavier_init("color", (5, 3, 1), (shape[2], 4, 4, 3), rng, np.float64)
    for layer in net.layers:
        layer.bias[:] = rng.uniform(0.05, 0.2, layer.bias.shape)
    x = rng.standard_normal(shape)
    out, cache = network_forward(net, x)
    weight = rng.standard_normal(out.shape)

    def f():
        return float(np.sum(network_forward(net, x)[0] * weight))

    grads, gx = network_backward(net, cache, weight)
    num = [numeric_grad(f, p, eps) for p in net.params()]
    err = max(rel_error(gx, numeric_grad(f, x, eps)),
              rel_error(_flat(grads) * (1 + perturb), _flat(num)))
    return CheckResult("conv-relu stack", err, LAYER_TOL)


def layer_suite(seed: int = 0, perturb: float = 0.0) -> list:
    rng = np.random.default_rng(seed)
    out = [check_conv(rng, k, perturb=perturb) for k in (1, 3, 5, 7)]
    out += [check_relu(rng), check_l2(rng), check_network(rng, perturb=perturb)]
    return out


# ---------------------------------------------------------------------------
# pipeline suite

@dataclass
class TinyProblem:
    model: object
    features: np.ndarray
    corners: list
    q: tuple
    origin: tuple
    gt: np.ndarray


def tiny_problem(seed: int = 0, dtype=np.float64, out_size=8) -> TinyProblem:
    """48x48 two-layer scene, L=4, four corners, an ``out_size`` output patch."""
    rng = np.random.default_rng(seed)
    spec = random_scene(rng, width=48, height=48, noise_sigma=0.0, layers=2,
                        disparity_range=(-1.0, 1.0))
    lf, _ = render_lightfield(spec)
    sweep = SweepConfig(4, -1.5, 1.5)
    q = (2, 5)
    origin = (6, 5)
    feats = compute_features(lf, q, sweep).data.astype(dtype)
    corners = [c.astype(dtype) for c in lf.corners()]
    # first initialisation whose ReLU layers all have live units, so that
    # gradients reach every parameter and the disparity map
    for k in range(100):
        model = cast_model(init_model(sweep, widths=(4, 4, 4), seed=1000 * seed + k), dtype)
        for net in (model.disparity, model.color):
            for layer in net.layers[:-1]:
                layer.bias[:] = 0.5
        margin = model.margin
        patch = out_size + 2 * margin
        crop = feats[origin[1]:origin[1] + patch, origin[0]:origin[0] + patch]
        state = run_pipeline(model, crop, corners, q, origin)
        caches = state.disp_cache.preacts[:-1] + state.color_cache.preacts[:-1]
        if all((z > 0).any() for z in caches):
            break
    else:
        raise RuntimeError(f"no initialisation with live units for seed {seed}")
    y0, x0 = origin[1] + margin, origin[0] + margin
    gt = lf.view(q)[y0:y0 + out_size, x0:x0 + out_size].astype(dtype)
    return TinyProblem(model, crop, corners, q, origin, gt)


def pipeline_loss(prob: TinyProblem) -> float:
    state = run_pipeline(prob.model, prob.features, prob.corners, prob.q, prob.origin)
    return loss_l2(state.prediction, prob.gt)[0]


def pipeline_suite(seed: int = 0, precision: str = "double", perturb: float = 0.0,
                   jacobian_step=None) -> list:
    """Analytic end-to-end gradients vs. double-precision differences of E.

    The disparity gradient goes through the numeric warp Jacobian, so its
    agreement is limited by that step's truncation error.
    """
    if precision not in COLOR_TOL:
        raise ValueError(f"precision must be 'double' or 'single', got {precision!r}")
    dtype = np.float64 if precision == "double" else np.float32
    prob = tiny_problem(seed, dtype)
    kw = {} if jacobian_step is None else {"h": jacobian_step}
    _, grad_d, grad_c = end_to_end_gradients(prob.model, prob.features, prob.corners, prob.q,
                                             prob.origin, prob.gt, **kw)
    ref = tiny_problem(seed, np.float64)
    num_c = [numeric_grad(lambda: pipeline_loss(ref), p, 1e-6) for p in ref.model.color.params()]
    num_d = [numeric_grad(lambda: pipeline_loss(ref), p, 1e-5)
             for p in ref.model.disparity.params()]
    err_c = rel_error(_flat(grad_c) * (1 + perturb), _flat(num_c))
    err_d = rel_error(_flat(grad_d) * (1 + perturb), _flat(num_d))
    return [CheckResult("pipeline dE/dw_c", err_c, COLOR_TOL[precision]),
            CheckResult("pipeline dE/dw_d", err_d, DISPARITY_TOL)]


def run_all(seed: int = 0, precision: str = "double", perturb: float = 0.0) -> list:
    return layer_suite(seed, perturb) + pipeline_suite(seed, precision, perturb)
