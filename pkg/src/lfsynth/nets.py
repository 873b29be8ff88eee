"""The disparity estimator and colour predictor networks.

Both are four valid convolutions with ReLU after every layer but the last.
With the default kernels (7, 5, 3, 1) each network trims 12 pixels from
each spatial dimension, so a 60x60 patch becomes 48x48 disparity and then
a 36x36 colour patch.

Model files (``.lfnn``) hold both networks plus the sweep configuration::

    b"LFNN" | u16 version | u16 network count
    u32 levels | f64 d_min | f64 d_max | u32 grid size
    per network: u8 role | u32 layer count
        per layer: u32 k | u32 c_in | u32 c_out | f32 weights | f32 biases
    u32 optimizer block count
        per block: b"ADAM" | u8 role | u64 step | f64 beta1, beta2, lr, eps
                   then f32 m, f32 v for every parameter array in network order

Little-endian throughout. Weights are stored as (k, k, c_in, c_out).
"""
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .sweep import SweepConfig
from .tensor import (ConvLayer, DimensionError, conv2d_backward, conv2d_forward,
                     output_size, relu_backward, relu_forward)

DEFAULT_KERNELS = (7, 5, 3, 1)
DEFAULT_WIDTHS = (100, 100, 50)

ROLES = {"disparity": 0, "color": 1}
ROLE_NAMES = {v: k for k, v in ROLES.items()}

MODEL_MAGIC = b"LFNN"
MODEL_VERSION = 1


@dataclass
class Network:
    layers: list
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown network role {self.role!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.c_out != nxt.c_in:
                raise DimensionError(f"layer widths do not chain: {prev.c_out} -> {nxt.c_in}")

    @property
    def kernel_sizes(self) -> tuple:
        return tuple(layer.k for layer in self.layers)

    @property
    def c_in(self) -> int:
        return self.layers[0].c_in

    @property
    def c_out(self) -> int:
        return self.layers[-1].c_out

    @property
    def reduction(self) -> int:
        return sum(k - 1 for k in self.kernel_sizes)

    def params(self) -> list:
        """Flat list of parameter arrays: kernel, bias, kernel, bias, ..."""
        out = []
        for layer in self.layers:
            out += [layer.kernel, layer.bias]
        return out

    def astype(self, dtype) -> "Network":
        return Network([layer.astype(dtype) for layer in self.layers], self.role)

    def copy(self) -> "Network":
        return self.astype(self.layers[0].kernel.dtype)


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(role: str, kernel_sizes, channels, rng=None, dtype=np.float32) -> Network:
    """Glorot-uniform kernels and zero biases.

    ``channels`` lists the widths from input to output, one more entry than
    ``kernel_sizes``. Fans count the receptive field: ``k*k*c``.
    """
    if len(channels) != len(kernel_sizes) + 1:
        raise ValueError("need one more channel entry than kernel sizes")
    if any(a <= b for a, b in zip(kernel_sizes, kernel_sizes[1:])):
        raise ValueError(f"kernel sizes must strictly decrease, got {tuple(kernel_sizes)}")
    rng = np.random.default_rng(rng)
    layers = []
    for k, c_in, c_out in zip(kernel_sizes, channels[:-1], channels[1:]):
        bound = xavier_bound(k * k * c_in, k * k * c_out)
        kernel = rng.uniform(-bound, bound, size=(k, k, c_in, c_out)).astype(dtype)
        layers.append(ConvLayer(kernel, np.zeros(c_out, dtype=dtype)))
    return Network(layers, role)


def disparity_network(feature_channels: int, widths=DEFAULT_WIDTHS, kernels=DEFAULT_KERNELS,
                      rng=None) -> Network:
    return xavier_init("disparity", kernels, (feature_channels, *widths, 1), rng)


def color_network(num_views: int = 4, widths=DEFAULT_WIDTHS, kernels=DEFAULT_KERNELS,
                  rng=None) -> Network:
    return xavier_init("color", kernels, (3 * num_views + 3, *widths, 3), rng)


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # input of each layer
    preacts: list = field(default_factory=list)  # conv output of each layer


def network_forward(net: Network, x: np.ndarray):
    """Run ``net`` on ``x``; returns ``(output, cache)`` for the backward pass."""
    if x.shape[-1] != net.c_in:
        raise DimensionError(f"{net.role} network expects {net.c_in} channels, got {x.shape[-1]}")
    cache = ForwardCache()
    a = x
    last = len(net.layers) - 1
    for idx, layer in enumerate(net.layers):
        z = conv2d_forward(a, layer)
        cache.inputs.append(a)
        cache.preacts.append(z)
        a = relu_forward(z) if idx < last else z
    return a, cache


def network_backward(net: Network, cache: ForwardCache, grad_out: np.ndarray,
                     need_input_grad: bool = True):
    """Returns ``(param_grads, grad_input)``; ``param_grads`` mirrors ``net.params()``."""
    grads = [None] * (2 * len(net.layers))
    g = grad_out
    last = len(net.layers) - 1
    for idx in range(last, -1, -1):
        if idx < last:
            g = relu_backward(cache.preacts[idx], g)
        want_input = need_input_grad or idx > 0
        g_in, g_k, g_b = conv2d_backward(cache.inputs[idx], net.layers[idx], g, want_input)
        grads[2 * idx] = g_k
        grads[2 * idx + 1] = g_b
        g = g_in
    return grads, g


def disparity_forward(features: np.ndarray, net: Network) -> np.ndarray:
    """Disparity map (h - r, w - r, 1) from a plane-sweep feature tensor."""
    return network_forward(net, features)[0]


def color_forward(color_features: np.ndarray, net: Network) -> np.ndarray:
    return network_forward(net, color_features)[0]


def position_channels(q, grid_size: int):
    """Novel-view position scaled to [0, 1] across the angular grid."""
    return q[0] / (grid_size - 1), q[1] / (grid_size - 1)


def assemble_color_features(warped, D: np.ndarray, q, grid_size: int) -> np.ndarray:
    """Stack warped RGB views, the disparity and the two position channels."""
    disp = D if D.ndim == 3 else D[..., None]
    h, w = disp.shape[:2]
    for img in warped:
        if img.shape != (h, w, 3):
            raise DimensionError(f"warped image {img.shape} does not match disparity {(h, w)}")
    qu, qv = position_channels(q, grid_size)
    dtype = np.result_type(disp, *warped)
    pos = np.empty((h, w, 2), dtype=dtype)
    pos[..., 0] = qu
    pos[..., 1] = qv
    return np.concatenate([*warped, disp.astype(dtype), pos], axis=2)


# ---------------------------------------------------------------------------
# model files

@dataclass
class Model:
    disparity: Network
    color: Network
    sweep: SweepConfig
    grid_size: int = 8
    optimizer: dict = field(default_factory=dict)  # role -> AdamState, checkpoints only

    @property
    def margin(self) -> int:
        """Pixels lost on each side of a frame through both networks."""
        return (self.disparity.reduction + self.color.reduction) // 2

    def output_size(self, size: int) -> int:
        return output_size(output_size(size, self.disparity.kernel_sizes), self.color.kernel_sizes)


def init_model(sweep: SweepConfig, grid_size: int = 8, widths=DEFAULT_WIDTHS,
               kernels=DEFAULT_KERNELS, seed=0, color_widths=None) -> Model:
    rng = np.random.default_rng(seed)
    disp = disparity_network(sweep.channels, widths, kernels, rng)
    color = color_network(4, color_widths or widths, kernels, rng)
    return Model(disp, color, sweep, grid_size)


def _write_network(buf, net: Network):
    buf.write(struct.pack("<BI", ROLES[net.role], len(net.layers)))
    for layer in net.layers:
        buf.write(struct.pack("<III", layer.k, layer.c_in, layer.c_out))
        buf.write(np.ascontiguousarray(layer.kernel, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())


def _read(buf, fmt):
    s = struct.Struct(fmt)
    data = buf.read(s.size)
    if len(data) != s.size:
        raise ValueError("truncated model file")
    return s.unpack(data)


def _read_array(buf, count, shape):
    data = buf.read(4 * count)
    if len(data) != 4 * count:
        raise ValueError("truncated model file")
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)


def _read_network(buf) -> Network:
    role, n_layers = _read(buf, "<BI")
    layers = []
    for _ in range(n_layers):
        k, c_in, c_out = _read(buf, "<III")
        kernel = _read_array(buf, k * k * c_in * c_out, (k, k, c_in, c_out))
        bias = _read_array(buf, c_out, (c_out,))
        layers.append(ConvLayer(kernel, bias))
    return Network(layers, ROLE_NAMES[role])


def model_to_bytes(model: Model) -> bytes:
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<HH", MODEL_VERSION, 2))
    buf.write(struct.pack("<Idd", model.sweep.levels, model.sweep.d_min, model.sweep.d_max))
    buf.write(struct.pack("<I", model.grid_size))
    _write_network(buf, model.disparity)
    _write_network(buf, model.color)
    states = [(role, st) for role, st in sorted(model.optimizer.items(), key=lambda r: ROLES[r[0]])]
    buf.write(struct.pack("<I", len(states)))
    for role, st in states:
        buf.write(b"ADAM")
        buf.write(struct.pack("<BQdddd", ROLES[role], st.t, st.beta1, st.beta2, st.lr, st.eps))
        for m, v in zip(st.m, st.v):
            buf.write(np.ascontiguousarray(m, dtype="<f4").tobytes())
            buf.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
    return buf.getvalue()


def model_from_bytes(raw: bytes) -> Model:
    from .train import AdamState

    buf = io.BytesIO(raw)
    if buf.read(4) != MODEL_MAGIC:
        raise ValueError("not an LFNN model file")
    version, n_nets = _read(buf, "<HH")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    levels, d_min, d_max = _read(buf, "<Idd")
    (grid,) = _read(buf, "<I")
    nets = {}
    for _ in range(n_nets):
        net = _read_network(buf)
        nets[net.role] = net
    model = Model(nets["disparity"], nets["color"], SweepConfig(levels, d_min, d_max), grid)
    tail = buf.read(4)
    if tail:
        (n_blocks,) = struct.unpack("<I", tail)
        for _ in range(n_blocks):
            if buf.read(4) != b"ADAM":
                raise ValueError("bad optimizer block")
            role, t, b1, b2, lr, eps = _read(buf, "<BQdddd")
            net = nets[ROLE_NAMES[role]]
            ms, vs = [], []
            for p in net.params():
                ms.append(_read_array(buf, p.size, p.shape))
                vs.append(_read_array(buf, p.size, p.shape))
            model.optimizer[ROLE_NAMES[role]] = AdamState(ms, vs, t, b1, b2, lr, eps)
    return model


def save_model(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
