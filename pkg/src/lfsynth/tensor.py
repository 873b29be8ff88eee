"""Valid-mode 2D convolution and ReLU with hand-written backward passes.

Images and feature maps are plain ``numpy`` arrays laid out as
``(height, width, channels)``. Kernels are ``(k, k, c_in, c_out)``. All
routines compute in the dtype of their inputs, so passing ``float64``
arrays gives a double-precision path for gradient checks.
"""
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent with an operation."""


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (k, k, c_in, c_out)
    bias: np.ndarray  # (c_out,)

    def __post_init__(self):
        if self.kernel.ndim != 4 or self.kernel.shape[0] != self.kernel.shape[1]:
            raise DimensionError(f"kernel must be (k, k, c_in, c_out), got {self.kernel.shape}")
        if self.kernel.shape[0] % 2 != 1:
            raise DimensionError(f"kernel size must be odd, got {self.kernel.shape[0]}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match c_out={self.kernel.shape[3]}")

    @property
    def k(self) -> int:
        return self.kernel.shape[0]

    @property
    def c_in(self) -> int:
        return self.kernel.shape[2]

    @property
    def c_out(self) -> int:
        return self.kernel.shape[3]

    def astype(self, dtype) -> "ConvLayer":
        return ConvLayer(self.kernel.astype(dtype), self.bias.astype(dtype))


def _check_input(x: np.ndarray, layer: ConvLayer):
    if x.ndim != 3:
        raise DimensionError(f"expected (h, w, c) input, got shape {x.shape}")
    h, w, c = x.shape
    if c != layer.c_in:
        raise DimensionError(f"input has {c} channels, layer expects {layer.c_in}")
    if h < layer.k or w < layer.k:
        raise DimensionError(f"input {h}x{w} smaller than kernel {layer.k}x{layer.k}")


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Valid cross-correlation of ``x`` with ``layer.kernel`` plus bias.

    The output is ``(h - k + 1, w - k + 1, c_out)``. Kernel offsets are
    accumulated in a fixed row-major order so results do not depend on
    how the caller tiles the image.
    """
    _check_input(x, layer)
    k = layer.k
    ho, wo = x.shape[0] - k + 1, x.shape[1] - k + 1
    out = np.empty((ho, wo, layer.c_out), dtype=np.result_type(x, layer.kernel))
    out[...] = layer.bias
    for i in range(k):
        for j in range(k):
            out += x[i:i + ho, j:j + wo] @ layer.kernel[i, j]
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray,
                    need_input_grad: bool = True):
    """Gradients of a scalar loss through :func:`conv2d_forward`.

    Returns ``(grad_input, grad_kernel, grad_bias)``. ``grad_input`` is
    ``None`` when ``need_input_grad`` is false, which saves the most
    expensive product for the first layer of a network.
    """
    _check_input(x, layer)
    k = layer.k
    ho, wo = x.shape[0] - k + 1, x.shape[1] - k + 1
    if grad_out.shape != (ho, wo, layer.c_out):
        raise DimensionError(
            f"grad_out shape {grad_out.shape} does not match output {(ho, wo, layer.c_out)}")

    g2 = grad_out.reshape(-1, layer.c_out)
    grad_bias = g2.sum(axis=0)
    grad_kernel = np.empty_like(layer.kernel, dtype=np.result_type(x, grad_out))
    for j in range(k):
        xj = np.ascontiguousarray(x[:, j:j + wo])
        for i in range(k):
            grad_kernel[i, j] = xj[i:i + ho].reshape(-1, layer.c_in).T @ g2

    grad_input = None
    if need_input_grad:
        grad_input = np.zeros(x.shape, dtype=grad_kernel.dtype)
        for i in range(k):
            for j in range(k):
                grad_input[i:i + ho, j:j + wo] += grad_out @ layer.kernel[i, j].T
    return grad_input, grad_kernel, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    if x.shape != grad_out.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def output_size(size: int, kernel_sizes) -> int:
    """Spatial size left after a chain of valid convolutions."""
    return size - sum(k - 1 for k in kernel_sizes)
