import numpy as np
import pytest

from lfsynth.synthgen import Layer, Mask, SceneSpec, Texture, random_scene, render_lightfield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_texture(seed=0, amp=0.12):
    """Band-limited texture with strong gradients everywhere."""
    r = np.random.default_rng(seed)
    freqs = [[0.09, 0.02], [-0.03, 0.11], [0.06, -0.07], [0.12, 0.05]]
    return Texture("noise", [0.5, 0.45, 0.55], freqs=freqs,
                   phases=r.uniform(0, 6.28, 4).tolist(),
                   amps=r.uniform(-amp, amp, (4, 3)).tolist())


def single_layer_lf(disparity, size=64, grid=8, noise=0.0, seed=0):
    spec = SceneSpec([Layer(disparity, smooth_texture(seed))], size, size, grid, noise, seed)
    return render_lightfield(spec)[0]


def two_layer_spec(d_back=-0.5, d_front=1.0, size=64, grid=8):
    front = Layer(d_front, smooth_texture(1), Mask([[size / 2, size / 2, size / 5, size / 4, 0.3]]))
    return SceneSpec([Layer(d_back, smooth_texture(0)), front], size, size, grid, 0.0, 0)


@pytest.fixture
def small_lf():
    spec = random_scene(np.random.default_rng(5), width=48, height=48, noise_sigma=0.0, layers=2,
                        disparity_range=(-1, 1))
    return render_lightfield(spec)[0]
