import json

import numpy as np
import pytest

from lfsynth.synthgen import (Layer, Mask, SceneSpec, load_dataset, make_dataset, random_scene,
                              render_lightfield, render_view)
from lfsynth.warp import backward_warp

from conftest import smooth_texture


def test_zero_disparity_views_identical():
    spec = SceneSpec([Layer(0.0, smooth_texture())], 32, 32, 4, 0.0)
    lf, _ = render_lightfield(spec)
    ref = lf.views[(0, 0)]
    assert all(np.array_equal(v, ref) for v in lf.views.values())


def test_integer_disparity_is_exact_shift():
    spec = SceneSpec([Layer(2.0, smooth_texture())], 40, 40, 8, 0.0)
    a, _ = render_view(spec, 3, 3)
    b, _ = render_view(spec, 4, 3)
    # one step right shifts content by d pixels: b(x) = a(x - d)
    assert np.array_equal(b[:, 2:], a[:, :-2])


def test_disparity_maps_follow_layers():
    spec = SceneSpec([Layer(-1.0, smooth_texture(0)),
                      Layer(1.0, smooth_texture(1), Mask([[20, 20, 8, 8, 0]]))], 40, 40, 8, 0.0)
    lf, disp = render_lightfield(spec)
    c = disp[(3, 3)][..., 0]
    assert set(np.unique(c)) == {-1.0, 1.0}
    assert c[20, 20] == 1.0 and c[0, 0] == -1.0
    assert lf.disparity is disp


def test_occlusion_band_width_equals_disparity_gap_times_offset():
    # front layer covers x < 30 (a very large ellipse gives a straight edge)
    edge = Mask([[30 - 5000, 32, 5000, 5000, 0]])
    d_back, d_front = 0.0, 1.0
    spec = SceneSpec([Layer(d_back, smooth_texture(0)), Layer(d_front, smooth_texture(1), edge)],
                     64, 64, 8, 0.0)
    lf, disp = render_lightfield(spec)
    q, p = (4, 0), (7, 0)  # the front layer slides over background seen from q
    warped = backward_warp(lf.views[p], disp[q], (p[0] - q[0], p[1] - q[1]), (0, 0))
    differs = np.abs(warped - lf.views[q]).max(axis=2) > 1e-6
    widths = differs[4:-4, 8:-8].sum(axis=1)
    assert (widths == abs(d_front - d_back) * abs(p[0] - q[0])).all()


def test_scene_validation():
    with pytest.raises(ValueError):
        SceneSpec([])
    with pytest.raises(ValueError):
        SceneSpec([Layer(1.0, smooth_texture()), Layer(0.5, smooth_texture())])


def test_scene_json_round_trip():
    spec = random_scene(np.random.default_rng(2), width=32, height=32)
    data = json.loads(json.dumps(spec.to_json()))
    back = SceneSpec.from_json(data)
    assert back.to_json() == spec.to_json()
    assert np.array_equal(render_view(back, 1, 2)[0], render_view(spec, 1, 2)[0])


def test_random_scene_disparities_in_range():
    r = np.random.default_rng(0)
    for _ in range(20):
        spec = random_scene(r, 16, 16, disparity_range=(-0.7, 1.2))
        d = [l.disparity for l in spec.layers]
        assert all(-0.7 <= x <= 1.2 for x in d) and d == sorted(d)


def test_out_of_sweep_range_warns():
    spec = SceneSpec([Layer(3.0, smooth_texture())], 16, 16, 2, 0.0)
    with pytest.warns(UserWarning):
        render_lightfield(spec, sweep_range=(-2, 2))


def test_views_clipped_to_unit_range():
    spec = random_scene(np.random.default_rng(4), 24, 24, grid_size=3, noise_sigma=0.2)
    lf, _ = render_lightfield(spec)
    assert all(v.min() >= 0 and v.max() <= 1 for v in lf.views.values())


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file()}


def test_dataset_is_reproducible(tmp_path):
    make_dataset(tmp_path / "a", 2, size=24, seed=7, grid_size=3)
    make_dataset(tmp_path / "b", 2, size=24, seed=7, grid_size=3)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    make_dataset(tmp_path / "c", 2, size=24, seed=8, grid_size=3)
    assert _tree(tmp_path / "a") != _tree(tmp_path / "c")
    lfs = load_dataset(tmp_path / "a")
    assert len(lfs) == 2 and lfs[0].grid_size == 3 and lfs[0].disparity


def test_empty_dataset(tmp_path):
    make_dataset(tmp_path / "e", 0)
    manifest = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert manifest["count"] == 0 and manifest["lightfields"] == []
    assert load_dataset(tmp_path / "e") == []
    with pytest.raises(ValueError):
        make_dataset(tmp_path / "f", -1)
