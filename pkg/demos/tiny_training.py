"""Train a very small model for a few hundred iterations and look at it.

Everything here is scaled down so it finishes in a few minutes on one core:
six 80x80 light fields, narrow networks, a 32-level sweep. The point is
the workflow, not the numbers; see the acceptance suite for a real run.
"""
import tempfile

import numpy as np

from lfsynth import SweepConfig, TrainConfig, TrainingData, evaluate, init_model, load_dataset, make_dataset, train
from lfsynth.train import window_means

with tempfile.TemporaryDirectory() as tmp:
    make_dataset(tmp + "/train", count=5, size=80, seed=11)
    make_dataset(tmp + "/test", count=1, size=80, seed=12)
    train_lfs = load_dataset(tmp + "/train")
    test_lfs = load_dataset(tmp + "/test")

sweep = SweepConfig(32, -2.0, 2.0)
# a colour net narrower than this tends to switch off whole layers early on
model = init_model(sweep, grid_size=8, widths=(8, 8, 4), color_widths=(32, 32, 16), seed=0)
cfg = TrainConfig(iterations={"disparity": 200, "color": 300, "joint": 100},
                  lr={"disparity": 1e-3, "color": 1e-3, "joint": 1e-4},
                  batch_size=8, sweep=sweep)
rng = np.random.default_rng(0)
data = TrainingData(train_lfs, sweep, rng, positions_per_lf=2, margin=model.margin)
print(f"{len(data)} training patches")

history = train(model, data, cfg, rng)
for stage, losses in history.items():
    means = ", ".join(f"{m:.1f}" for m in window_means(losses))
    print(f"{stage:>9}: loss windows [{means}]")

# a handful of held-out views against the two baselines
positions = [(3, 3), (1, 5), (6, 2)]
report = evaluate(model, test_lfs, positions)
for method, agg in report.aggregates.items():
    band = agg["psnr_band"]
    band_txt = f"{band:.2f}" if band is not None else "n/a"
    print(f"{method:>10}: PSNR {agg['psnr']:.2f} dB  SSIM {agg['ssim']:.3f}  band {band_txt} dB")
