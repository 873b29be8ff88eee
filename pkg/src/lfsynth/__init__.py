"""Light-field view synthesis with a disparity network and a colour network.

Four corner views of an angular grid go in, any view position comes out:
plane-sweep features feed a disparity estimator, the corners are
backward-warped with its output, and a second network blends the warped
images. Both networks are trained end to end on the synthesis error.
"""
from .evaluation import EvalReport, baseline_nearest_view, baseline_wta_blend, evaluate, psnr, ssim
from .lfio import LightField, ViewCoord, load_lightfield, save_lightfield
from .nets import Model, init_model, load_model, save_model
from .pipeline import synthesize
from .sweep import SweepConfig, compute_features
from .synthgen import load_dataset, make_dataset
from .train import TrainConfig, TrainingData, train

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "LightField", "Model", "SweepConfig", "TrainConfig", "TrainingData", "ViewCoord",
    "baseline_nearest_view", "baseline_wta_blend", "compute_features", "evaluate", "init_model",
    "load_dataset", "load_lightfield", "load_model", "make_dataset", "psnr", "save_lightfield",
    "save_model", "ssim", "synthesize", "train",
]
