from .dataset import (
    Dataset,
    DatasetConfig,
    SceneData,
    TargetView,
    Triplet,
    generate_dataset,
    generate_scene,
    load_dataset,
    save_dataset,
)
from .envpool import make_env_pool
from .evaluate import EvalRow, RenderSettings, ablate, ablate_table_text, eval_table_text, evaluate, render_image
from .losses import HEAD_SIZE_M, LossBreakdown, loss_alpha, loss_depth, loss_light, loss_rgb
from .metrics import psnr, ssim
from .train import (
    TrainConfig,
    TrainResult,
    TrainState,
    TrainingDiverged,
    sample_mode,
    sample_pixels,
    train,
    training_step,
)

__all__ = [
    "Dataset",
    "DatasetConfig",
    "EvalRow",
    "HEAD_SIZE_M",
    "LossBreakdown",
    "RenderSettings",
    "SceneData",
    "TargetView",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "TrainingDiverged",
    "Triplet",
    "ablate",
    "ablate_table_text",
    "eval_table_text",
    "evaluate",
    "generate_dataset",
    "generate_scene",
    "load_dataset",
    "loss_alpha",
    "loss_depth",
    "loss_light",
    "loss_rgb",
    "make_env_pool",
    "psnr",
    "render_image",
    "sample_mode",
    "sample_pixels",
    "save_dataset",
    "ssim",
    "train",
    "training_step",
]
