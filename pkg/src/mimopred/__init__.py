"""Few-shot adaptive channel prediction workbench.

Meta-learned per-user adaptation of a neural one-step channel predictor
for multi-antenna uplinks, with an untrained-network denoising stage and
an evaluation harness (prediction error, zero-forcing sum rate, floating
point operation estimates).
"""

__version__ = "0.1.0"

from .autodiff import Tensor, grad, grad_check, mse_loss, no_grad
from .channel import ChannelTrace, LsTrace, SimConfig, gen_trace, ls_estimate, receive
from .datasets import SamplePair, TargetSet, TaskDataset, build_source_tasks, build_target_set
from .models import DipSpec, MlpSpec, ModelParams, init_params
from .training import MetaConfig, adapt, meta_train, predict, train_mlp_baseline
from .denoise import denoise
from .evaluation import EvalReport, FlopsReport, flops_dip, flops_maml, nmse, sum_rate, zf_combiner
from .estimators import DipDenoiser, MamlChannelPredictor, MlpChannelPredictor

__all__ = [
    "Tensor",
    "grad",
    "grad_check",
    "mse_loss",
    "no_grad",
    "SimConfig",
    "ChannelTrace",
    "LsTrace",
    "gen_trace",
    "receive",
    "ls_estimate",
    "SamplePair",
    "TaskDataset",
    "TargetSet",
    "build_source_tasks",
    "build_target_set",
    "MlpSpec",
    "DipSpec",
    "ModelParams",
    "init_params",
    "MetaConfig",
    "meta_train",
    "adapt",
    "predict",
    "train_mlp_baseline",
    "denoise",
    "nmse",
    "zf_combiner",
    "sum_rate",
    "flops_maml",
    "flops_dip",
    "EvalReport",
    "FlopsReport",
    "DipDenoiser",
    "MamlChannelPredictor",
    "MlpChannelPredictor",
]
