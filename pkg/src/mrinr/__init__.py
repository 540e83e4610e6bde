"""Self-tuned implicit neural representation reconstruction for
undersampled multicoil MRI, validated on simulated phantoms."""

__version__ = "0.1.0"

from .dataio import Dataset, DatasetMeta, ReconResult, export_png, load_dataset, save_dataset
from .fourier import ForwardOp, adjoint, apply, fft2c, ifft2c
from .hashgrid import EncoderConfig, EncoderParams, encode_backward, encode_forward
from .mlp import MLPConfig, MLPParams, frequency_encode, init_mlp, mlp_backward, mlp_forward
from .sampling import MaskPair, cartesian_mask, poisson_mask, split_ssdu
from .training import (HyperParams, ModelConfig, TrainConfig, TrainState,
                       finetune, reconstruct, train, validate, weighted_residual_loss)
from .bayesopt import GPModel, Observation, SearchSpace, from_unit, gp_fit, gp_predict, propose_next, tune
from .metrics import MetricReport, cg_sense, nrmse, psnr, roi_from_reference, ssim, zero_filled
from .phantom import birdcage_maps, dynamic_phantom, shepp_logan, simulate_kspace

__all__ = [
    "Dataset", "DatasetMeta", "ReconResult", "export_png", "load_dataset", "save_dataset",
    "ForwardOp", "adjoint", "apply", "fft2c", "ifft2c",
    "EncoderConfig", "EncoderParams", "encode_backward", "encode_forward",
    "MLPConfig", "MLPParams", "frequency_encode", "init_mlp", "mlp_backward", "mlp_forward",
    "MaskPair", "cartesian_mask", "poisson_mask", "split_ssdu",
    "HyperParams", "ModelConfig", "TrainConfig", "TrainState",
    "finetune", "reconstruct", "train", "validate", "weighted_residual_loss",
    "GPModel", "Observation", "SearchSpace", "from_unit", "gp_fit", "gp_predict",
    "propose_next", "tune",
    "MetricReport", "cg_sense", "nrmse", "psnr", "roi_from_reference", "ssim", "zero_filled",
    "birdcage_maps", "dynamic_phantom", "shepp_logan", "simulate_kspace",
]
