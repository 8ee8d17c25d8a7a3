"""Learned ML-VAMP recovery of a narrowband signal behind a saturating,
noisy, optionally quantized receiver front-end with out-of-band interference."""

from .baselines import TrialResult, evaluate, linear_wiener, oracle_estimate
from .frontend import FrontEndParams, QuantizerParams, apply_frontend, quantize, saturate, soft_gain
from .learned import Dataset, TrainConfig, infer, loss_total, make_dataset, train
from .neural import MlpWeights, UnrolledModel, load_model, mlp_forward, new_model, save_model
from .spectrum import BandLayout, PriorSpec, dft, idft, prior_from_scenario, sample_signal, trial_rng
from .vamp import mlvamp_run, mlvamp_step, nonlinear_denoise_oracle, spectral_denoise

__all__ = [
    "BandLayout",
    "Dataset",
    "FrontEndParams",
    "MlpWeights",
    "PriorSpec",
    "QuantizerParams",
    "TrainConfig",
    "TrialResult",
    "UnrolledModel",
    "apply_frontend",
    "dft",
    "evaluate",
    "idft",
    "infer",
    "linear_wiener",
    "load_model",
    "loss_total",
    "make_dataset",
    "mlp_forward",
    "mlvamp_run",
    "mlvamp_step",
    "new_model",
    "nonlinear_denoise_oracle",
    "oracle_estimate",
    "prior_from_scenario",
    "quantize",
    "sample_signal",
    "saturate",
    "save_model",
    "soft_gain",
    "spectral_denoise",
    "train",
    "trial_rng",
]
