"""Projected sampling of learned positional encodings for implicit neural representations."""

from .aggregators import AggregatorSpec, PinkAllocation, aggregate, circular_slice, pink_dims
from .encoders import (
    NTC, PEPS, ConcatGrid, FeatureGrid, HashGrid, Identity, LocalPE, MultiResolution, PositionalEncoding,
    concat_grid_sample, grid_sample, hash_sample, lpe_encode, multires_sample, ntc_encode, parameter_count,
    peps_encode,
)
from .errors import (
    ConfigurationError, ContractError, FormatError, InputError, NumericFaultError, PepsError, RangeError,
    UnsupportedVersionError,
)
from .metrics import lpsd, lsd, mape, psd_slope, psnr, radial_psd, sdf_iou, ssim
from .model import (
    MLP, INRModel, MLPConfig, ModelCheckpoint, TrainConfig, load_checkpoint, loss_value, mlp_forward,
    save_checkpoint, train,
)
from .projection import FrequencySchedule, ape, lissajous_curve, lissajous_distinct, lissajous_gap, project, rotate_ape

__version__ = "0.1.0"

__all__ = [
    "AggregatorSpec",
    "ConcatGrid",
    "ConfigurationError",
    "ContractError",
    "FeatureGrid",
    "FormatError",
    "FrequencySchedule",
    "HashGrid",
    "INRModel",
    "Identity",
    "InputError",
    "LocalPE",
    "MLP",
    "MLPConfig",
    "ModelCheckpoint",
    "MultiResolution",
    "NTC",
    "NumericFaultError",
    "PEPS",
    "PepsError",
    "PinkAllocation",
    "PositionalEncoding",
    "RangeError",
    "TrainConfig",
    "UnsupportedVersionError",
    "aggregate",
    "ape",
    "circular_slice",
    "concat_grid_sample",
    "grid_sample",
    "hash_sample",
    "lissajous_curve",
    "lissajous_distinct",
    "lissajous_gap",
    "load_checkpoint",
    "loss_value",
    "lpe_encode",
    "lpsd",
    "lsd",
    "mape",
    "mlp_forward",
    "multires_sample",
    "ntc_encode",
    "parameter_count",
    "peps_encode",
    "pink_dims",
    "project",
    "psd_slope",
    "psnr",
    "radial_psd",
    "rotate_ape",
    "save_checkpoint",
    "sdf_iou",
    "ssim",
    "train",
]
