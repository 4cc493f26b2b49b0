"""Circulant channel-specific token mixing for MLP-style vision backbones."""

from .circulant import CcsWeights, ccs_mix, ccs_mix_adjoint
from .kernels import IMPLEMENTATION as KERNELS
from .model import PRESETS, MixerConfig, ModelParams, init_params, model_forward

__version__ = "0.1.0"

__all__ = [
    "CcsWeights", "ccs_mix", "ccs_mix_adjoint", "KERNELS", "PRESETS",
    "MixerConfig", "ModelParams", "init_params", "model_forward",
]
