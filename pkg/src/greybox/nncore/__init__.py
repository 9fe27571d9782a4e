"""Differentiable-computation core: tape autodiff, dense nets, Adam."""

from .adam import AdamState, adam_step
from .mlp import (MlpParams, MlpSpec, check_params, glorot_init,
                  load_checkpoint, mlp_forward, mlp_on_tape, register_mlp,
                  save_checkpoint)
from .tape import Tape, loss_gradient, replay

__all__ = [
    "AdamState", "adam_step",
    "MlpParams", "MlpSpec", "check_params", "glorot_init",
    "load_checkpoint", "mlp_forward", "mlp_on_tape", "register_mlp",
    "save_checkpoint",
    "Tape", "loss_gradient", "replay",
]
