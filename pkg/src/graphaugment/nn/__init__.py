"""Minimal dense-tensor engine: autodiff tape, layers, losses and Adam."""

from .gradcheck import grad_check
from .layers import (
    affine,
    attention_message_pass,
    gru_cell,
    init_affine,
    init_attention,
    init_gru,
    init_mlp,
    mlp,
)
from .losses import bce_loss, bce_with_logits, bernoulli_log_prob, cross_entropy
from .optim import Adam, adam_step
from .params import ParameterSet, load_checkpoint, save_checkpoint
from .tensor import Tape, Tensor, no_record

__all__ = [
    "Adam",
    "ParameterSet",
    "Tape",
    "Tensor",
    "adam_step",
    "affine",
    "attention_message_pass",
    "bce_loss",
    "bce_with_logits",
    "bernoulli_log_prob",
    "cross_entropy",
    "grad_check",
    "gru_cell",
    "init_affine",
    "init_attention",
    "init_gru",
    "init_mlp",
    "load_checkpoint",
    "mlp",
    "no_record",
    "save_checkpoint",
]
