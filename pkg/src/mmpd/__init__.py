"""Mamba-based message-passing neural decoder for linear block codes.

Submodules: codes (GF(2) tooling, alist IO), channel (BPSK/AWGN),
bp (sum-product baseline), autodiff (reverse-mode tensor kernels),
model (the decoder), training (loss/Adam/checkpoints), harness
(Monte Carlo BER/FER evaluation), cli (command-line entry point).
"""

from .autodiff import NumericsError, Tensor
from .bp import BpConfig, bp_decode, bp_decode_batch
from .channel import FrameSample, ebn0_to_sigma, frame_rng, make_frame
from .codes import CodeSpec, encode, load_alist, parse_alist, syndrome
from .harness import EvalPoint, StopRule, run_point, run_sweep
from .model import ModelConfig, ModelParameters, decode, forward, init_params
from .training import (TrainConfig, TrainResult, bce_loss, load_checkpoint,
                       make_batch, save_checkpoint, train)

__all__ = [
    "BpConfig",
    "CodeSpec",
    "EvalPoint",
    "FrameSample",
    "ModelConfig",
    "ModelParameters",
    "NumericsError",
    "StopRule",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "bce_loss",
    "bp_decode",
    "bp_decode_batch",
    "decode",
    "ebn0_to_sigma",
    "encode",
    "forward",
    "frame_rng",
    "init_params",
    "load_alist",
    "load_checkpoint",
    "make_batch",
    "make_frame",
    "parse_alist",
    "run_point",
    "run_sweep",
    "save_checkpoint",
    "syndrome",
    "train",
]

__version__ = "0.1.0"
