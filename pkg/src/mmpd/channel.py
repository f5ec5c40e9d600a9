"""BPSK over AWGN plus the syndrome-based decoder inputs.

Bit 0 maps to +1 and bit 1 to -1.  A received vector y produces the decoder
inputs (m_y, s_y): the elementwise magnitudes and the signed syndrome of the
hard decisions.  Both are invariant to which codeword was transmitted once
the noise is expressed in the codeword's sign frame, which is what justifies
all-zero-codeword training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codes import CodeSpec, syndrome


@dataclass(frozen=True)
class FrameSample:
    """One simulated transmission and everything a decoder may ask of it."""

    c: np.ndarray       # transmitted codeword, bits (n,)
    x: np.ndarray       # BPSK symbols (n,)
    y: np.ndarray       # channel output (n,)
    sigma: float        # noise std per real dimension
    m_y: np.ndarray     # reliabilities |y| (n,)
    y_b: np.ndarray     # hard decisions, bits (n,)
    s_y: np.ndarray     # signed syndrome, +-1 entries (n-k,)
    eps: np.ndarray     # error indicator y_b XOR c (n,)


def bpsk_modulate(c) -> np.ndarray:
    """Map bits to symbols: 0 -> +1, 1 -> -1."""
    c = np.asarray(c, dtype=np.uint8)
    return 1.0 - 2.0 * c.astype(np.float64)


def ebn0_to_sigma(ebn0_db: float, rate: float) -> float:
    """Noise std for a target Eb/N0 with unit-energy BPSK symbols.

    sigma = (2 * R * 10^(Eb/N0_dB / 10))^(-1/2).
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    return float((2.0 * rate * 10.0 ** (ebn0_db / 10.0)) ** -0.5)


def transmit(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """y = x + z with z ~ N(0, sigma^2 I), drawn from the supplied stream."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + sigma * rng.standard_normal(x.shape)


def hard_decide(y) -> np.ndarray:
    """Bit 0 for y >= 0, bit 1 for y < 0 (tie at exactly 0 is bit 0)."""
    return (np.asarray(y) < 0).astype(np.uint8)


def decoder_inputs(spec: CodeSpec, y):
    """(m_y, s_y, y_b) for a received vector or batch of them."""
    y = np.asarray(y, dtype=np.float64)
    m_y = np.abs(y)
    y_b = hard_decide(y)
    s_y = 1.0 - 2.0 * syndrome(spec, y_b).astype(np.float64)
    return m_y, s_y, y_b


def make_frame(spec: CodeSpec, c, sigma: float, rng: np.random.Generator) -> FrameSample:
    """Simulate one transmission of codeword c and derive all decoder inputs."""
    c = np.asarray(c, dtype=np.uint8)
    if c.shape != (spec.n,):
        raise ValueError(f"codeword shape {c.shape} != ({spec.n},)")
    x = bpsk_modulate(c)
    y = transmit(x, sigma, rng)
    m_y, s_y, y_b = decoder_inputs(spec, y)
    return FrameSample(c=c, x=x, y=y, sigma=float(sigma),
                       m_y=m_y, y_b=y_b, s_y=s_y, eps=y_b ^ c)


def frame_rng(seed: int, *indices: int) -> np.random.Generator:
    """Substream for one frame, derived from (seed, *indices).

    SeedSequence spreads the entropy tuple, so substreams are independent of
    worker count and of how frames are assigned to batches.
    """
    ss = np.random.SeedSequence(entropy=(int(seed),) + tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(ss))


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))
