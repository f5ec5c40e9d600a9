"""Monte Carlo BER/FER evaluation with an error-count stopping rule.

A point keeps simulating frames until it has seen at least
``min_frame_errors`` frame errors (a frame error is >= 1 wrong bit) or hits
the ``max_frames`` safety cap; points that hit the cap are flagged in the
result rather than silently reported.  Which rule fired is part of the
result because a capped point's BER estimate carries much wider error bars.

Reproducibility: frame f of SNR point s draws its message and noise from
the substream (seed, s, f).  Frames are generated and decoded in fixed-size
batches and the stopping rule is evaluated on merged counters at batch
boundaries, so the counters depend only on (seed, stop, batch size) — not
on how many workers decoded the batch.  Unlike the training batcher, the
harness simulates the physical channel y = x + sigma * z with no noise
coupling between codeword modes: zero- and random-codeword runs are
genuinely different realizations whose error rates agree only because the
decoders are invariant to the transmitted codeword, so the codeword-mode
comparison is a real statistical check rather than a tautology.

Decoders are callables ``decoder(spec, y, sigma) -> c_hat`` mapping a
``(B, n)`` batch of channel outputs to hard bit decisions of the same
shape; ``sigma`` is provided for decoders that want channel LLRs.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bp import BpConfig, bp_decode_batch, channel_llr
from .channel import ebn0_to_sigma, frame_rng, hard_decide
from .codes import CodeSpec, encode
from .model import ModelParameters, decode as mmpd_decode

__all__ = [
    "StopRule",
    "EvalPoint",
    "HarnessError",
    "CSV_COLUMNS",
    "BATCH_FRAMES",
    "hard_decision_decoder",
    "bp_decoder",
    "mmpd_decoder",
    "run_point",
    "run_sweep",
    "write_report",
]

# Frames generated/decoded per stopping-rule check.  Fixed so counters are
# a pure function of (seed, stop rule); workers only split batches.
BATCH_FRAMES = 256

CSV_COLUMNS = ("code_name", "n", "k", "decoder", "ebn0_db", "frames",
               "bit_errors", "frame_errors", "ber", "fer", "neg_ln_ber",
               "stopped_by", "seed")

_MODES = ("zero", "random")


class HarnessError(Exception):
    """A decoder failed while evaluating a frame."""


@dataclass(frozen=True)
class StopRule:
    """Stop after min_frame_errors frame errors, capped at max_frames."""

    min_frame_errors: int = 1000
    max_frames: int = 1_000_000

    def __post_init__(self):
        if self.min_frame_errors < 1:
            raise ValueError("min_frame_errors must be positive")
        if self.max_frames < 1:
            raise ValueError("max_frames must be positive")


@dataclass(frozen=True)
class EvalPoint:
    """Measured error rates at one SNR."""

    ebn0_db: float
    frames_run: int
    bit_errors: int
    frame_errors: int
    ber: float
    fer: float
    neg_ln_ber: float  # -ln(ber); +inf when no bit errors were observed
    stopped_by: str    # "min_frame_errors" or "max_frames"

    def __post_init__(self):
        if min(self.frames_run, self.bit_errors, self.frame_errors) < 0:
            raise ValueError("counters must be non-negative")
        if self.frame_errors > self.frames_run:
            raise ValueError("frame_errors cannot exceed frames_run")
        if self.stopped_by not in ("min_frame_errors", "max_frames"):
            raise ValueError(f"unknown stopped_by {self.stopped_by!r}")


# ---------------------------------------------------------------------------
# Decoder adapters
# ---------------------------------------------------------------------------

def hard_decision_decoder():
    """Uncoded baseline: c_hat = hard decisions on y."""
    def decoder(spec: CodeSpec, y: np.ndarray, sigma: float) -> np.ndarray:
        return hard_decide(y)
    return decoder


def bp_decoder(cfg: BpConfig = BpConfig()):
    """Sum-product BP on channel LLRs."""
    def decoder(spec: CodeSpec, y: np.ndarray, sigma: float) -> np.ndarray:
        c_hat, _, _ = bp_decode_batch(spec, channel_llr(y, sigma), cfg)
        return c_hat
    return decoder


def mmpd_decoder(params: ModelParameters):
    """Trained model: flip the predicted error positions of y_b."""
    def decoder(spec: CodeSpec, y: np.ndarray, sigma: float) -> np.ndarray:
        if params.h_sha256 != spec.h_sha256:
            raise HarnessError(
                f"model parameters were trained for code "
                f"'{params.code_name}', not '{spec.name}' (H hash mismatch)")
        c_hat, _ = mmpd_decode(y, spec, params)
        return c_hat
    return decoder


# ---------------------------------------------------------------------------
# Frame generation and batched decoding
# ---------------------------------------------------------------------------

def _gen_batch(spec: CodeSpec, sigma: float, seed: int, snr_index: int,
               first_frame: int, count: int, codeword_mode: str):
    """Frames [first_frame, first_frame+count) of one SNR point.

    Each frame consumes its substream identically in both codeword modes
    (message bits are always drawn), so switching modes changes the
    transmitted word but not the additive noise realization.
    """
    c = np.zeros((count, spec.n), dtype=np.uint8)
    z = np.empty((count, spec.n))
    for j in range(count):
        rng = frame_rng(seed, snr_index, first_frame + j)
        u = rng.integers(0, 2, size=spec.k, dtype=np.uint8)
        z[j] = rng.standard_normal(spec.n)
        if codeword_mode == "random":
            c[j] = encode(spec, u)
    x = 1.0 - 2.0 * c.astype(np.float64)
    y = x + sigma * z
    return c, y


def _decode_batch(decoder, spec: CodeSpec, y: np.ndarray, sigma: float,
                  workers: int, first_frame: int) -> np.ndarray:
    """Decode a batch, splitting across workers; localizes failures."""
    count = y.shape[0]
    chunk = -(-count // max(workers, 1))
    spans = [(lo, min(lo + chunk, count)) for lo in range(0, count, chunk)]

    def decode_span(span):
        lo, hi = span
        try:
            out = np.asarray(decoder(spec, y[lo:hi], sigma))
        except Exception as e:
            # Re-run frame by frame to name the first offender.
            for j in range(lo, hi):
                try:
                    decoder(spec, y[j:j + 1], sigma)
                except Exception as e1:
                    raise HarnessError(
                        f"decoder failed on frame {first_frame + j}: "
                        f"{e1}") from e1
            raise HarnessError(
                f"decoder failed on frames "
                f"[{first_frame + lo}, {first_frame + hi}): {e}") from e
        if out.shape != (hi - lo, spec.n):
            raise HarnessError(
                f"decoder returned shape {out.shape} for a "
                f"({hi - lo}, {spec.n}) batch")
        return out

    if len(spans) == 1:
        parts = [decode_span(spans[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(decode_span, spans))
    return np.vstack(parts).astype(np.uint8)


def run_point(decoder, spec: CodeSpec, ebn0_db: float, stop: StopRule,
              seed: int, codeword_mode: str = "zero", snr_index: int = 0,
              batch_frames: int = BATCH_FRAMES, workers: int = 1) -> EvalPoint:
    """Simulate one SNR point until the stopping rule fires."""
    if codeword_mode not in _MODES:
        raise ValueError(f"codeword_mode must be one of {_MODES}")
    if batch_frames < 1 or workers < 1:
        raise ValueError("batch_frames and workers must be positive")
    sigma = ebn0_to_sigma(ebn0_db, spec.rate)

    frames = bit_errors = frame_errors = 0
    stopped_by = "max_frames"
    while True:
        count = min(batch_frames, stop.max_frames - frames)
        c, y = _gen_batch(spec, sigma, seed, snr_index, frames, count,
                          codeword_mode)
        c_hat = _decode_batch(decoder, spec, y, sigma, workers, frames)
        wrong = c_hat != c
        bit_errors += int(wrong.sum())
        frame_errors += int(wrong.any(axis=1).sum())
        frames += count
        if frame_errors >= stop.min_frame_errors:
            stopped_by = "min_frame_errors"
            break
        if frames >= stop.max_frames:
            stopped_by = "max_frames"
            break

    ber = bit_errors / (frames * spec.n)
    fer = frame_errors / frames
    neg_ln = -math.log(ber) if ber > 0 else math.inf
    return EvalPoint(ebn0_db=float(ebn0_db), frames_run=frames,
                     bit_errors=bit_errors, frame_errors=frame_errors,
                     ber=ber, fer=fer, neg_ln_ber=neg_ln,
                     stopped_by=stopped_by)


def run_sweep(decoder, spec: CodeSpec, ebn0_list, stop: StopRule, seed: int,
              decoder_name: str = "decoder", codeword_mode: str = "zero",
              csv_path: str | Path | None = None, workers: int = 1,
              extra_header: tuple[str, ...] = (),
              batch_frames: int = BATCH_FRAMES,
              verbose: bool = False) -> list[EvalPoint]:
    """Evaluate each SNR independently; optionally write the report CSV."""
    ebn0_list = [float(e) for e in ebn0_list]
    if not ebn0_list:
        raise ValueError("ebn0_list must be non-empty")
    points = []
    for i, ebn0 in enumerate(ebn0_list):
        p = run_point(decoder, spec, ebn0, stop, seed,
                      codeword_mode=codeword_mode, snr_index=i,
                      batch_frames=batch_frames, workers=workers)
        points.append(p)
        if verbose:
            print(f"{decoder_name} @ {ebn0:g} dB: ber={p.ber:.3e} "
                  f"(-ln {p.neg_ln_ber:.3f}) after {p.frames_run} frames "
                  f"[{p.stopped_by}]")
    if csv_path is not None:
        write_report(points, spec, decoder_name, seed, csv_path,
                     extra_header=extra_header)
    return points


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.10g}"


def write_report(points, spec: CodeSpec, decoder_name: str, seed: int,
                 path: str | Path, extra_header: tuple[str, ...] = ()) -> Path:
    """Write the report CSV (exact column order, ASCII, '.' decimals)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {h}" for h in extra_header]
    lines.append(",".join(CSV_COLUMNS))
    for p in points:
        lines.append(",".join([
            spec.name, str(spec.n), str(spec.k), decoder_name,
            f"{p.ebn0_db:g}", str(p.frames_run), str(p.bit_errors),
            str(p.frame_errors), _fmt(p.ber), _fmt(p.fer),
            _fmt(p.neg_ln_ber), p.stopped_by, str(seed),
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path
