"""Training loop for the decoder: BCE loss, Adam, batching, checkpoints.

The decoder is trained to flag hard-decision errors, so the target for bit
i is eps_i = y_b,i XOR c_i and the loss is binary cross-entropy on the
logits.  Batches draw a fresh Eb/N0 per sample from a uniform range and,
by default, transmit the all-zero codeword; the channel noise is applied
in the codeword's sign frame (y = x * (1 + sigma * z)), which makes the
decoder inputs (m_y, s_y, eps) bit-identical between zero-codeword and
random-codeword batches drawn from the same stream.  That both keeps the
symmetry argument testable and makes zero-codeword training exact rather
than approximate.

Reproducibility: every stream is derived from (seed, lane, index) via
SeedSequence — lane 0 for training batches (index = step), lane 1 for the
held-out validation batch, lane 2 for parameter initialization.  Runs are
deterministic for a fixed seed regardless of how many steps ran before a
checkpoint, and checkpoints round-trip bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .channel import decoder_inputs, frame_rng
from .codes import CodeSpec, encode
from .model import ModelConfig, ModelParameters, forward, init_params

__all__ = [
    "TrainConfig",
    "TrainResult",
    "AdamState",
    "CheckpointError",
    "bce_loss",
    "adam_step",
    "make_batch",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

LR_FLOOR = 1e-5
_SCHEDULES = ("constant", "cosine")

# Stream lanes under the master seed (see module docstring).
_LANE_BATCH = 0
_LANE_VAL = 1
_LANE_INIT = 2


class CheckpointError(Exception):
    """A checkpoint could not be read back or does not match the code."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    batch_size: int = 128
    steps: int = 1000
    learning_rate: float = 1e-4
    lr_schedule: str = "cosine"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    snr_low_db: float = 2.0
    snr_high_db: float = 7.0
    seed: int = 0
    use_zero_codeword: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lr_schedule not in _SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {_SCHEDULES}, "
                             f"got {self.lr_schedule!r}")
        if self.snr_low_db > self.snr_high_db:
            raise ValueError("snr_low_db must not exceed snr_high_db")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Learning rate used for optimizer step `step` (0-based)."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    # Cosine decay from learning_rate to the floor over the whole run.
    span = max(cfg.steps - 1, 1)
    frac = min(max(step, 0), span) / span
    floor = min(LR_FLOOR, cfg.learning_rate)
    return floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + math.cos(math.pi * frac))


def bce_loss(nu_hat, eps, reduction: str = "sum") -> Tensor:
    """Binary cross-entropy between error logits and error indicators.

    Uses the overflow-safe form softplus(nu) - nu * eps, summed over all
    elements ("sum") or averaged ("mean").  Finite for any finite logits.
    """
    if reduction not in ("sum", "mean"):
        raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    nu = ad.as_tensor(nu_hat)
    target = np.asarray(eps)
    if target.shape != nu.shape:
        raise ValueError(f"eps shape {target.shape} != logits shape {nu.shape}")
    target = Tensor(target.astype(nu.dtype))
    per_bit = ad.subtract(ad.softplus(nu), ad.multiply(nu, target))
    total = ad.total_sum(per_bit)
    if reduction == "mean":
        total = ad.multiply(total, 1.0 / nu.size)
    return total


@dataclass
class AdamState:
    """First/second moment accumulators, aligned with a fixed tensor list."""

    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_tensors(cls, tensors: list[Tensor]) -> "AdamState":
        return cls(step=0,
                   m=[np.zeros_like(t.data) for t in tensors],
                   v=[np.zeros_like(t.data) for t in tensors])


def adam_step(tensors: list[Tensor], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              names: list[str] | None = None) -> None:
    """One bias-corrected Adam update, in place on the tensors' data.

    A missing gradient counts as zero (the parameter stays put while its
    moments decay); a non-finite gradient aborts with the parameter named.
    """
    if len(state.m) != len(tensors):
        raise ValueError("AdamState does not match the tensor list")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i, p in enumerate(tensors):
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            label = names[i] if names is not None else f"tensor {i}"
            raise ad.NumericsError(
                f"non-finite gradient for parameter '{label}' at optimizer "
                f"step {t} (max |g| over finite entries: "
                f"{np.max(np.abs(g[np.isfinite(g)])) if np.isfinite(g).any() else 0.0:g})")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype,
                                                               copy=False)


def make_batch(spec: CodeSpec, cfg: TrainConfig, rng: np.random.Generator):
    """Draw one training batch: (m_y (B,n), s_y (B,m), eps (B,n)).

    Per sample: Eb/N0 ~ U[snr_low_db, snr_high_db], a message drawn whether
    or not it is used (so both codeword modes consume the stream the same
    way), and noise applied in the codeword sign frame via
    y = x * (1 + sigma * z).  With identical rng state the two modes
    therefore produce bit-identical decoder inputs and targets.
    """
    b = cfg.batch_size
    ebn0 = rng.uniform(cfg.snr_low_db, cfg.snr_high_db, size=b)
    u = rng.integers(0, 2, size=(b, spec.k), dtype=np.uint8)
    z = rng.standard_normal((b, spec.n))
    if cfg.use_zero_codeword:
        c = np.zeros((b, spec.n), dtype=np.uint8)
    else:
        c = np.vstack([encode(spec, u[i]) for i in range(b)])
    x = 1.0 - 2.0 * c.astype(np.float64)
    sigma = (2.0 * spec.rate * 10.0 ** (ebn0 / 10.0)) ** -0.5
    y = x * (1.0 + sigma[:, None] * z)
    m_y, s_y, y_b = decoder_inputs(spec, y)
    return m_y, s_y, y_b ^ c


@dataclass
class TrainResult:
    """Artifacts of a completed run."""

    params: ModelParameters
    history: list[tuple[int, float, float]]  # (step, lr, train_loss)
    val_initial: float
    val_final: float
    checkpoints: list[Path] = field(default_factory=list)


def _batch_loss(spec, params, m_y, s_y, eps) -> Tensor:
    nu = forward(m_y, s_y, spec, params)
    return bce_loss(nu, eps, reduction="mean")


def _eval_loss(spec, params, m_y, s_y, eps) -> float:
    with ad.no_grad():
        return float(_batch_loss(spec, params, m_y, s_y, eps).item())


def train(spec: CodeSpec, model_cfg: ModelConfig, train_cfg: TrainConfig,
          out_dir: str | Path | None = None,
          log_every: int = 0) -> TrainResult:
    """Run the full training loop; returns the trained parameters.

    If out_dir is given, writes loss_log.csv plus checkpoint_final (and
    checkpoint_step{N} every checkpoint_every steps).  A non-finite loss or
    gradient aborts with NumericsError rather than training on garbage.
    """
    params = init_params(spec, model_cfg,
                         frame_rng(train_cfg.seed, _LANE_INIT))
    tensors = params.trainable()
    names = list(params.tensors.keys())
    opt = AdamState.for_tensors(tensors)

    val_batch = make_batch(spec, train_cfg,
                           frame_rng(train_cfg.seed, _LANE_VAL, 0))
    val_initial = _eval_loss(spec, params, *val_batch)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    checkpoints: list[Path] = []
    history: list[tuple[int, float, float]] = []

    for step in range(train_cfg.steps):
        rng = frame_rng(train_cfg.seed, _LANE_BATCH, step)
        m_y, s_y, eps = make_batch(spec, train_cfg, rng)
        ad.zero_grad(tensors)
        loss = _batch_loss(spec, params, m_y, s_y, eps)
        loss_val = float(loss.item())
        if not math.isfinite(loss_val):
            raise ad.NumericsError(
                f"training diverged: non-finite loss at step {step}")
        ad.backward(loss)
        lr = lr_at(train_cfg, step)
        adam_step(tensors, opt, lr,
                  beta1=train_cfg.adam_beta1, beta2=train_cfg.adam_beta2,
                  eps=train_cfg.adam_eps, names=names)
        history.append((step, lr, loss_val))
        if log_every and (step % log_every == 0 or step == train_cfg.steps - 1):
            print(f"step {step:6d}  lr {lr:.3e}  loss {loss_val:.6f}")
        if (out_path is not None and train_cfg.checkpoint_every
                and (step + 1) % train_cfg.checkpoint_every == 0):
            base = out_path / f"checkpoint_step{step + 1:06d}"
            save_checkpoint(params,
                            {"step": step + 1, "seed": train_cfg.seed}, base)
            checkpoints.append(base)

    val_final = _eval_loss(spec, params, *val_batch)

    if out_path is not None:
        lines = ["step,lr,train_loss"]
        lines += [f"{s},{lr:.10g},{lv:.10g}" for s, lr, lv in history]
        (out_path / "loss_log.csv").write_text("\n".join(lines) + "\n",
                                               encoding="utf-8")
        base = out_path / "checkpoint_final"
        save_checkpoint(params,
                        {"step": train_cfg.steps, "seed": train_cfg.seed},
                        base)
        checkpoints.append(base)

    return TrainResult(params=params, history=history,
                       val_initial=val_initial, val_final=val_final,
                       checkpoints=checkpoints)


# ---------------------------------------------------------------------------
# Checkpoints: {base}.manifest.json (UTF-8, sorted keys) + {base}.bin blob.
# The blob is the tensors' raw little-endian float bytes concatenated in
# manifest order (names sorted); offsets are explicit so a reader never has
# to infer layout.  Loading validates the manifest against the target code
# and configuration and fails loudly on any mismatch.
# ---------------------------------------------------------------------------

def _checkpoint_paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    return (base.with_name(base.name + ".manifest.json"),
            base.with_name(base.name + ".bin"))


def _le_dtype(dtype: np.dtype) -> str:
    if dtype == np.float32:
        return "<f4"
    if dtype == np.float64:
        return "<f8"
    raise CheckpointError(f"unsupported tensor dtype {dtype}")


def save_checkpoint(params: ModelParameters, meta: dict,
                    base: str | Path) -> tuple[Path, Path]:
    """Write manifest + blob for `params`; returns the two paths."""
    manifest_path, blob_path = _checkpoint_paths(base)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name in sorted(params.tensors):
        arr = params.tensors[name].data
        dt = _le_dtype(arr.dtype)
        raw = np.ascontiguousarray(arr).astype(dt, copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt,
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    step = int(meta.get("step", 0))
    seed = meta.get("seed")
    digest_src = json.dumps({"seed": seed, "step": step}, sort_keys=True)
    manifest = {
        "code": {"name": params.code_name, "h_sha256": params.h_sha256},
        "model_config": asdict(params.config),
        "step": step,
        "rng_digest": hashlib.sha256(digest_src.encode()).hexdigest()[:16],
        "total_nbytes": offset,
        "tensors": entries,
    }
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1)
                             + "\n", encoding="utf-8")
    blob_path.write_bytes(b"".join(chunks))
    return manifest_path, blob_path


def load_checkpoint(base: str | Path, spec: CodeSpec) -> ModelParameters:
    """Read a checkpoint back for `spec`; bit-exact inverse of save.

    Raises CheckpointError on a corrupt manifest, a truncated blob (naming
    the first tensor that runs past the end), a tensor whose shape disagrees
    with the stored configuration, or an H hash that does not match `spec`.
    """
    manifest_path, blob_path = _checkpoint_paths(base)
    if not manifest_path.exists():
        raise CheckpointError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt manifest {manifest_path}: {e}") from e
    try:
        code_meta = manifest["code"]
        cfg = ModelConfig(**manifest["model_config"])
        entries = manifest["tensors"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt manifest {manifest_path}: {e}") from e

    if code_meta.get("h_sha256") != spec.h_sha256:
        raise CheckpointError(
            f"checkpoint is for code '{code_meta.get('name')}' with H hash "
            f"{code_meta.get('h_sha256')}, but the target code '{spec.name}' "
            f"has H hash {spec.h_sha256}")

    # Shape oracle: a throwaway init gives the canonical name/shape table.
    reference = init_params(spec, cfg, np.random.default_rng(0))
    expected = {n: t.shape for n, t in reference.tensors.items()}
    got_names = [e.get("name") for e in entries]
    if sorted(got_names) != sorted(expected):
        missing = sorted(set(expected) - set(got_names))
        extra = sorted(set(got_names) - set(expected))
        raise CheckpointError(
            f"manifest tensor set mismatch (missing {missing}, "
            f"unexpected {extra})")

    if not blob_path.exists():
        raise CheckpointError(f"missing blob {blob_path}")
    blob = blob_path.read_bytes()

    loaded: dict[str, Tensor] = {}
    offset = 0
    for entry in entries:
        name = entry["name"]
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise CheckpointError(
                f"shape mismatch for tensor '{name}': manifest says "
                f"{list(shape)}, configuration requires {list(expected[name])}")
        dtype = np.dtype(entry["dtype"])
        nbytes = int(entry["nbytes"])
        if int(entry["offset"]) != offset:
            raise CheckpointError(
                f"non-contiguous blob layout at tensor '{name}'")
        want = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != want:
            raise CheckpointError(
                f"tensor '{name}' declares {nbytes} bytes but shape "
                f"{list(shape)} needs {want}")
        if offset + nbytes > len(blob):
            raise CheckpointError(
                f"blob truncated: tensor '{name}' needs bytes "
                f"[{offset}, {offset + nbytes}) but blob has {len(blob)}")
        arr = np.frombuffer(blob, dtype=dtype, count=want // dtype.itemsize,
                            offset=offset).reshape(shape)
        loaded[name] = Tensor(arr.astype(dtype.base, copy=True),
                              requires_grad=True)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(
            f"blob has {len(blob) - offset} trailing bytes beyond the "
            f"manifest layout")

    # Preserve the canonical insertion order so optimizers and tests see
    # the same tensor ordering as a freshly initialized model.
    ordered = {name: loaded[name] for name in reference.tensors}
    return ModelParameters(code_name=code_meta.get("name", spec.name),
                           h_sha256=spec.h_sha256, config=cfg,
                           tensors=ordered)
