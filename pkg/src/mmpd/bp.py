"""Flooding sum-product belief propagation on the Tanner graph.

Messages live on edges.  The check update uses the tanh/atanh product rule
in sign/log-magnitude form so that a zero (erasure) message poisons exactly
the edges it should; the variable update sums the channel LLR with incident
check messages.  Everything is vectorized over a leading frame axis so the
Monte Carlo harness can push thousands of frames per call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeSpec

_TINY = 1e-300          # magnitude floor before taking logs
_ATANH_GUARD = 1e-15    # keeps atanh away from +-1


@dataclass(frozen=True)
class BpConfig:
    max_iterations: int = 50
    llr_clip: float = 20.0
    early_stop: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.llr_clip <= 0:
            raise ValueError("llr_clip must be positive")


def channel_llr(y, sigma: float) -> np.ndarray:
    """AWGN channel LLR 2y/sigma^2; positive values favor bit 0."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return 2.0 * np.asarray(y, dtype=np.float64) / (sigma * sigma)


class _Graph:
    """One-hot incidence matrices for batched per-node sums."""

    def __init__(self, spec: CodeSpec):
        e = spec.edge_count
        self.to_check = np.zeros((e, spec.m), dtype=np.float64)
        self.to_var = np.zeros((e, spec.n), dtype=np.float64)
        self.to_check[np.arange(e), spec.edge_check] = 1.0
        self.to_var[np.arange(e), spec.edge_var] = 1.0
        self.edge_check = spec.edge_check
        self.edge_var = spec.edge_var
        self.ht = spec.h.T.astype(np.int64)


_graph_cache: dict[str, _Graph] = {}


def _graph(spec: CodeSpec) -> _Graph:
    g = _graph_cache.get(spec.h_sha256)
    if g is None:
        g = _Graph(spec)
        _graph_cache[spec.h_sha256] = g
    return g


def bp_decode_batch(spec: CodeSpec, llr: np.ndarray, cfg: BpConfig):
    """Decode a (B, n) LLR batch; returns (c_hat, iterations_used, converged)."""
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim != 2 or llr.shape[1] != spec.n:
        raise ValueError(f"llr batch must be (B, {spec.n})")
    if not np.all(np.isfinite(llr)):
        raise ValueError("llr contains non-finite entries")
    g = _graph(spec)
    nb = llr.shape[0]
    clip = cfg.llr_clip

    c_hat = (llr < 0).astype(np.uint8)
    iters = np.full(nb, cfg.max_iterations, dtype=np.int64)
    done = np.zeros(nb, dtype=bool)

    active = np.arange(nb)
    if cfg.early_stop:
        clean = ((c_hat @ g.ht) % 2 == 0).all(axis=1)
        iters[clean] = 0
        done[clean] = True
        active = active[~clean]
        if not active.size:
            return c_hat, iters, done
        llr = llr[active]
    q = llr[:, g.edge_var].copy()          # variable-to-check messages
    llr_act = llr

    for it in range(1, cfg.max_iterations + 1):
        np.clip(q, -clip, clip, out=q)
        t = np.tanh(0.5 * q)
        sign = np.where(t < 0, -1.0, 1.0)
        logmag = np.log(np.maximum(np.abs(t), _TINY))
        sum_log = logmag @ g.to_check                 # (B, m)
        neg = (t < 0).astype(np.float64) @ g.to_check
        prod_others = np.exp(sum_log[:, g.edge_check] - logmag) \
            * np.where((neg[:, g.edge_check] % 2.0) != 0, -1.0, 1.0) * sign
        np.clip(prod_others, -1.0 + _ATANH_GUARD, 1.0 - _ATANH_GUARD, out=prod_others)
        r = 2.0 * np.arctanh(prod_others)
        np.clip(r, -clip, clip, out=r)

        total = llr_act + r @ g.to_var                # posterior LLR (B, n)
        q = total[:, g.edge_var] - r
        bits = (total < 0).astype(np.uint8)

        c_hat[active] = bits
        synd_ok = ((bits @ g.ht) % 2 == 0).all(axis=1)
        if cfg.early_stop:
            iters[active[synd_ok]] = it
            done[active[synd_ok]] = True
            keep = ~synd_ok
            if not keep.any():
                break
            active = active[keep]
            q = q[keep]
            llr_act = llr_act[keep]
        else:
            done[active] = synd_ok

    return c_hat, iters, done


def bp_decode(spec: CodeSpec, llr, cfg: BpConfig):
    """Single-frame sum-product decode.

    Returns (c_hat, iterations_used, converged); converged is true exactly
    when the final hard decision has zero syndrome.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape != (spec.n,):
        raise ValueError(f"llr shape {llr.shape} != ({spec.n},)")
    c_hat, iters, conv = bp_decode_batch(spec, llr[None, :], cfg)
    return c_hat[0], int(iters[0]), bool(conv[0])
