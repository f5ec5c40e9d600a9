"""Mamba message-passing decoder: parameters, forward pass, decoding rule.

The decoder keeps two node-state streams — one row per variable node (M)
and one per check node (S) — and alternates edge-indexed attention-style
aggregation, a gated residual node update, and a bidirectional selective
state-space (Mamba) layer over each stream.  A final linear head reads the
variable stream into one logit per bit, predicting whether the hard
decision at that position is in error.

Internally every activation is laid out node-axis-first, ``(nodes, batch,
d)``, so all graph kernels act on axis 0.  Public entry points accept
either single frames (``(n,)`` vectors) or batches (``(B, n)`` arrays).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SegmentIndex, Tensor
from .channel import decoder_inputs
from .codes import CodeSpec

__all__ = [
    "ModelConfig",
    "ModelParameters",
    "StreamState",
    "init_params",
    "embed_inputs",
    "aggregate",
    "gated_update",
    "bimamba_block",
    "forward",
    "decode",
]


@dataclass(frozen=True)
class ModelConfig:
    """Decoder hyperparameters.

    T: decoder blocks; d: node-state width; r: pairwise projection width;
    ssm_state: SSM state size per channel; ssm_expand: inner-width
    multiplier (inner width = ssm_expand * d); conv_kernel: depthwise
    causal conv width; ffn_mult: FFN hidden multiplier.
    """

    T: int = 2
    d: int = 16
    r: int = 8
    ssm_state: int = 8
    ssm_expand: int = 2
    conv_kernel: int = 4
    ffn_mult: int = 2

    def __post_init__(self):
        for name in ("d", "r", "ssm_state", "ssm_expand", "conv_kernel",
                     "ffn_mult"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.T < 0:
            raise ValueError("ModelConfig.T must be >= 0")
        if self.r > self.d:
            warnings.warn(f"r={self.r} exceeds d={self.d}; projection "
                          "widths above the state width waste parameters",
                          stacklevel=2)

    @property
    def inner(self) -> int:
        return self.ssm_expand * self.d


@dataclass
class StreamState:
    """Node states: M rows follow variable nodes, S rows follow checks."""

    M: Tensor
    S: Tensor


@dataclass
class ModelParameters:
    """Flat named tensor store tied to one code and one configuration."""

    code_name: str
    h_sha256: str
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def trainable(self) -> list[Tensor]:
        return list(self.tensors.values())

    def param_count(self) -> int:
        return sum(t.size for t in self.tensors.values())


def _xavier(rng, n_out: int, n_in: int, dtype) -> np.ndarray:
    bound = float(np.sqrt(6.0 / (n_in + n_out)))
    return rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)


def init_params(spec: CodeSpec, cfg: ModelConfig, rng,
                dtype=np.float32) -> ModelParameters:
    """Deterministic initialization given the generator state.

    Linear maps: uniform Xavier; biases: zero; node embeddings: Gaussian
    std 0.02; A_log: log-uniform decay rates spanning [1, ssm_state]
    shared across channels; residual scale lambda: 0.5; skip D: 1.
    """
    n, m, d, r = spec.n, spec.m, cfg.d, cfg.r
    inner, ns = cfg.inner, cfg.ssm_state
    params = ModelParameters(spec.name, spec.h_sha256, cfg)
    t = params.tensors

    def par(name: str, arr: np.ndarray) -> None:
        t[name] = Tensor(arr.astype(dtype), requires_grad=True)

    def lin(name: str, n_out: int, n_in: int, bias: bool = False) -> None:
        par(name + ".w", _xavier(rng, n_out, n_in, dtype))
        if bias:
            par(name + ".b", np.zeros(n_out))

    def ln(name: str, width: int) -> None:
        par(name + ".gain", np.ones(width))
        par(name + ".bias", np.zeros(width))

    par("vn_embed", rng.normal(0.0, 0.02, size=(n, d)))
    par("vn_bias", np.zeros((n, d)))
    par("cn_embed", rng.normal(0.0, 0.02, size=(m, d)))
    par("cn_bias", np.zeros((m, d)))

    a_init = np.log(np.geomspace(1.0, ns, ns))[None, :].repeat(inner, axis=0)

    def mamba_dir(prefix: str) -> None:
        lin(prefix + ".w_in", inner, d)
        lin(prefix + ".w_gate", inner, d)
        par(prefix + ".conv", _xavier(rng, cfg.conv_kernel, inner, dtype))
        lin(prefix + ".w_dt", inner, inner, bias=True)
        lin(prefix + ".w_b", ns, inner)
        lin(prefix + ".w_c", ns, inner)
        par(prefix + ".a_log", a_init)
        par(prefix + ".d_skip", np.ones(inner))
        lin(prefix + ".w_out", d, inner)

    def ffn(prefix: str) -> None:
        lin(prefix + ".lin1", cfg.ffn_mult * d, d, bias=True)
        lin(prefix + ".lin2", d, cfg.ffn_mult * d, bias=True)

    for b in range(cfg.T):
        for direction in ("cn_to_vn", "vn_to_cn"):
            p = f"block{b}.{direction}"
            lin(p + ".w_m", r, d)
            lin(p + ".w_s", r, d)
            lin(p + ".w_1", r, 2 * r)
            lin(p + ".w_2", 1, r)
            lin(p + ".w_p", d, d)
            lin(p + ".w_o", d, d)
        for stream in ("vn", "cn"):
            p = f"block{b}.{stream}_update"
            ln(p + ".ln_state", d)
            ln(p + ".ln_msg", d)
            lin(p + ".w_h", d, 2 * d)
            lin(p + ".w_g", d, d)
            lin(p + ".w_delta", d, d)
            ln(p + ".ln_ffn", d)
            ffn(p + ".ffn")
            p = f"block{b}.{stream}_mamba"
            mamba_dir(p + ".fwd")
            mamba_dir(p + ".rev")
            par(p + ".lam", np.array(0.5))
            ln(p + ".ln_ffn", d)
            ffn(p + ".ffn")

    ln("head.ln", d)
    lin("head.w_out", 1, d, bias=True)
    return params


def _as_node_batch(x, count: int, what: str) -> np.ndarray:
    """Accept (count,) or (B, count); return (count, B) float array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != count:
            raise ValueError(f"{what} has length {arr.shape[0]}, expected {count}")
        return arr[:, None]
    if arr.ndim == 2:
        if arr.shape[1] != count:
            raise ValueError(f"{what} has row length {arr.shape[1]}, "
                             f"expected {count}")
        return arr.T.copy()
    raise ValueError(f"{what} must be 1-D or 2-D, got {arr.ndim}-D")


def embed_inputs(m_y, s_y, params: ModelParameters) -> StreamState:
    """Scale per-node embeddings by the inputs: X_i = in_i * e_i + b_i."""
    n, d = params["vn_embed"].shape
    m = params["cn_embed"].shape[0]
    my = _as_node_batch(m_y, n, "m_y")
    sy = _as_node_batch(s_y, m, "s_y")
    if (my < 0).any():
        raise ValueError("m_y must be non-negative (reliability magnitudes)")
    if not np.isin(sy, (-1.0, 1.0)).all():
        raise ValueError("s_y entries must be +/-1 (signed syndrome)")
    dtype = params["vn_embed"].dtype
    my_t = Tensor(my[:, :, None].astype(dtype))
    sy_t = Tensor(sy[:, :, None].astype(dtype))
    m_state = ad.add(ad.multiply(my_t, ad.reshape(params["vn_embed"], (n, 1, d))),
                     ad.reshape(params["vn_bias"], (n, 1, d)))
    s_state = ad.add(ad.multiply(sy_t, ad.reshape(params["cn_embed"], (m, 1, d))),
                     ad.reshape(params["cn_bias"], (m, 1, d)))
    return StreamState(M=m_state, S=s_state)


def _block_weights(params: ModelParameters, prefix: str) -> dict:
    """View of one component's tensors with the prefix stripped."""
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in params.tensors.items()
            if k.startswith(prefix + ".")}


def aggregate(direction: str, m_state: Tensor, s_state: Tensor,
              spec: CodeSpec, w: dict) -> Tensor:
    """Edge-scored neighbor aggregation; returns messages per target node.

    Per edge e=(j,i): both endpoint states are projected to r dims; the
    pairwise feature [proj_a*proj_b ; proj_a-proj_b] (VN projection first
    for cn_to_vn, CN projection first for vn_to_cn) is scored through a
    SiLU MLP, scores are softmax-normalized over each target node's
    neighborhood, and the source states (projected by w_p) are averaged
    with those weights and mixed by w_o.
    """
    if direction not in ("cn_to_vn", "vn_to_cn"):
        raise ValueError(f"unknown aggregation direction {direction!r}")
    ev, ec = spec.edge_var, spec.edge_check
    proj_m = ad.gather(ad.linear(m_state, w["w_m.w"]), ev)
    proj_s = ad.gather(ad.linear(s_state, w["w_s.w"]), ec)
    if direction == "cn_to_vn":
        a, b = proj_m, proj_s
        src = ad.gather(s_state, ec)
        seg = SegmentIndex(ev, spec.n)
    else:
        a, b = proj_s, proj_m
        src = ad.gather(m_state, ev)
        seg = SegmentIndex(ec, spec.m)
    phi = ad.concat_last([ad.multiply(a, b), ad.subtract(a, b)])
    scores = ad.linear(ad.silu(ad.linear(phi, w["w_1.w"])), w["w_2.w"])
    alpha = ad.segment_softmax(scores, seg)
    weighted = ad.multiply(alpha, ad.linear(src, w["w_p.w"]))
    summed = ad.scatter_add(weighted, seg.segment_of, seg.segment_count)
    return ad.linear(summed, w["w_o.w"])


def _ffn(x: Tensor, w: dict, prefix: str) -> Tensor:
    h = ad.gelu(ad.linear(x, w[prefix + ".lin1.w"], w[prefix + ".lin1.b"]))
    return ad.linear(h, w[prefix + ".lin2.w"], w[prefix + ".lin2.b"])


def gated_update(xi: Tensor, eta: Tensor, w: dict) -> Tensor:
    """Gated residual fusion of node states with incoming messages."""
    ln_xi = ad.layer_norm(xi, w["ln_state.gain"], w["ln_state.bias"])
    ln_eta = ad.layer_norm(eta, w["ln_msg.gain"], w["ln_msg.bias"])
    h = ad.gelu(ad.linear(ad.concat_last([ln_xi, ln_eta]), w["w_h.w"]))
    gate = ad.sigmoid(ad.linear(h, w["w_g.w"]))
    delta = ad.linear(h, w["w_delta.w"])
    xi2 = ad.add(xi, ad.multiply(gate, delta))
    normed = ad.layer_norm(xi2, w["ln_ffn.gain"], w["ln_ffn.bias"])
    return ad.add(xi2, _ffn(normed, w, "ffn"))


def _mamba_dir(x: Tensor, w: dict, prefix: str) -> Tensor:
    """One direction of the selective SSM over axis 0."""
    p = prefix + "."
    u = ad.linear(x, w[p + "w_in.w"])
    z = ad.linear(x, w[p + "w_gate.w"])
    u = ad.silu(ad.depthwise_causal_conv(u, w[p + "conv"]))
    delta = ad.softplus(ad.linear(u, w[p + "w_dt.w"], w[p + "w_dt.b"]))
    b_proj = ad.linear(u, w[p + "w_b.w"])
    c_proj = ad.linear(u, w[p + "w_c.w"])
    a = ad.multiply(ad.exp(w[p + "a_log"]), -1.0)
    tail1 = delta.shape + (1,)
    a_bar = ad.exp(ad.multiply(ad.reshape(delta, tail1), a))
    bx = ad.multiply(ad.reshape(ad.multiply(delta, u), tail1),
                     ad.reshape(b_proj, b_proj.shape[:-1] + (1, b_proj.shape[-1])))
    y = ad.ssm_scan(a_bar, bx, c_proj, w[p + "d_skip"], u)
    return ad.linear(ad.multiply(y, ad.silu(z)), w[p + "w_out.w"])


def bimamba_block(x: Tensor, w: dict) -> Tensor:
    """Residual bidirectional Mamba with post-FFN refinement."""
    fwd = _mamba_dir(x, w, "fwd")
    rev = ad.reverse(_mamba_dir(ad.reverse(x), w, "rev"))
    mid = ad.add(x, ad.multiply(w["lam"], ad.add(fwd, rev)))
    normed = ad.layer_norm(mid, w["ln_ffn.gain"], w["ln_ffn.bias"])
    return ad.add(mid, _ffn(normed, w, "ffn"))


def forward(m_y, s_y, spec: CodeSpec, params: ModelParameters) -> Tensor:
    """Full decoder pass; returns error logits.

    Accepts m_y as (n,) with s_y (n-k,) for one frame, or (B, n) with
    (B, n-k) for a batch; returns a Tensor shaped (n,) or (B, n) to match.
    """
    single = np.asarray(m_y).ndim == 1
    state = embed_inputs(m_y, s_y, params)
    m_state, s_state = state.M, state.S
    for b in range(params.config.T):
        try:
            msg_v = aggregate("cn_to_vn", m_state, s_state, spec,
                              _block_weights(params, f"block{b}.cn_to_vn"))
            m_state = gated_update(m_state, msg_v,
                                   _block_weights(params, f"block{b}.vn_update"))
            m_state = bimamba_block(m_state,
                                    _block_weights(params, f"block{b}.vn_mamba"))
            msg_c = aggregate("vn_to_cn", m_state, s_state, spec,
                              _block_weights(params, f"block{b}.vn_to_cn"))
            s_state = gated_update(s_state, msg_c,
                                   _block_weights(params, f"block{b}.cn_update"))
            s_state = bimamba_block(s_state,
                                    _block_weights(params, f"block{b}.cn_mamba"))
        except ad.NumericsError as e:
            raise ad.NumericsError(f"decoder block {b}: {e}") from e
    normed = ad.layer_norm(m_state, params["head.ln.gain"], params["head.ln.bias"])
    logits = ad.linear(normed, params["head.w_out.w"], params["head.w_out.b"])
    nu = ad.reshape(logits, logits.shape[:-1])
    if single:
        return ad.reshape(nu, (nu.shape[0],))
    return ad.transpose(nu, 0, 1)


def decode(y, spec: CodeSpec, params: ModelParameters):
    """Hard-output decoding: flip the predicted error positions of y_b."""
    m_y, s_y, y_b = decoder_inputs(spec, y)
    with ad.no_grad():
        nu = forward(m_y, s_y, spec, params)
    flips = (nu.data > 0).astype(np.uint8)
    return np.bitwise_xor(y_b, flips), nu.data
