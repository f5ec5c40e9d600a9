"""Dense, loop-based reference of the decoder forward pass.

Oracle for the tests only: computes the same function as mmpd.model.forward
for a single frame, written with explicit per-node/per-edge loops and plain
numpy so it shares no code with the autodiff implementation.  Weights come
in as a flat {name: ndarray} dict (use float64 for tight comparisons).
"""
import numpy as np


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    return x * sigmoid(x)


def gelu(x):
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x ** 3)))


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def linear(x, w, b=None):
    y = x @ w.T
    return y if b is None else y + b


def embed_dense(m_y, s_y, w):
    m_state = m_y[:, None] * w["vn_embed"] + w["vn_bias"]
    s_state = s_y[:, None] * w["cn_embed"] + w["cn_bias"]
    return m_state, s_state


def aggregate_dense(direction, m_state, s_state, h, w, prefix):
    """Edge-scored aggregation via an explicit double loop over H."""
    m_rows, n_cols = h.shape
    w_m = w[prefix + ".w_m.w"]
    w_s = w[prefix + ".w_s.w"]
    w_1 = w[prefix + ".w_1.w"]
    w_2 = w[prefix + ".w_2.w"]
    w_p = w[prefix + ".w_p.w"]
    w_o = w[prefix + ".w_o.w"]

    if direction == "cn_to_vn":
        targets, d = n_cols, m_state.shape[1]
    else:
        targets, d = m_rows, s_state.shape[1]
    out = np.zeros((targets, d))

    for tgt in range(targets):
        if direction == "cn_to_vn":
            neigh = [j for j in range(m_rows) if h[j, tgt]]
        else:
            neigh = [i for i in range(n_cols) if h[tgt, i]]
        scores = []
        sources = []
        for other in neigh:
            if direction == "cn_to_vn":
                pm = w_m @ m_state[tgt]
                ps = w_s @ s_state[other]
                a, b = pm, ps
                src = s_state[other]
            else:
                pm = w_m @ m_state[other]
                ps = w_s @ s_state[tgt]
                a, b = ps, pm
                src = m_state[other]
            phi = np.concatenate([a * b, a - b])
            scores.append(float((w_2 @ silu(w_1 @ phi))[0]))
            sources.append(w_p @ src)
        scores = np.array(scores)
        alpha = np.exp(scores - scores.max())
        alpha = alpha / alpha.sum()
        agg = sum(al * s for al, s in zip(alpha, sources))
        out[tgt] = w_o @ agg
    return out


def ffn_dense(x, w, prefix):
    h = gelu(linear(x, w[prefix + ".lin1.w"], w[prefix + ".lin1.b"]))
    return linear(h, w[prefix + ".lin2.w"], w[prefix + ".lin2.b"])


def gated_update_dense(xi, eta, w, prefix):
    ln_xi = layer_norm(xi, w[prefix + ".ln_state.gain"],
                       w[prefix + ".ln_state.bias"])
    ln_eta = layer_norm(eta, w[prefix + ".ln_msg.gain"],
                        w[prefix + ".ln_msg.bias"])
    h = gelu(linear(np.concatenate([ln_xi, ln_eta], axis=-1),
                    w[prefix + ".w_h.w"]))
    gate = sigmoid(linear(h, w[prefix + ".w_g.w"]))
    delta = linear(h, w[prefix + ".w_delta.w"])
    xi2 = xi + gate * delta
    normed = layer_norm(xi2, w[prefix + ".ln_ffn.gain"],
                        w[prefix + ".ln_ffn.bias"])
    return xi2 + ffn_dense(normed, w, prefix + ".ffn")


def ssm_scan_dense(a_bar, b_bar_x, c, d_skip, x):
    """Naive sequential scan; x is (L, inner), state (inner, n_state)."""
    length, inner = x.shape
    n_state = a_bar.shape[-1]
    h = np.zeros((inner, n_state))
    ys = np.zeros((length, inner))
    for t in range(length):
        h = a_bar[t] * h + b_bar_x[t]
        ys[t] = (h * c[t][None, :]).sum(axis=-1) + d_skip * x[t]
    return ys


def mamba_dir_dense(x, w, prefix):
    u = linear(x, w[prefix + ".w_in.w"])
    z = linear(x, w[prefix + ".w_gate.w"])
    kern = w[prefix + ".conv"]            # (K, inner)
    length, inner = u.shape
    k = kern.shape[0]
    conv = np.zeros_like(u)
    for t in range(length):
        for j in range(k):
            src = t - (k - 1) + j
            if src >= 0:
                conv[t] += kern[j] * u[src]
    u = silu(conv)
    delta = softplus(linear(u, w[prefix + ".w_dt.w"], w[prefix + ".w_dt.b"]))
    b_proj = linear(u, w[prefix + ".w_b.w"])
    c_proj = linear(u, w[prefix + ".w_c.w"])
    a = -np.exp(w[prefix + ".a_log"])     # (inner, n_state)
    a_bar = np.exp(delta[:, :, None] * a)
    bx = (delta * u)[:, :, None] * b_proj[:, None, :]
    y = ssm_scan_dense(a_bar, bx, c_proj, w[prefix + ".d_skip"], u)
    return linear(y * silu(z), w[prefix + ".w_out.w"])


def bimamba_dense(x, w, prefix):
    fwd = mamba_dir_dense(x, w, prefix + ".fwd")
    rev = mamba_dir_dense(x[::-1], w, prefix + ".rev")[::-1]
    mid = x + w[prefix + ".lam"] * (fwd + rev)
    normed = layer_norm(mid, w[prefix + ".ln_ffn.gain"],
                        w[prefix + ".ln_ffn.bias"])
    return mid + ffn_dense(normed, w, prefix + ".ffn")


def forward_dense(m_y, s_y, h, weights, n_blocks):
    """Single-frame forward pass; returns the (n,) logit vector."""
    w = weights
    m_state, s_state = embed_dense(np.asarray(m_y, dtype=np.float64),
                                   np.asarray(s_y, dtype=np.float64), w)
    for blk in range(n_blocks):
        p = f"block{blk}"
        msg_v = aggregate_dense("cn_to_vn", m_state, s_state, h, w,
                                p + ".cn_to_vn")
        m_state = gated_update_dense(m_state, msg_v, w, p + ".vn_update")
        m_state = bimamba_dense(m_state, w, p + ".vn_mamba")
        msg_c = aggregate_dense("vn_to_cn", m_state, s_state, h, w,
                                p + ".vn_to_cn")
        s_state = gated_update_dense(s_state, msg_c, w, p + ".cn_update")
        s_state = bimamba_dense(s_state, w, p + ".cn_mamba")
    normed = layer_norm(m_state, w["head.ln.gain"], w["head.ln.bias"])
    return linear(normed, w["head.w_out.w"], w["head.w_out.b"])[:, 0]
