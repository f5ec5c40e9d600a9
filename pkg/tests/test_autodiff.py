import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from mmpd import autodiff as ad
from mmpd.autodiff import NumericsError, SegmentIndex, Tensor

TOL = 1e-7  # float64 central differences


def t64(arr, grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


def rnd(rng, *shape):
    return t64(rng.standard_normal(shape))


def fd(f, tensors, h=1e-5):
    return ad.finite_difference_check(f, tensors, h=h)


# ---------------------------------------------------------------------------
# elementwise and linear kernels
# ---------------------------------------------------------------------------

def test_add_subtract_multiply_broadcasting_fd():
    rng = np.random.default_rng(0)
    a = rnd(rng, 4, 3)
    b = rnd(rng, 3)        # broadcast over rows
    c = rnd(rng, 4, 1)     # broadcast over columns
    f = lambda: ad.total_sum(ad.multiply(ad.add(a, b), ad.subtract(a, c)))
    assert fd(f, [a, b, c]) < TOL


def test_operator_sugar_matches_kernels():
    rng = np.random.default_rng(1)
    a, b = rnd(rng, 5), rnd(rng, 5)
    lhs = ((a + b) * a - b)
    rhs = ad.subtract(ad.multiply(ad.add(a, b), a), b)
    assert np.allclose(lhs.data, rhs.data)
    neg = -a
    assert np.allclose(neg.data, -a.data)


def test_linear_fd_and_oracle():
    rng = np.random.default_rng(2)
    x, w, b = rnd(rng, 6, 4), rnd(rng, 3, 4), rnd(rng, 3)
    y = ad.linear(x, w, b)
    assert np.allclose(y.data, x.data @ w.data.T + b.data)
    f = lambda: ad.total_sum(ad.multiply(ad.linear(x, w, b),
                                         ad.linear(x, w, b)))
    assert fd(f, [x, w, b]) < TOL
    with pytest.raises(ValueError):
        ad.linear(x, rnd(rng, 3, 5))


@pytest.mark.parametrize("kernel,oracle", [
    (ad.silu, lambda x: x / (1 + np.exp(-x))),
    (ad.sigmoid, lambda x: 1 / (1 + np.exp(-x))),
    (ad.softplus, lambda x: np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0)),
    (ad.exp, np.exp),
    (ad.gelu, lambda x: 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi)
                                               * (x + 0.044715 * x ** 3)))),
])
def test_activation_oracles_and_fd(kernel, oracle):
    rng = np.random.default_rng(3)
    x = rnd(rng, 4, 5)
    assert np.allclose(kernel(x).data, oracle(x.data), atol=1e-12)
    f = lambda: ad.total_sum(kernel(x))
    assert fd(f, x) < TOL


def test_stable_activations_at_extremes():
    big = t64([-1e4, -30.0, 0.0, 30.0, 1e4])
    for kernel in (ad.sigmoid, ad.softplus, ad.silu):
        out = kernel(big)
        assert np.all(np.isfinite(out.data))
    assert ad.softplus(big).data[0] == 0.0
    assert ad.softplus(big).data[-1] == pytest.approx(1e4)


def test_exp_overflow_raises_named_error():
    x = t64([800.0])
    with pytest.raises(NumericsError, match="exp"):
        ad.exp(x)


def test_layer_norm_fd_and_moments():
    rng = np.random.default_rng(4)
    x, gain, bias = rnd(rng, 6, 8), rnd(rng, 8), rnd(rng, 8)
    y = ad.layer_norm(x, gain, bias)
    centered = (y.data - bias.data) / gain.data
    assert np.allclose(centered.mean(axis=-1), 0, atol=1e-7)
    assert np.allclose(centered.std(axis=-1), 1, atol=1e-3)
    f = lambda: ad.total_sum(ad.multiply(ad.layer_norm(x, gain, bias),
                                         ad.layer_norm(x, gain, bias)))
    assert fd(f, [x, gain, bias]) < 1e-6


def test_concat_reverse_reshape_transpose_fd():
    rng = np.random.default_rng(5)
    a, b = rnd(rng, 3, 2), rnd(rng, 3, 4)

    def f():
        cat = ad.concat_last([a, b])          # (3, 6)
        rev = ad.reverse(cat)                 # flip axis 0
        tr = ad.transpose(rev, 0, 1)          # (6, 3)
        return ad.total_sum(ad.multiply(ad.reshape(tr, (18,)),
                                        ad.reshape(tr, (18,))))

    assert fd(f, [a, b]) < TOL


# ---------------------------------------------------------------------------
# graph kernels
# ---------------------------------------------------------------------------

def test_gather_scatter_oracle_and_fd():
    rng = np.random.default_rng(6)
    x = rnd(rng, 5, 3)
    idx = np.array([0, 2, 2, 4])
    g = ad.gather(x, idx)
    assert np.array_equal(g.data, x.data[idx])
    s = ad.scatter_add(g, idx, 5)
    dense = np.zeros((5, 3))
    np.add.at(dense, idx, x.data[idx])
    assert np.allclose(s.data, dense)
    f = lambda: ad.total_sum(ad.multiply(ad.scatter_add(ad.gather(x, idx),
                                                        idx, 5), x))
    assert fd(f, x) < TOL
    with pytest.raises(ValueError):
        ad.gather(x, np.array([5]))
    with pytest.raises(ValueError):
        ad.scatter_add(x, np.array([0, 1, 2, 3, 9]), 5)


def dense_segment_softmax(scores, seg_ids, n_seg):
    out = np.zeros_like(scores)
    for s in range(n_seg):
        mask = seg_ids == s
        e = np.exp(scores[mask] - scores[mask].max(axis=0, keepdims=True))
        out[mask] = e / e.sum(axis=0, keepdims=True)
    return out


def test_segment_softmax_oracle_and_fd():
    rng = np.random.default_rng(7)
    seg_ids = np.array([0, 0, 1, 1, 1, 2])
    seg = SegmentIndex(np.asarray(seg_ids), 3)
    x = rnd(rng, 6, 2)
    y = ad.segment_softmax(x, seg)
    assert np.allclose(y.data, dense_segment_softmax(x.data, seg_ids, 3),
                       atol=1e-12)
    # rows of each segment sum to one
    for s in range(3):
        assert np.allclose(y.data[seg_ids == s].sum(axis=0), 1.0)
    f = lambda: ad.total_sum(ad.multiply(ad.segment_softmax(x, seg), x))
    assert fd(f, x) < TOL


def test_segment_softmax_rejects_empty_segment():
    with pytest.raises(ValueError):
        SegmentIndex(np.array([0, 0, 2]), 3)


def test_segment_softmax_shift_invariance():
    seg = SegmentIndex(np.array([0, 0, 0, 1, 1]), 2)
    x = t64([1.0, 2.0, 3.0, -1.0, 1.0])
    shifted = t64([101.0, 102.0, 103.0, 999.0, 1001.0])
    a = ad.segment_softmax(x, seg).data
    b = ad.segment_softmax(shifted, seg).data
    assert np.allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------------------
# sequence kernels
# ---------------------------------------------------------------------------

def naive_ssm_scan(a_bar, b_bar_x, c, d_skip, x):
    length, batch, d, n = a_bar.shape
    h = np.zeros((batch, d, n))
    ys = np.zeros((length, batch, d))
    for t in range(length):
        h = a_bar[t] * h + b_bar_x[t]
        ys[t] = (h * c[t][:, None, :]).sum(-1) + d_skip * x[t]
    return ys


def test_ssm_scan_matches_naive_loop():
    rng = np.random.default_rng(8)
    length, batch, d, n = 5, 2, 3, 4
    a = t64(rng.uniform(0.1, 0.9, size=(length, batch, d, n)))
    bx = rnd(rng, length, batch, d, n)
    c = rnd(rng, length, batch, n)
    ds = rnd(rng, d)
    x = rnd(rng, length, batch, d)
    y = ad.ssm_scan(a, bx, c, ds, x)
    assert np.allclose(y.data, naive_ssm_scan(a.data, bx.data, c.data,
                                              ds.data, x.data), atol=1e-12)
    f = lambda: ad.total_sum(ad.multiply(ad.ssm_scan(a, bx, c, ds, x),
                                         ad.ssm_scan(a, bx, c, ds, x)))
    assert fd(f, [a, bx, c, ds, x]) < 1e-6


def naive_causal_conv(x, kernel):
    length = x.shape[0]
    k = kernel.shape[0]
    out = np.zeros_like(x)
    for t in range(length):
        for j in range(k):
            src = t - (k - 1) + j
            if src >= 0:
                out[t] += kernel[j] * x[src]
    return out


def test_depthwise_causal_conv_matches_naive():
    rng = np.random.default_rng(9)
    x = rnd(rng, 6, 2, 3)          # (L, B, C)
    kern = rnd(rng, 4, 3)          # (K, C)
    y = ad.depthwise_causal_conv(x, kern)
    assert np.allclose(y.data, naive_causal_conv(x.data, kern.data),
                       atol=1e-12)
    f = lambda: ad.total_sum(ad.multiply(
        ad.depthwise_causal_conv(x, kern),
        ad.depthwise_causal_conv(x, kern)))
    assert fd(f, [x, kern]) < TOL


def test_causality_of_conv():
    x = t64(np.zeros((5, 1, 1)))
    x.data[2, 0, 0] = 1.0
    kern = t64(np.ones((3, 1)))
    y = ad.depthwise_causal_conv(x, kern)
    assert np.allclose(y.data[:2], 0.0)  # nothing before the impulse
    assert y.data[2, 0, 0] == 1.0


# ---------------------------------------------------------------------------
# engine mechanics
# ---------------------------------------------------------------------------

def test_backward_accumulates_through_shared_nodes():
    x = t64([2.0])
    y = ad.add(x, x)            # dy/dx = 2
    z = ad.multiply(y, y)       # dz/dy = 2y = 8
    ad.backward(ad.total_sum(z))
    assert x.grad[0] == pytest.approx(16.0)


def test_no_grad_blocks_taping():
    x = t64([1.0, 2.0])
    with ad.no_grad():
        y = ad.multiply(x, x)
    assert y._parents == () and not y.requires_grad  # detached from the tape
    ad.zero_grad([x])
    y2 = ad.multiply(x, x)
    ad.backward(ad.total_sum(y2))
    assert x.grad is not None


def test_tensor_dtype_and_finite_validation():
    # integer input is coerced to float64 (convenient for bit targets)
    t = Tensor(np.array([1, 2], dtype=np.int64))
    assert t.dtype == np.float64
    with pytest.raises(NumericsError):
        Tensor(np.array([1.0, np.nan]))


def test_kernel_nonfinite_error_names_kernel():
    a = t64([1e308])
    with pytest.raises(NumericsError, match="multiply"):
        ad.multiply(a, a)


def test_fd_rejects_bad_inputs():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(ValueError):
        ad.finite_difference_check(lambda: ad.total_sum(x), x)
    y = t64([1.0])
    with pytest.raises(ValueError):
        ad.finite_difference_check(lambda: ad.total_sum(y), y, h=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=3, max_side=4),
              elements=st.floats(-10, 10)))
def test_fuzz_elementwise_grads(data):
    x = Tensor(data.copy(), requires_grad=True)
    f = lambda: ad.total_sum(ad.multiply(ad.silu(x), ad.sigmoid(x)))
    assert ad.finite_difference_check(f, x) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=5), st.data())
def test_fuzz_segment_softmax_partitions(seg_sizes, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    seg_ids = np.concatenate([np.full(s, i) for i, s in enumerate(seg_sizes)])
    seg = SegmentIndex(seg_ids, len(seg_sizes))
    x = t64(rng.standard_normal(seg_ids.size))
    y = ad.segment_softmax(x, seg)
    assert np.allclose(
        y.data, dense_segment_softmax(x.data, seg_ids, len(seg_sizes)),
        atol=1e-12)
