import dataclasses
import json
import math
import shutil

import numpy as np
import pytest

from mmpd import autodiff as ad
from mmpd import training as tr
from mmpd.autodiff import Tensor
from mmpd.channel import frame_rng
from mmpd.model import ModelConfig, init_params

TINY = ModelConfig(T=1, d=8, r=4, ssm_state=4, ssm_expand=1, conv_kernel=2,
                   ffn_mult=1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        tr.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        tr.TrainConfig(steps=-1)
    with pytest.raises(ValueError):
        tr.TrainConfig(lr_schedule="linear")
    with pytest.raises(ValueError):
        tr.TrainConfig(snr_low_db=5.0, snr_high_db=2.0)


def test_lr_schedule_endpoints():
    cfg = tr.TrainConfig(steps=100, learning_rate=1e-4, lr_schedule="cosine")
    assert tr.lr_at(cfg, 0) == pytest.approx(1e-4)
    assert tr.lr_at(cfg, 99) == pytest.approx(tr.LR_FLOOR)
    assert tr.lr_at(cfg, 50) < tr.lr_at(cfg, 10)
    const = tr.TrainConfig(steps=100, lr_schedule="constant")
    assert tr.lr_at(const, 0) == tr.lr_at(const, 99) == const.learning_rate


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_bce_at_zero_logits_is_n_ln2():
    n = 7
    loss = tr.bce_loss(np.zeros(n, dtype=np.float64),
                       np.zeros(n, dtype=np.uint8))
    assert loss.item() == pytest.approx(n * math.log(2), rel=1e-12)


def test_bce_matches_direct_formula():
    rng = np.random.default_rng(0)
    nu = rng.standard_normal(40)
    eps = rng.integers(0, 2, size=40)
    # textbook form: -sum eps*log(p) + (1-eps)*log(1-p), p = sigmoid(nu)
    p = 1 / (1 + np.exp(-nu))
    want = -(eps * np.log(p) + (1 - eps) * np.log1p(-p)).sum()
    got = tr.bce_loss(nu, eps, reduction="sum")
    assert got.item() == pytest.approx(want, rel=1e-10)
    got_mean = tr.bce_loss(nu, eps, reduction="mean")
    assert got_mean.item() == pytest.approx(want / 40, rel=1e-10)


def test_bce_is_stable_for_huge_logits():
    nu = np.array([1e4, -1e4, 1e4, -1e4])
    eps = np.array([1, 0, 0, 1])
    loss = tr.bce_loss(nu, eps)
    assert math.isfinite(loss.item())
    assert loss.item() == pytest.approx(2e4, rel=1e-6)  # two wrong, confident


def test_bce_gradient_is_sigmoid_minus_target():
    nu = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
    eps = np.array([1.0, 0.0, 1.0])
    loss = tr.bce_loss(nu, eps)
    ad.backward(loss)
    want = 1 / (1 + np.exp(-nu.data)) - eps
    assert np.allclose(nu.grad, want, atol=1e-12)


def test_bce_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        tr.bce_loss(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        tr.bce_loss(np.zeros(3), np.zeros(3), reduction="median")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def test_adam_first_step_magnitude():
    # with bias correction the first update is lr * g / (|g| + eps)
    t = Tensor(np.zeros(3), requires_grad=True)
    t.grad = np.array([0.5, -2.0, 1e-12])
    st = tr.AdamState.for_tensors([t])
    tr.adam_step([t], st, lr=1e-3)
    assert np.allclose(t.data[:2], [-1e-3, 1e-3], rtol=1e-6)
    assert abs(t.data[2]) < 1e-3  # epsilon regularizes tiny gradients


def test_adam_two_steps_match_reference_formula():
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.01
    g1, g2 = 0.3, -0.7
    t = Tensor(np.array([1.0]), requires_grad=True)
    st = tr.AdamState.for_tensors([t])
    x, m, v = 1.0, 0.0, 0.0
    for k, g in enumerate((g1, g2), start=1):
        t.grad = np.array([g])
        tr.adam_step([t], st, lr, beta1=b1, beta2=b2, eps=eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** k)) / (math.sqrt(v / (1 - b2 ** k)) + eps)
    assert t.data[0] == pytest.approx(x, rel=1e-12)


def test_adam_missing_grad_leaves_param_unchanged():
    t = Tensor(np.array([2.0]), requires_grad=True)
    st = tr.AdamState.for_tensors([t])
    tr.adam_step([t], st, lr=0.1)
    assert t.data[0] == 2.0


def test_adam_nonfinite_grad_aborts_with_name():
    t = Tensor(np.ones(2), requires_grad=True)
    t.grad = np.array([1.0, np.inf])
    st = tr.AdamState.for_tensors([t])
    with pytest.raises(ad.NumericsError, match="some_weight"):
        tr.adam_step([t], st, 0.1, names=["some_weight"])


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def test_make_batch_shapes_and_coupling(hamming):
    cfg = tr.TrainConfig(batch_size=32, seed=5)
    m_y, s_y, eps = tr.make_batch(hamming, cfg, frame_rng(5, 0, 0))
    assert m_y.shape == (32, 7) and s_y.shape == (32, 3)
    assert eps.shape == (32, 7) and eps.dtype == np.uint8
    assert (m_y >= 0).all()
    assert set(np.unique(s_y)) <= {-1.0, 1.0}
    # coupled noise: random-codeword batches are bit-identical
    rand_cfg = dataclasses.replace(cfg, use_zero_codeword=False)
    m2, s2, e2 = tr.make_batch(hamming, rand_cfg, frame_rng(5, 0, 0))
    assert np.array_equal(m_y, m2)
    assert np.array_equal(s_y, s2)
    assert np.array_equal(eps, e2)


def test_make_batch_snr_range_respected(hamming):
    # very high SNR -> almost no errors; very low -> many
    hi = tr.TrainConfig(batch_size=64, snr_low_db=14.0, snr_high_db=15.0)
    lo = tr.TrainConfig(batch_size=64, snr_low_db=-4.0, snr_high_db=-3.0)
    _, _, eps_hi = tr.make_batch(hamming, hi, frame_rng(0, 0, 0))
    _, _, eps_lo = tr.make_batch(hamming, lo, frame_rng(0, 0, 0))
    assert eps_hi.mean() < 0.01 < eps_lo.mean()


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def test_zero_steps_returns_initialization(hamming):
    cfg = tr.TrainConfig(batch_size=8, steps=0, seed=3)
    res = tr.train(hamming, TINY, cfg)
    want = init_params(hamming, TINY, frame_rng(3, 2))
    assert all(np.array_equal(res.params[k].data, want[k].data)
               for k in want.tensors)
    assert res.history == []
    assert res.val_initial == pytest.approx(res.val_final)


def test_short_training_reduces_validation_loss(hamming, tmp_path):
    cfg = tr.TrainConfig(batch_size=32, steps=40, learning_rate=3e-4,
                         seed=7, checkpoint_every=20)
    res = tr.train(hamming, TINY, cfg, out_dir=tmp_path)
    assert res.val_final < res.val_initial
    # loss log has one row per step with the documented columns
    lines = (tmp_path / "loss_log.csv").read_text().splitlines()
    assert lines[0] == "step,lr,train_loss"
    assert len(lines) == 1 + cfg.steps
    # checkpoints on schedule plus the final one
    names = sorted(p.name for p in res.checkpoints)
    assert names == ["checkpoint_final", "checkpoint_step000020",
                     "checkpoint_step000040"]


def test_training_is_deterministic(hamming, tmp_path):
    cfg = tr.TrainConfig(batch_size=16, steps=10, seed=21)
    a = tr.train(hamming, TINY, cfg, out_dir=tmp_path / "a")
    b = tr.train(hamming, TINY, cfg, out_dir=tmp_path / "b")
    assert a.history == b.history
    blob_a = (tmp_path / "a" / "checkpoint_final.bin").read_bytes()
    blob_b = (tmp_path / "b" / "checkpoint_final.bin").read_bytes()
    assert blob_a == blob_b


def test_divergence_aborts(hamming):
    cfg = tr.TrainConfig(batch_size=8, steps=50, learning_rate=1e9, seed=0)
    with pytest.raises(ad.NumericsError):
        tr.train(hamming, TINY, cfg)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@pytest.fixture()
def trained(hamming, tmp_path):
    cfg = tr.TrainConfig(batch_size=8, steps=3, seed=13)
    res = tr.train(hamming, TINY, cfg)
    base = tmp_path / "ckpt"
    tr.save_checkpoint(res.params, {"step": 3, "seed": 13}, base)
    return res.params, base


def test_checkpoint_round_trip_bit_exact(hamming, trained):
    params, base = trained
    back = tr.load_checkpoint(base, hamming)
    assert list(back.tensors) == list(params.tensors)  # canonical order
    for k in params.tensors:
        assert np.array_equal(back[k].data, params[k].data), k
        assert back[k].data.dtype == params[k].data.dtype
    assert back.config == params.config


def test_checkpoint_manifest_is_sorted_and_complete(trained):
    _, base = trained
    manifest = json.loads((base.parent / "ckpt.manifest.json").read_text())
    names = [e["name"] for e in manifest["tensors"]]
    assert names == sorted(names)
    total = sum(e["nbytes"] for e in manifest["tensors"])
    assert manifest["total_nbytes"] == total
    blob = (base.parent / "ckpt.bin").read_bytes()
    assert len(blob) == total
    # offsets are contiguous
    off = 0
    for e in manifest["tensors"]:
        assert e["offset"] == off
        off += e["nbytes"]


def test_checkpoint_rejects_wrong_code(trained, ldpc49):
    _, base = trained
    with pytest.raises(tr.CheckpointError, match="hash"):
        tr.load_checkpoint(base, ldpc49)


def test_checkpoint_rejects_corrupt_manifest(hamming, trained, tmp_path):
    _, base = trained
    bad = tmp_path / "bad"
    shutil.copy(f"{base}.bin", f"{bad}.bin")
    (tmp_path / "bad.manifest.json").write_text("{ not json")
    with pytest.raises(tr.CheckpointError, match="corrupt manifest"):
        tr.load_checkpoint(bad, hamming)


def test_checkpoint_truncated_blob_names_tensor(hamming, trained, tmp_path):
    _, base = trained
    bad = tmp_path / "bad"
    shutil.copy(f"{base}.manifest.json", f"{bad}.manifest.json")
    blob = (base.parent / "ckpt.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(blob[: len(blob) // 3])
    with pytest.raises(tr.CheckpointError, match="truncated") as exc:
        tr.load_checkpoint(bad, hamming)
    assert "'" in str(exc.value)  # names the offending tensor


def test_checkpoint_shape_edit_detected(hamming, trained, tmp_path):
    _, base = trained
    bad = tmp_path / "bad"
    shutil.copy(f"{base}.bin", f"{bad}.bin")
    manifest = json.loads((base.parent / "ckpt.manifest.json").read_text())
    manifest["tensors"][0]["shape"] = [1, 2, 3]
    (tmp_path / "bad.manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(tr.CheckpointError, match="shape mismatch"):
        tr.load_checkpoint(bad, hamming)


def test_checkpoint_missing_files(hamming, tmp_path):
    with pytest.raises(tr.CheckpointError, match="manifest"):
        tr.load_checkpoint(tmp_path / "nope", hamming)
