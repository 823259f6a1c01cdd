import numpy as np
import pytest
from scipy.signal import correlate2d

from fdmnet.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from fdmnet.gradsuite import LAYER_TOL, run_suite
from fdmnet.nn import (
    Conv2d, LayerNorm, ShapeError, Sequential, conv2d_backward, conv2d_forward,
    conv_transpose2d_forward, gelu, gelu_grad, patches, softmax_rows,
)
from fdmnet.optim import AdamState, NonFiniteGradient, adam_step, halving_lr

LAYER_REPORTS = dict(run_suite(seed=7, include_network=False))


@pytest.mark.parametrize("name", sorted(LAYER_REPORTS))
def test_layer_gradients(name):
    report = LAYER_REPORTS[name]
    assert report.tol == LAYER_TOL
    assert report.passed, f"{name}: {report}"


def test_conv2d_matches_scipy_correlation(rng):
    x = rng.standard_normal((1, 2, 7, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    y, _ = conv2d_forward(x, w, padding=1)
    for o in range(3):
        ref = sum(correlate2d(x[0, c], w[o, c], mode="same") for c in range(2))
        np.testing.assert_allclose(y[0, o], ref, atol=1e-12)


@pytest.mark.parametrize("mode", ["zeros", "circular"])
def test_conv2d_backward_is_adjoint(rng, mode):
    x = rng.standard_normal((2, 3, 6, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    y, cols = conv2d_forward(x, w, padding=1, padding_mode=mode)
    g = rng.standard_normal(y.shape)
    dx, _ = conv2d_backward(g, x.shape, w, cols, padding=1, padding_mode=mode)
    assert abs(np.sum(y * g) - np.sum(x * dx)) < 1e-10


def test_transpose_conv_is_adjoint_of_strided_conv(rng):
    w = rng.standard_normal((3, 2, 2, 2))  # (Cin of transpose, Cout of transpose, k, k)
    x = rng.standard_normal((1, 3, 4, 4))
    z = rng.standard_normal((1, 2, 8, 8))
    up = conv_transpose2d_forward(x, w)
    down, _ = conv2d_forward(z, w, stride=2)
    assert abs(np.sum(up * z) - np.sum(x * down)) < 1e-10


def test_patches_shape_and_circular_wrap():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    cols, hw = patches(x, 3, padding=1, padding_mode="circular")
    assert cols.shape == (1, 1, 9, 16) and hw == (4, 4)
    # top-left tap of output (0, 0) wraps to x[3, 3]
    assert cols[0, 0, 0, 0] == 15.0


def test_softmax_rows_sum_to_one(rng):
    a = softmax_rows(rng.standard_normal((3, 5, 7)) * 30)
    np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(a >= 0)


def test_layer_norm_statistics(rng):
    y = LayerNorm(8).forward(rng.normal(3.0, 5.0, (4, 8)))
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_gelu_reference_values():
    assert gelu(np.array(0.0)) == 0.0
    np.testing.assert_allclose(gelu(np.array(1.0)), 0.8413447460685429, rtol=1e-12)
    np.testing.assert_allclose(gelu_grad(np.array(0.0)), 0.5, rtol=1e-12)


def test_conv_rejects_wrong_channels(rng):
    with pytest.raises(ShapeError):
        Conv2d(2, 3, 3, rng).forward(np.zeros((1, 4, 5, 5)))


def test_sequential_chains(rng):
    seq = Sequential(Conv2d(1, 2, 3, rng, padding=1), Conv2d(2, 1, 1, rng))
    assert seq.forward(np.zeros((1, 1, 4, 4))).shape == (1, 1, 4, 4)
    assert len(dict(seq.named_params())) == 4


def test_adam_matches_hand_computation():
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, 0.1])}
    st = AdamState(lr=0.1)
    adam_step(p, g, st)
    # first bias-corrected step moves by lr * g / (|g| + eps)
    np.testing.assert_allclose(p["w"], [1.0 - 0.1, -2.0 - 0.1], rtol=1e-7)
    w1 = p["w"].copy()
    adam_step(p, {"w": np.array([0.5, -0.1])}, st)
    m = 0.9 * 0.05 + 0.1 * 0.5, 0.9 * 0.01 - 0.1 * 0.1
    v = 0.999 * 0.00025 + 0.001 * 0.25, 0.999 * 1e-5 + 0.001 * 0.01
    step = [0.1 * (mi / (1 - 0.81)) / (np.sqrt(vi / (1 - 0.999 ** 2)) + 1e-8) for mi, vi in zip(m, v)]
    np.testing.assert_allclose(p["w"], w1 - step, rtol=1e-12)


def test_adam_rejects_non_finite_without_side_effects():
    p = {"a": np.ones(2), "b": np.ones(2)}
    st = AdamState()
    with pytest.raises(NonFiniteGradient):
        adam_step(p, {"a": np.ones(2), "b": np.array([1.0, np.inf])}, st)
    assert st.step == 0 and not st.m
    assert np.array_equal(p["a"], np.ones(2))


@pytest.mark.parametrize("epoch,expect", [(0, 1e-4), (999, 1e-4), (1000, 5e-5), (2500, 2.5e-5)])
def test_halving_schedule(epoch, expect):
    assert halving_lr(1e-4, epoch) == expect


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"a.weight": rng.standard_normal((2, 3, 4)), "b": np.array(3.5), "c": np.zeros(0)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, arrays, "model.bands=16\n")
    header, back = load_checkpoint(path)
    assert header == "model.bands=16\n"
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert np.array_equal(back[k], arrays[k])
    save_checkpoint(tmp_path / "again.ckpt", back, header)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTMAGIC")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    save_checkpoint(path, {"w": np.ones(4)})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
