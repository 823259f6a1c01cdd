import numpy as np
import pytest

from fdmnet.lowpass import reconstruct_lowpass
from fdmnet.maformer import (
    MaFormer, ModelConfig, MsfaConv, SwinBlock, WindowAttention, fdmnet_forward,
    maformer_forward, msfa_pool, position_classes, relative_position_encoding, window_partition,
    window_reverse,
)
from fdmnet.msfa import MsfaPattern, SizingError, mosaic
from fdmnet.nn import ShapeError, conv2d_forward


@pytest.mark.parametrize("shift", [0, 2])
def test_window_round_trip_is_bit_exact(rng, shift):
    x = rng.standard_normal((2, 8, 12, 3))
    win = window_partition(x, 4, shift)
    assert win.shape == (2 * 2 * 3, 16, 3)
    assert np.array_equal(window_reverse(win, 4, 8, 12, shift), x)


def test_window_partition_contents(rng):
    x = rng.standard_normal((1, 8, 8, 1))
    win = window_partition(x, 4, 0)
    assert np.array_equal(win[1, :, 0], x[0, 0:4, 4:8, 0].ravel())
    shifted = window_partition(x, 4, 2)
    assert shifted[0, 0, 0] == x[0, 2, 2, 0]


def _attention_brute(attn, xw):
    heads = attn.heads
    n, L, c = xw.shape
    d = c // heads
    q, k, v = xw @ attn.wq.value, xw @ attn.wk.value, xw @ attn.wv.value
    A = np.zeros((n, heads, L, L))
    out = np.zeros((n, L, c))
    for w in range(n):
        for h in range(heads):
            sl = slice(h * d, (h + 1) * d)
            for i in range(L):
                logits = np.array([np.dot(q[w, i, sl], k[w, j, sl]) / np.sqrt(d)
                                   + attn.bias_table.value[i, j] for j in range(L)])
                e = np.exp(logits - logits.max())
                A[w, h, i] = e / e.sum()
                out[w, i, sl] = sum(A[w, h, i, j] * v[w, j, sl] for j in range(L))
    return A, attn.proj.forward(out)


def test_attention_matches_pairwise_oracle(rng):
    attn = WindowAttention(8, 4, 2, rng, std=None)
    xw = rng.standard_normal((3, 16, 8))
    A, y = _attention_brute(attn, xw)
    got = attn.attention_weights(xw)
    np.testing.assert_allclose(got.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(got, A, rtol=0, atol=1e-13)
    np.testing.assert_allclose(attn.forward(xw), y, rtol=0, atol=1e-12)


def _pool_literal(x, p):
    b, c, h, w = x.shape
    out = np.zeros((b, c, h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            acc, n = 0.0, 0
            for s in range(h):
                for t in range(w):
                    if i + p * s < h and j + p * t < w:
                        acc = acc + x[:, :, i + p * s, j + p * t]
                        n += 1
            out[:, :, i, j] = acc / n
    return out


@pytest.mark.parametrize("p", [2, 4])
def test_msfa_pool_matches_literal_loop(rng, p):
    # dyadic-rational inputs make every partial sum exact, so any order agrees bit for bit
    x = rng.integers(-64, 64, (1, 2, 4 * p, 2 * p)) / 8.0
    assert np.array_equal(msfa_pool(x, p), _pool_literal(x, p))
    y = rng.standard_normal((1, 2, 4 * p, 2 * p))
    np.testing.assert_allclose(msfa_pool(y, p), _pool_literal(y, p), rtol=0, atol=1e-14)


def test_msfa_pool_rejects_bad_extents():
    with pytest.raises(SizingError):
        msfa_pool(np.zeros((1, 1, 12, 16)), 4)


def test_encoding_and_classes():
    r = relative_position_encoding(4)
    assert r.shape == (16, 2)
    np.testing.assert_array_equal(r[6], [0.25, 0.5])
    cls = position_classes(8, 8, 4).reshape(8, 8)
    assert cls[5, 6] == 1 * 4 + 2


def test_msfa_conv_shares_weights_for_duplicate_patches(rng):
    conv = MsfaConv(1, 2, 4, rng, k=3, std=None)
    conv.mwp.b1.value[...] = rng.uniform(0.1, 0.5, conv.mwp.b1.shape)
    x = rng.standard_normal((1, 1, 16, 16))
    # copy the 3x3 neighbourhood of (5, 6) to (9, 14): same class (1, 2), same patch
    x[0, 0, 8:11, 13:16] = x[0, 0, 4:7, 5:8]
    y = conv.forward(x)
    assert y[0, 0, 5, 6] == y[0, 0, 9, 14]
    assert y[0, 1, 5, 6] == y[0, 1, 9, 14]


def test_msfa_conv_differs_across_classes(rng):
    conv = MsfaConv(1, 1, 2, rng, k=3, std=None)
    conv.mwp.b1.value[...] = 0.3
    x = np.zeros((1, 1, 8, 8))
    x[0, 0, 2, 2] = x[0, 0, 2, 5] = 1.0  # impulses at classes (0, 0) and (0, 1)
    y = conv.forward(x) - conv.bias.value[0]
    assert not np.allclose(y[0, 0, 1:4, 1:4], y[0, 0, 1:4, 4:7])


def test_unit_modulation_equals_plain_conv(rng):
    conv = MsfaConv(3, 4, 4, rng, k=8, std=None)
    conv.modulation_override = np.ones(64)
    x = rng.standard_normal((2, 3, 16, 16))
    y = conv.forward(x) - conv.bias.value[:, None, None]
    xp = np.pad(x, ((0, 0), (0, 0), (3, 4), (3, 4)))
    ref, _ = conv2d_forward(xp, conv.weight.value)
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_initial_modulation_is_all_ones(rng):
    conv = MsfaConv(1, 1, 4, rng, k=3)
    np.testing.assert_allclose(conv.modulation(), 1.0, atol=0.2)
    np.testing.assert_array_equal(conv.mwp.b2.value, 1.0)


def test_msfa_conv_is_equivariant_to_period_shifts(rng):
    conv = MsfaConv(2, 2, 4, rng, k=5, padding_mode="circular", std=None)
    conv.mwp.b1.value[...] = rng.uniform(-0.3, 0.3, conv.mwp.b1.shape)
    x = rng.standard_normal((1, 2, 16, 16))
    y = conv.forward(x)
    ys = conv.forward(np.roll(x, (4, 8), axis=(2, 3)))
    np.testing.assert_allclose(ys, np.roll(y, (4, 8), axis=(2, 3)), atol=1e-12)
    # a shift off the lattice changes the kernel assignment
    y1 = conv.forward(np.roll(x, 1, axis=3))
    assert not np.allclose(y1, np.roll(y, 1, axis=3))


def test_swin_block_shape_and_shift_matters(rng):
    cfg = ModelConfig.micro(bands=4, window=4, heads=2)
    a = SwinBlock(4, cfg, np.random.default_rng(0), shift=0)
    b = SwinBlock(4, cfg, np.random.default_rng(0), shift=2)
    x = rng.standard_normal((1, 4, 8, 8))
    ya, yb = a.forward(x), b.forward(x)
    assert ya.shape == x.shape
    assert not np.allclose(ya, yb)


def test_micro_network_shapes_and_determinism():
    cfg = ModelConfig.micro()
    y = np.random.default_rng(0).uniform(size=(2, 1, 64, 64))
    a = MaFormer(cfg).forward(y)
    b = MaFormer(cfg).forward(y)
    assert a.shape == (2, 16, 64, 64)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, MaFormer(ModelConfig.micro(seed=1)).forward(y))


def test_network_rejects_bad_extents():
    net = MaFormer(ModelConfig.micro())
    with pytest.raises(SizingError, match="stage"):
        net.forward(np.zeros((1, 1, 24, 24)))


def test_load_arrays_reports_shape_diff():
    net = MaFormer(ModelConfig.micro())
    arrays = net.param_dict()
    arrays = {k: v.value.copy() for k, v in arrays.items()}
    other = MaFormer(ModelConfig.micro(seed=5))
    other.load_arrays(arrays)
    for k, p in other.param_dict().items():
        assert np.array_equal(p.value, arrays[k])
    arrays["head.bias"] = np.zeros(3)
    with pytest.raises(ShapeError, match="head.bias"):
        other.load_arrays(arrays)


def test_fdm_forward_is_lowpass_plus_residual(rng):
    pat = MsfaPattern.default()
    mos = mosaic(rng.uniform(0.2, 0.8, (64, 64, 16)), pat)
    net = MaFormer(ModelConfig.micro())
    out = fdmnet_forward(mos, net, clamp=False)
    np.testing.assert_allclose(out, reconstruct_lowpass(mos) + maformer_forward(mos, net), atol=0)
    # the small output layer makes the untrained pipeline start near the low-pass estimate
    assert np.abs(out - reconstruct_lowpass(mos)).mean() < 0.02


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(depths=(1, 1, 1))
    with pytest.raises(ValueError):
        ModelConfig(width=6, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(head_std=0.0)
    assert ModelConfig().base_width == 32
    assert ModelConfig.micro().stage_width(3) == 64
