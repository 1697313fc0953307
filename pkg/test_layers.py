import numpy as np
import pytest

from dpn.autodiff import Tensor, grad_check
from dpn.errors import ConfigError, DimensionError, LengthError, VocabularyError
from dpn.models.layers import (
    dot_attention,
    dropout,
    embed,
    feed_forward,
    glu,
    glu_conv_block,
    layer_norm,
    multi_head_attention,
)
from dpn.models.params import LayerNormParams, init_params
from dpn.training.gradients import verify_config


@pytest.fixture
def params():
    return init_params(verify_config(), seed=3)


def states(shape, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape), requires_grad=True)


def test_dropout_is_identity_outside_training():
    x = states((2, 3, 4))
    assert dropout(x, 0.5, training=False, rng=None) is x


def test_dropout_scales_kept_units():
    x = Tensor(np.ones((50, 40)))
    out = dropout(x, 0.25, training=True, rng=np.random.default_rng(0)).data
    kept = out[out != 0]
    np.testing.assert_allclose(kept, 1.0 / 0.75)
    assert 0.6 < kept.size / out.size < 0.9


def test_dropout_validates_arguments():
    x = states((2, 2))
    with pytest.raises(ConfigError):
        dropout(x, 1.0, training=True, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        dropout(x, 0.1, training=True, rng=None)


def test_embed_adds_word_and_position_rows(params):
    table = params.src_embed
    out = embed(np.array([[4, 5]]), table)
    expected = table.word.data[[4, 5]] + table.position.data[[0, 1]]
    np.testing.assert_allclose(out.data[0], expected)
    shifted = embed(np.array([[5]]), table, offset=1)
    np.testing.assert_allclose(shifted.data[0, 0], expected[1])


def test_embed_rejects_bad_ids_and_lengths(params):
    with pytest.raises(VocabularyError):
        embed(np.array([[11]]), params.src_embed)
    with pytest.raises(LengthError):
        embed(np.ones((1, 9), dtype=np.int64), params.src_embed)


def test_padding_row_starts_at_zero(params):
    assert np.all(params.src_embed.word.data[0] == 0.0)
    assert np.all(params.tgt_embed.word.data[0] == 0.0)


def test_glu_halves():
    x = Tensor(np.array([[2.0, -1.0, 0.0, 100.0]]))
    out = glu(x).data
    np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-12)
    with pytest.raises(DimensionError):
        glu(Tensor(np.zeros((1, 3))))


def test_glu_conv_block_is_residual_and_keeps_shape(params):
    conv = params.enc_cnn[0]
    h = states((2, 5, 8), 1)
    out = glu_conv_block(h, conv, "same")
    assert out.shape == h.shape
    conv_only = out.data - h.data
    conv.filter.data[:] = 0.0
    conv.bias.data[:] = 0.0
    np.testing.assert_allclose(glu_conv_block(h, conv, "same").data, h.data)
    assert np.abs(conv_only).max() > 0


def test_multi_head_attention_gradients(params):
    attn = params.enc_san[0].self_attn
    x = states((2, 4, 8), 2)
    mask = np.tril(np.ones((4, 4), dtype=bool))
    tensors = [x, attn.wq, attn.wk, attn.wv, attn.wo]
    report = grad_check(lambda q, *_: multi_head_attention(q, q, q, attn, mask), tensors)
    assert report.passed, report.worst()


def test_multi_head_attention_respects_causal_mask(params):
    attn = params.dec_san[0].self_attn
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 5, 8))
    mask = np.tril(np.ones((5, 5), dtype=bool))
    base = multi_head_attention(Tensor(x), Tensor(x), Tensor(x), attn, mask).data
    x2 = x.copy()
    x2[:, 3:] = rng.standard_normal((1, 2, 8))
    out = multi_head_attention(Tensor(x2), Tensor(x2), Tensor(x2), attn, mask).data
    np.testing.assert_array_equal(out[:, :3], base[:, :3])


def test_multi_head_attention_rejects_width_mismatch(params):
    attn = params.enc_san[0].self_attn
    with pytest.raises(DimensionError):
        multi_head_attention(states((1, 2, 6)), states((1, 2, 8)), states((1, 2, 8)), attn)


def test_dot_attention_is_unscaled_and_masked():
    q = Tensor(np.array([[[1.0, 0.0]]]))
    kv = Tensor(np.array([[[2.0, 0.0], [0.0, 0.0], [5.0, 5.0]]]))
    ctx, weights = dot_attention(q, kv, np.array([[[True, True, False]]]))
    e = np.exp([2.0, 0.0])
    np.testing.assert_allclose(weights.data[0, 0], [e[0] / e.sum(), e[1] / e.sum(), 0.0])
    np.testing.assert_allclose(ctx.data[0, 0], [2.0 * e[0] / e.sum(), 0.0])


def test_feed_forward_and_layer_norm(params):
    layer = params.enc_san[0]
    x = states((2, 3, 8), 5)
    assert feed_forward(x, layer.ffn).shape == (2, 3, 8)
    normed = layer_norm(x, layer.ln_attn).data
    np.testing.assert_allclose(normed.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(normed.var(axis=-1), 1.0, rtol=1e-3)


def test_glu_conv_block_passes_half_the_identity_plus_residual(params):
    conv = params.enc_cnn[0]
    d = conv.d
    conv.filter.data[:] = 0.0
    conv.bias.data[:] = 0.0
    # centre tap emits [h; 0]
    conv.filter.data[d : 2 * d, :d] = np.eye(d)
    h = states((2, 5, d), 6)
    np.testing.assert_allclose(glu_conv_block(h, conv, "same").data, 1.5 * h.data, atol=1e-12)


@pytest.mark.parametrize("mode", ["same", "causal"])
def test_glu_conv_block_matches_windowed_loop(params, mode):
    conv = params.enc_cnn[1]
    d, r = conv.d, conv.kernel
    h = states((2, 6, d), 7)
    out = glu_conv_block(h, conv, mode).data

    left = (r - 1) // 2 if mode == "same" else r - 1
    padded = np.pad(h.data, ((0, 0), (left, r - 1 - left), (0, 0)))
    expected = np.empty_like(h.data)
    for b in range(2):
        for t in range(6):
            y = padded[b, t : t + r].reshape(-1) @ conv.filter.data + conv.bias.data
            expected[b, t] = y[:d] / (1.0 + np.exp(-y[d:])) + h.data[b, t]
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_multi_head_attention_matches_per_head_loop(params):
    attn = params.enc_san[0].self_attn
    rng = np.random.default_rng(9)
    q, k, v = (rng.standard_normal((1, 4, 8)) for _ in range(3))
    mask = np.tril(np.ones((4, 4), dtype=bool))
    out = multi_head_attention(Tensor(q), Tensor(k), Tensor(v), attn, mask).data

    hd = attn.head_dim
    heads = []
    for i in range(attn.heads):
        cols = slice(i * hd, (i + 1) * hd)
        qh = (q[0] @ attn.wq.data)[:, cols] / np.sqrt(hd)
        kh = (k[0] @ attn.wk.data)[:, cols]
        vh = (v[0] @ attn.wv.data)[:, cols]
        rows = []
        for t in range(4):
            s = qh[t] @ kh[: t + 1].T
            w = np.exp(s - s.max())
            rows.append((w / w.sum()) @ vh[: t + 1])
        heads.append(np.stack(rows))
    expected = np.concatenate(heads, axis=-1) @ attn.wo.data
    np.testing.assert_allclose(out[0], expected, atol=1e-10)


def test_layer_norm_of_a_symmetric_pair():
    ln = LayerNormParams(gain=Tensor(np.ones(2)), bias=Tensor(np.zeros(2)), eps=1e-12)
    out = layer_norm(Tensor(np.array([[1.0, -1.0]])), ln).data
    np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-9)
