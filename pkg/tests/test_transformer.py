import numpy as np
import pytest

from tabkanet import autograd as ag
from tabkanet.autograd import Tensor, grad_check
from tabkanet.embedding import TokenMatrix
from tabkanet.errors import ShapeError
from tabkanet.transformer import Encoder, EncoderConfig, attention, encoder_forward

SMALL = EncoderConfig(dim=8, heads=2, layers=2, ffn_hidden=16, dropout=0.1)


def test_config_defaults_and_divisibility():
    cfg = EncoderConfig()
    assert (cfg.dim, cfg.heads, cfg.layers, cfg.ffn_hidden, cfg.head_dim) == (64, 8, 3, 256, 8)
    with pytest.raises(ValueError):
        EncoderConfig(dim=10, heads=3)


def test_attention_single_key_returns_values():
    rng = np.random.default_rng(0)
    q, k, v = (Tensor(rng.normal(size=(2, 3, 1, 4))) for _ in range(3))
    np.testing.assert_allclose(attention(q, k, v).data, v.data, rtol=1e-15)


def test_attention_equal_scores_average_values():
    rng = np.random.default_rng(1)
    k = Tensor(rng.normal(size=(1, 1, 5, 4)))
    q = Tensor(np.zeros((1, 1, 3, 4)))  # orthogonal to every key
    v = Tensor(rng.normal(size=(1, 1, 5, 4)))
    out = attention(q, k, v).data
    np.testing.assert_allclose(out[0, 0], np.repeat(v.data[0, 0].mean(axis=0, keepdims=True), 3, 0), atol=1e-15)


def test_attention_weights_sum_to_one():
    rng = np.random.default_rng(2)
    q, k, v = (Tensor(rng.normal(size=(3, 2, 7, 4)) * 3) for _ in range(3))
    _, w = attention(q, k, v, return_weights=True)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("which", [0, 1, 2])
def test_attention_gradient(which):
    rng = np.random.default_rng(3 + which)
    qkv = [Tensor(rng.normal(size=(2, 1, 3, 4)), requires_grad=True) for _ in range(3)]
    w = Tensor(rng.uniform(0.5, 1.5, size=(2, 1, 3, 4)))

    def f(t):
        args = list(qkv)
        args[which] = t
        return ag.sum_(ag.mul(attention(*args), w))

    assert grad_check(f, qkv[which]) <= 1e-4


@pytest.mark.parametrize("T", [1, 17, 61])
def test_output_shape(T):
    enc = Encoder(SMALL, np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).normal(size=(2, T, 8)))
    assert encoder_forward(enc, x, "eval").shape == (2, T, 8)


def test_accepts_token_matrix():
    enc = Encoder(SMALL, np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).normal(size=(2, 3, 8)))
    tm = TokenMatrix(x, ["a", "b", "c"])
    np.testing.assert_array_equal(encoder_forward(enc, tm).data, encoder_forward(enc, x).data)


def test_dim_mismatch():
    with pytest.raises(ShapeError):
        Encoder(SMALL, np.random.default_rng(0))(Tensor(np.zeros((1, 2, 4))))


def test_zero_output_projections_give_identity_on_normalized_tokens():
    enc = Encoder(SMALL, np.random.default_rng(0))
    for layer in enc.layers:
        for lin in (layer.attn.out, layer.ff2):
            lin.weight.data[:] = 0.0
            lin.bias.data[:] = 0.0
    x = np.random.default_rng(1).normal(size=(3, 5, 8))
    # Post-norm layout: the fixed point of the residual path is a row-normalized token.
    x = (x - x.mean(-1, keepdims=True)) / x.std(-1, keepdims=True)
    out = encoder_forward(enc, Tensor(x), "eval").data
    np.testing.assert_allclose(out, x, atol=1e-4)


def test_token_permutation_equivariance():
    enc = Encoder(SMALL, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 9, 8))
    perm = rng.permutation(9)
    a = encoder_forward(enc, Tensor(x), "eval").data
    b = encoder_forward(enc, Tensor(x[:, perm]), "eval").data
    np.testing.assert_allclose(b, a[:, perm], atol=1e-10)


def test_eval_deterministic_train_stochastic():
    enc = Encoder(SMALL, np.random.default_rng(4))
    x = Tensor(np.random.default_rng(5).normal(size=(2, 4, 8)))
    np.testing.assert_array_equal(encoder_forward(enc, x, "eval").data, encoder_forward(enc, x, "eval").data)
    assert not np.array_equal(encoder_forward(enc, x, "train").data, encoder_forward(enc, x, "train").data)


@pytest.mark.parametrize("seed", range(20))
def test_full_encoder_gradient(seed):
    rng = np.random.default_rng(seed)
    enc = Encoder(EncoderConfig(dim=8, heads=2, layers=2, ffn_hidden=12), rng)
    enc.eval()
    x = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
    w = Tensor(rng.uniform(0.5, 1.5, size=(2, 3, 8)) * rng.choice([-1, 1], size=(2, 3, 8)))
    loss = lambda _: ag.sum_(ag.mul(enc(x), w))  # noqa: E731
    assert grad_check(loss, x) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_encoder_parameter_gradients(seed):
    # Deep parameter coordinates can be ~1e-5, where step 1e-6 hits the roundoff floor
    # of central differences; step 1e-5 keeps the oracle above it.
    rng = np.random.default_rng(seed)
    enc = Encoder(EncoderConfig(dim=8, heads=2, layers=2, ffn_hidden=12), rng)
    enc.eval()
    x = Tensor(rng.normal(size=(2, 3, 8)))
    w = Tensor(rng.uniform(0.5, 1.5, size=(2, 3, 8)) * rng.choice([-1, 1], size=(2, 3, 8)))
    loss = lambda _: ag.sum_(ag.mul(enc(x), w))  # noqa: E731
    for p in (enc.layers[0].attn.query.weight, enc.layers[0].norm1.weight, enc.layers[1].ff1.weight):
        assert grad_check(loss, p, step=1e-5) <= 1e-4
