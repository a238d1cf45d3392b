import numpy as np
import pytest

from tabkanet import autograd as ag
from tabkanet.autograd import Tensor, grad_check
from tabkanet.embedding import (MISSING, CategoricalEmbedder, CategoricalEncoder, NumericalEmbedder,
                                assemble_tokens, embed_categorical, embed_numerical, fit_encoder,
                                hidden_width)
from tabkanet.errors import BatchTooSmallError, SchemaError, ShapeError


def test_encoder_vocab_and_unknown():
    enc = fit_encoder(np.array([["a"], ["b"], ["a"]], dtype=object), ["c"])
    assert enc.cardinalities == [3]  # two values + unknown
    ids = enc.transform(np.array([["b"], ["zzz"], ["a"]], dtype=object))
    np.testing.assert_array_equal(ids.ravel(), [1, enc.unknown_id(0), 0])


def test_encoder_missing_is_its_own_category():
    enc = fit_encoder(np.array([["a"], [None], [""]], dtype=object), ["c"])
    assert MISSING in enc.vocabs[0]
    ids = enc.transform(np.array([[None], ["a"]], dtype=object)).ravel()
    assert ids[0] == enc.vocabs[0][MISSING]


def test_encoder_from_mapping_rejects_absent_column():
    with pytest.raises(SchemaError, match="color"):
        fit_encoder({"size": ["s", "m"]}, ["size", "color"])


def test_encoder_is_pure_and_round_trips():
    rows = np.array([["x", "1"], ["y", "2"], ["x", "3"]], dtype=object)
    enc = fit_encoder(rows, ["a", "b"])
    first = enc.transform(rows)
    np.testing.assert_array_equal(first, enc.transform(rows))
    np.testing.assert_array_equal(enc.decode(first), rows)
    clone = CategoricalEncoder.from_dict(enc.to_dict())
    np.testing.assert_array_equal(clone.transform(rows), first)


def test_encoder_transform_before_fit():
    with pytest.raises(RuntimeError):
        CategoricalEncoder().transform(np.array([["a"]], dtype=object))


def test_embed_categorical_shapes_and_determinism():
    emb = CategoricalEmbedder([4, 5, 6], 64, np.random.default_rng(0))
    ids = np.array([[0, 1, 2], [3, 4, 5], [0, 1, 2]])
    out = emb(ids).data
    assert out.shape == (3, 3, 64)
    np.testing.assert_array_equal(out[0], out[2])


def test_embed_categorical_uses_one_table_per_column():
    emb = CategoricalEmbedder([3, 3], 2, np.random.default_rng(1))
    out = emb(np.array([[1, 1]])).data
    np.testing.assert_array_equal(out[0, 0], emb.tables[0].weight.data[1])
    np.testing.assert_array_equal(out[0, 1], emb.tables[1].weight.data[1])


def test_embed_categorical_gradient_only_on_looked_up_rows():
    emb = CategoricalEmbedder([5, 4], 3, np.random.default_rng(2))
    ids = np.array([[1, 0], [3, 0]])
    w = Tensor(np.random.default_rng(3).uniform(0.5, 1.5, size=(2, 2, 3)))
    loss = lambda _: ag.sum_(ag.mul(embed_categorical(emb.tables, ids), w))  # noqa: E731
    loss(None).backward()
    touched = np.flatnonzero(np.abs(emb.tables[0].weight.grad).sum(axis=1))
    np.testing.assert_array_equal(touched, [1, 3])
    assert grad_check(loss, emb.tables[0].weight) <= 1e-4


def test_embed_categorical_out_of_range_names_column():
    emb = CategoricalEmbedder([3], 2, np.random.default_rng(4), ["purpose"])
    with pytest.raises(IndexError, match="purpose"):
        emb(np.array([[3]]))


def test_hidden_widths():
    assert hidden_width(6, "locked") == 64
    assert hidden_width(6, "dynamic") == 13
    assert NumericalEmbedder(6, 8, np.random.default_rng(0), "dynamic").kan.widths == [6, 13, 48]


@pytest.mark.parametrize("n", [1, 6])
def test_numerical_embedder_output_tokens(n):
    emb = NumericalEmbedder(n, 64, np.random.default_rng(0))
    out = embed_numerical(emb, np.random.default_rng(1).normal(size=(10, n)), "train")
    assert out.shape == (10, n, 64)


def test_numerical_embedder_train_needs_two_rows():
    emb = NumericalEmbedder(3, 8, np.random.default_rng(0))
    with pytest.raises(BatchTooSmallError):
        embed_numerical(emb, np.zeros((1, 3)), "train")
    assert embed_numerical(emb, np.zeros((1, 3)), "eval").shape == (1, 3, 8)


def test_eval_output_independent_of_batch_companions():
    rng = np.random.default_rng(2)
    emb = NumericalEmbedder(4, 8, rng)
    embed_numerical(emb, rng.normal(size=(32, 4)), "train")  # move running stats
    row = rng.normal(size=(1, 4))
    a = embed_numerical(emb, np.vstack([row, rng.normal(size=(5, 4))]), "eval").data[0]
    b = embed_numerical(emb, np.vstack([rng.normal(size=(9, 4)) * 10, row]), "eval").data[-1]
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_layer_norm_variant_is_batch_independent_in_train_mode():
    rng = np.random.default_rng(3)
    emb = NumericalEmbedder(4, 8, rng, norm="layer")
    row = rng.normal(size=(1, 4))
    a = embed_numerical(emb, np.vstack([row, rng.normal(size=(5, 4))]), "train").data[0]
    b = embed_numerical(emb, np.vstack([rng.normal(size=(3, 4)) + 5, row]), "train").data[-1]
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_batch_norm_variant_depends_on_batch_in_train_mode():
    rng = np.random.default_rng(4)
    emb = NumericalEmbedder(4, 8, rng)
    row = rng.normal(size=(1, 4))
    a = embed_numerical(emb, np.vstack([row, rng.normal(size=(5, 4))]), "train").data[0]
    b = embed_numerical(emb, np.vstack([rng.normal(size=(3, 4)) + 5, row]), "train").data[-1]
    assert not np.allclose(a, b)


def test_train_mode_row_equivariance():
    rng = np.random.default_rng(5)
    emb = NumericalEmbedder(3, 4, rng)
    x = rng.normal(size=(8, 3))
    perm = rng.permutation(8)
    a = embed_numerical(emb, x, "train").data
    b = embed_numerical(emb, x[perm], "train").data
    np.testing.assert_allclose(b, a[perm], rtol=1e-12, atol=1e-13)


def test_numerical_embedder_gradient():
    rng = np.random.default_rng(6)
    emb = NumericalEmbedder(3, 4, rng, hidden=5)
    emb.train(True)
    x = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    w = Tensor(rng.uniform(0.5, 1.5, size=(6, 3, 4)))
    assert grad_check(lambda t: ag.sum_(ag.mul(emb(t), w)), x) <= 1e-4


def test_assemble_tokens_orders_categorical_first():
    rng = np.random.default_rng(7)
    cat, num = Tensor(rng.normal(size=(2, 11, 64))), Tensor(rng.normal(size=(2, 6, 64)))
    tm = assemble_tokens(cat, num, [f"c{i}" for i in range(11)], [f"n{i}" for i in range(6)])
    assert tm.shape == (2, 17, 64)
    assert tm.names[:2] == ["c0", "c1"] and tm.names[-1] == "n5"
    np.testing.assert_array_equal(tm.values.data[:, :11], cat.data)
    np.testing.assert_array_equal(tm.values.data[:, 11:], num.data)


def test_assemble_tokens_single_block():
    x = Tensor(np.ones((2, 3, 4)))
    assert assemble_tokens(None, x).values is x
    assert assemble_tokens(x, None).values is x
    assert assemble_tokens(Tensor(np.zeros((2, 0, 4))), x).values is x


def test_assemble_tokens_dim_mismatch():
    with pytest.raises(ShapeError):
        assemble_tokens(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((2, 2, 5))))
