import math
from pathlib import Path

import numpy as np
import pytest

from tabkanet import autograd as ag
from tabkanet.autograd import Tensor, grad_check
from tabkanet.data import Encoded, load_schema
from tabkanet.errors import ConfigError, LabelError, UnsupportedArchitectureError
from tabkanet.model import (ARCHITECTURES, ModelSpec, build, head_widths, load_checkpoint, loss, predict,
                            save_checkpoint)
from tabkanet.transformer import EncoderConfig

ROOT = Path(__file__).resolve().parents[1]
TINY = EncoderConfig(dim=8, heads=2, layers=1, ffn_hidden=16)


def spec_for(arch="tabkanet", task="binary", m=3, n=2, n_classes=2, **kw):
    return ModelSpec(arch=arch, task=task, cardinalities=[4 + i for i in range(m)], n_numerical=n,
                     n_classes=n_classes, schema_hash="abc", **kw)


def batch(spec, B=6, seed=0):
    rng = np.random.default_rng(seed)
    cat = np.stack([rng.integers(0, c, B) for c in spec.cardinalities], axis=1) if spec.m \
        else np.zeros((B, 0), np.int64)
    y = rng.integers(0, max(spec.out_dim, 2), B) if spec.task != "regression" else rng.normal(size=B)
    return Encoded(cat, rng.normal(size=(B, spec.n_numerical)), y)


def test_online_shoppers_census():
    schema = load_schema(ROOT / "data" / "online_shoppers" / "schema.json")
    assert (len(schema.categorical), len(schema.numerical)) == (11, 6)
    spec = ModelSpec("tabkanet", "binary", [5] * 11, 6, cat_names=schema.categorical,
                     num_names=schema.numerical)
    model = build(spec, 0)
    assert model.head_in == 17 * 64 == 1088
    assert model.num_embed.kan.widths == [6, 64, 384]
    assert head_widths(1088) == [544, 136]
    assert len(model.encoder.layers) == 3


def test_ln_variant_shares_parameter_shapes():
    a = build(spec_for("tabkanet"), 0)
    b = build(spec_for("tabkanet-ln"), 0)
    assert [(n, p.shape) for n, p in a.named_parameters()] == [(n, p.shape) for n, p in b.named_parameters()]


def test_tabtransformer_needs_categorical_columns():
    with pytest.raises(UnsupportedArchitectureError):
        build(spec_for("tabtransformer", m=0), 0)


def test_unknown_architecture():
    with pytest.raises(ConfigError):
        spec_for("resnet")


def test_flat_baselines_average_embeddings():
    model = build(spec_for("mlp", m=5, n=3), 0)
    assert model.in_dim == 8 + 3
    first = model.body.net.layers[0].weight.shape
    assert sorted(first) == [11, 512]


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_same_seed_identical_parameters(arch):
    a, b = build(spec_for(arch, encoder=TINY), 7), build(spec_for(arch, encoder=TINY), 7)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    c = build(spec_for(arch, encoder=TINY), 8)
    assert any(not np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), c.parameters()))


@pytest.mark.parametrize("arch", ARCHITECTURES)
@pytest.mark.parametrize("task,C", [("binary", 2), ("multiclass", 7), ("regression", 0)])
def test_output_shapes(arch, task, C):
    spec = spec_for(arch, task=task, n_classes=max(C, 2), encoder=TINY)
    out = predict(build(spec, 0), batch(spec, B=5))
    assert out.shape == (5, C if task == "multiclass" else 1)


def test_numerical_only_tabkanet():
    spec = spec_for(m=0, n=4, encoder=TINY)
    assert predict(build(spec, 0), batch(spec)).shape == (6, 1)


def test_loss_values():
    np.testing.assert_allclose(loss("binary", Tensor(np.zeros((4, 1))), [0, 1, 0, 1]).data, math.log(2))
    np.testing.assert_allclose(loss("multiclass", Tensor(np.zeros((3, 7))), [0, 3, 6]).data, math.log(7))
    np.testing.assert_allclose(loss("regression", Tensor(np.array([[1.0], [3.0]])), [0.0, 0.0]).data, 5.0)


def test_loss_label_errors():
    with pytest.raises(LabelError):
        loss("binary", Tensor(np.zeros((2, 1))), [0, 2])
    with pytest.raises(LabelError):
        loss("multiclass", Tensor(np.zeros((2, 3))), [0, 3])


@pytest.mark.parametrize("seed", range(5))
def test_small_sgd_step_decreases_loss(seed):
    spec = spec_for(encoder=TINY)
    model = build(spec, seed)
    b = batch(spec, B=16, seed=seed)
    model.eval()  # fixed normalization statistics so both evaluations see the same function
    before = loss("binary", model(b.cat, b.num), b.y)
    before.backward()
    for p in model.parameters():
        p.data -= 1e-4 * p.grad
    with ag.no_grad():
        after = loss("binary", model(b.cat, b.num), b.y)
    assert float(after.data) < float(before.data)


def test_end_to_end_gradient_wrt_numeric_input():
    spec = spec_for(encoder=TINY)
    model = build(spec, 3)
    b = batch(spec, B=4, seed=3)
    x = Tensor(b.num, requires_grad=True)

    def objective(t):
        cat = model.cat_embed(b.cat)
        nums = model.num_embed(t)
        h = model.encoder(ag.concat([cat, nums], axis=1))
        out = model.head(ag.reshape(h, (h.shape[0], model.head_in)))
        return loss("binary", out, b.y)

    model.eval()
    assert grad_check(objective, x) <= 1e-4


def test_eval_mode_is_deterministic():
    spec = spec_for(encoder=TINY)
    model = build(spec, 0)
    b = batch(spec)
    np.testing.assert_array_equal(predict(model, b), predict(model, b))
    # Chunking changes BLAS blocking, so rows agree to rounding rather than bitwise.
    np.testing.assert_allclose(predict(model, b, batch_size=2), predict(model, b, batch_size=6),
                               rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_checkpoint_round_trip(tmp_path, arch):
    spec = spec_for(arch, encoder=TINY)
    model = build(spec, 5)
    b = batch(spec)
    model.train()
    model(b.cat, b.num)  # move BN running statistics away from their initial values
    model.set_standardizer(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, extra={"note": "x"})
    clone, pre, header = load_checkpoint(path, "abc")
    assert pre is None and header["extra"] == {"note": "x"}
    for (k, v), (k2, v2) in zip(model.state_dict().items(), clone.state_dict().items()):
        assert k == k2
        np.testing.assert_array_equal(v, v2)
    np.testing.assert_array_equal(predict(model, b), predict(clone, b))


def test_checkpoint_schema_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build(spec_for(encoder=TINY), 0))
    with pytest.raises(ConfigError, match="schema hash"):
        load_checkpoint(path, "other")
    (tmp_path / "junk").write_bytes(b"nonsense")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "junk")


def test_spec_round_trip():
    spec = spec_for(encoder=TINY, kan_hidden="dynamic")
    assert ModelSpec.from_dict(spec.to_dict()) == spec
