import numpy as np
import pytest

from serattn.errors import ConfigError, DecodeError, ShapeError, StateError
from serattn.learn import softmax_cross_entropy
from serattn.nn import (
    AttentionCNN,
    BatchNorm1d,
    ChannelAttention,
    Conv1d,
    Dense,
    MaxPool1d,
    ModelConfig,
    ReLU,
    SpatialAttention,
)
from serattn.nn.model import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint

from oracles import (
    channel_attention_loops,
    check_layer,
    conv_same_loops,
    maxpool_loops,
    numeric_grad,
    rel_err,
    spatial_attention_loops,
)

RNG = np.random.default_rng(1234)
TOL = 1e-4


def tiny_model(seed=0):
    return AttentionCNN(ModelConfig(n_classes=3, length=8, channels=4, reduction=2, seed=seed))


def test_conv_matches_loops():
    conv = Conv1d(3, 5, 7, np.random.default_rng(0))
    x = RNG.standard_normal((2, 3, 9))
    np.testing.assert_allclose(conv.forward(x), conv_same_loops(x, conv.weight.data, conv.bias.data), atol=1e-12)


def test_conv_rejects_even_kernel():
    with pytest.raises(ConfigError):
        Conv1d(1, 1, 4)


def test_maxpool_matches_loops_and_ties():
    x = RNG.standard_normal((2, 3, 10))
    np.testing.assert_array_equal(MaxPool1d(7).forward(x), maxpool_loops(x, 7))
    pool = MaxPool1d(3)
    pool.forward(np.array([[[1.0, 1.0, 0.0]]]))
    dx = pool.backward(np.array([[[1.0, 1.0, 1.0]]]))
    # every window's max ties at positions 0/1 and the leftmost wins
    np.testing.assert_array_equal(dx, [[[2.0, 1.0, 0.0]]])


def test_channel_attention_matches_loops():
    ca = ChannelAttention(8, 4, np.random.default_rng(0))
    x = RNG.standard_normal((3, 8, 6))
    M = channel_attention_loops(x, ca.w0.data, ca.w1.data)
    np.testing.assert_allclose(ca.attention(x), M, atol=1e-12)
    np.testing.assert_allclose(ca.forward(x), x * M[:, :, None], atol=1e-12)


def test_spatial_attention_matches_loops():
    sa = SpatialAttention(7, np.random.default_rng(0))
    x = RNG.standard_normal((2, 5, 9))
    M = spatial_attention_loops(x, sa.weight.data, sa.bias.data)
    np.testing.assert_allclose(sa.attention(x), M, atol=1e-12)
    np.testing.assert_allclose(sa.forward(x), x * M[:, None, :], atol=1e-12)


def test_attention_gates_in_unit_interval():
    x = 50 * RNG.standard_normal((2, 8, 6))
    for M in (ChannelAttention(8, 2).attention(x), SpatialAttention(7).attention(x)):
        assert np.isfinite(M).all() and (M >= 0).all() and (M <= 1).all()


def test_channel_reduction_must_divide():
    with pytest.raises(ConfigError):
        ChannelAttention(6, 4)


def test_batchnorm_training_stats():
    bn = BatchNorm1d(3)
    x = RNG.standard_normal((4, 3, 5)) * 3 + 2
    y = bn.forward(x, training=True)
    np.testing.assert_allclose(y.mean(axis=(0, 2)), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 2)), 1.0, atol=1e-4)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2)))


def test_batchnorm_inference_uses_running_stats():
    bn = BatchNorm1d(2)
    x = RNG.standard_normal((3, 2, 4))
    np.testing.assert_allclose(bn.forward(x, training=False), x / np.sqrt(1 + 1e-5))


@pytest.mark.parametrize(
    "make,shape",
    [
        (lambda: Conv1d(2, 3, 7, np.random.default_rng(0)), (2, 2, 8)),
        (lambda: MaxPool1d(7), (2, 3, 8)),
        (lambda: BatchNorm1d(3), (4, 3, 5)),
        (lambda: ReLU(), (2, 3, 5)),
        (lambda: Dense(6, 4, np.random.default_rng(0)), (3, 6)),
        (lambda: ChannelAttention(4, 2, np.random.default_rng(0)), (3, 4, 6)),
        (lambda: SpatialAttention(7, np.random.default_rng(0)), (2, 3, 8)),
    ],
    ids=["conv", "maxpool", "batchnorm", "relu", "dense", "channel_att", "spatial_att"],
)
@pytest.mark.parametrize("training", [True, False])
def test_layer_gradients(make, shape, training):
    layer = make()
    x = np.random.default_rng(7).standard_normal(shape)
    errs = check_layer(layer, x, training=training)
    assert max(errs.values()) < TOL, errs


def test_backward_before_forward():
    for layer in (Conv1d(1, 1, 3), MaxPool1d(3), BatchNorm1d(1), ReLU(), Dense(2, 2),
                  ChannelAttention(2, 1), SpatialAttention(3)):
        with pytest.raises(StateError):
            layer.backward(np.zeros((1, 1, 1)))
    with pytest.raises(StateError):
        tiny_model().backward(np.zeros((1, 3)))


def test_model_shapes_and_parameter_names():
    model = AttentionCNN(ModelConfig(n_classes=7))
    logits = model.forward(RNG.standard_normal((2, 1, 20)))
    assert logits.shape == (2, 7)
    names = set(model.parameters())
    assert {"conv1.weight", "conv2.weight", "bn1.gamma", "ca.w0", "ca.w1", "sa.weight",
            "dense.weight", "head.bias"} <= names
    assert model.parameters()["conv2.weight"].shape == (256, 256, 7)
    assert model.parameters()["ca.w0"].shape == (32, 256)
    assert model.parameters()["dense.weight"].shape == (64, 256 * 20)


def test_model_rejects_bad_input():
    with pytest.raises(ShapeError):
        tiny_model().forward(np.zeros((2, 1, 9)))
    with pytest.raises(ShapeError):
        tiny_model().forward(np.zeros((2, 8)))


def _model_loss(model, x, y, training):
    return lambda: softmax_cross_entropy(model.forward(x, training), y)[0]


@pytest.mark.parametrize("training", [True, False])
def test_full_model_gradients(training):
    model = tiny_model(seed=3)
    x = np.random.default_rng(5).standard_normal((5, 1, 8))
    y = np.array([0, 1, 2, 1, 0])
    if not training:
        model.forward(x, training=True)  # non-trivial running stats
    _, dlogits = softmax_cross_entropy(model.forward(x, training), y)
    grads = {k: g.copy() for k, g in model.backward(dlogits).items()}
    dx = model.input_grad.copy()
    f = _model_loss(model, x, y, training)
    worst = {k: rel_err(grads[k], numeric_grad(f, t.data)) for k, t in model.parameters().items()}
    worst["input"] = rel_err(dx, numeric_grad(f, x))
    assert max(worst.values()) < TOL, worst


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model(seed=9)
    model.forward(RNG.standard_normal((4, 1, 8)), training=True)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = path.read_bytes()
    assert blob[:4] == b"SERM"
    back = load_checkpoint(path)
    assert back.cfg.n_classes == 3 and back.cfg.length == 8 and back.cfg.reduction == 2
    for k, v in model.state_dict().items():
        assert back.state_dict()[k].tobytes() == v.tobytes()
    x = RNG.standard_normal((3, 1, 8))
    assert back.forward(x).tobytes() == model.forward(x).tobytes()


def test_checkpoint_rejects_garbage():
    blob = encode_checkpoint(tiny_model())
    with pytest.raises(DecodeError):
        decode_checkpoint(b"NOPE" + blob[4:])
    with pytest.raises(DecodeError):
        decode_checkpoint(blob[:-3])
    with pytest.raises(DecodeError):
        decode_checkpoint(blob[:10])


def test_load_state_dict_mismatch():
    a, b = tiny_model(), AttentionCNN(ModelConfig(n_classes=4, length=8, channels=4, reduction=2))
    with pytest.raises(ShapeError):
        b.load_state_dict(a.state_dict())


def test_seeded_init_is_reproducible():
    a, b = tiny_model(seed=1), tiny_model(seed=1)
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])
