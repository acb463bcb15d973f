import numpy as np
import pytest

from signsym import checkpoint
from signsym.errors import ConfigError, DataFormatError, DimensionError
from signsym.network import (ACTIVATIONS, Conv2d, Dense, Flatten, LossKind, MaxPool2d, Network,
                             activate, attach_head, check_pairing, forward, loss,
                             loss_grad_output, mlp, small_cnn)


def test_identity_network_passes_input_through():
    net = Network([Dense(np.eye(3), np.zeros(3), "identity")], (3,), ("classifier", 3))
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(forward(net, x).output, x)


def test_relu_clamps_negative_preactivations():
    net = Network([Dense(-np.ones((2, 3)), -np.ones(2), "relu")], (3,), ("classifier", 2))
    out = forward(net, np.random.default_rng(0).uniform(size=(5, 3))).output
    assert np.all(out == 0)


def scalar_forward(layers, x):
    h = list(x)
    for w, b, act in layers:
        a = []
        for i in range(len(w)):
            s = b[i]
            for j in range(len(h)):
                s += w[i][j] * h[j]
            a.append(s)
        h = [max(v, 0.0) if act == "relu" else np.tanh(v) for v in a]
    return np.array(h)


def test_two_layer_forward_matches_scalar_loop():
    net = mlp([4, 5, 3], activation="relu", out_activation="tanh", seed=42)
    x = np.random.default_rng(1).normal(size=(6, 4))
    out = forward(net, x).output
    spec = [(l.weight.tolist(), l.bias.tolist(), l.activation) for l in net.layers]
    expect = np.array([scalar_forward(spec, row) for row in x])
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-12)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_trace_consistency(act):
    net = mlp([3, 4, 2], activation=act, seed=0)
    tr = forward(net, np.random.default_rng(0).normal(size=(5, 3)))
    for layer, a, h in zip(net.layers, tr.pre, tr.post):
        np.testing.assert_array_equal(h, activate(layer.activation, a))


def test_forward_shape_error_names_layer():
    net = mlp([3, 4, 2], seed=0)
    with pytest.raises(DimensionError, match="layer 0"):
        forward(net, np.ones((2, 5)))
    bad = [Dense(np.ones((4, 3)), np.zeros(4)), Dense(np.ones((2, 5)), np.zeros(2))]
    with pytest.raises(DimensionError, match="layer 1"):
        Network(bad, (3,), ("classifier", 2))


def naive_conv(x, w, b, pad):
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    out = np.zeros((bsz, o, ho, wo))
    for n in range(bsz):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    s = b[oc]
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                s += xp[n, ic, i + di, j + dj] * w[oc, ic, di, dj]
                    out[n, oc, i, j] = s
    return out


@pytest.mark.parametrize("padding", ["valid", "same"])
@pytest.mark.parametrize("shape", [(1, 1, 5, 5), (2, 3, 8, 8), (2, 2, 6, 7)])
def test_conv_matches_nested_loops_exactly(shape, padding):
    # small integers keep every partial sum exact in float64
    rng = np.random.default_rng(sum(shape))
    x = rng.integers(-3, 4, size=shape).astype(float)
    w = rng.integers(-2, 3, size=(4, shape[1], 3, 3)).astype(float)
    b = rng.integers(-2, 3, size=4).astype(float)
    conv = Conv2d(w, b, "identity", padding)
    np.testing.assert_array_equal(conv.preact(x), naive_conv(x, w, b, conv.pad))


def test_conv_transport_is_adjoint():
    rng = np.random.default_rng(3)
    conv = Conv2d(rng.normal(size=(3, 2, 3, 3)), np.zeros(3), "identity", "same")
    x = rng.normal(size=(2, 2, 6, 6))
    d = rng.normal(size=(2, 3, 6, 6))
    lhs = np.sum(conv.preact(x) * d)
    rhs = np.sum(x * conv.transport(d, x, conv.weight))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_maxpool_routes_to_argmax():
    x = np.array([[[[1.0, 5.0, 2.0], [3.0, 4.0, 0.0], [9.0, 9.0, 9.0]]]])
    pool = MaxPool2d()
    assert pool.preact(x).tolist() == [[[[5.0]]]]
    g = pool.transport(np.array([[[[2.0]]]]), x)
    assert g.tolist() == [[[[0, 2, 0], [0, 0, 0], [0, 0, 0]]]]


def test_small_cnn_shapes():
    net = small_cnn(seed=0)
    out = forward(net, np.zeros((2, 1, 28, 28))).output
    assert out.shape == (2, 10)
    assert isinstance(net.layers[4], Flatten)


def test_squared_error_examples():
    assert loss("squared", [1.0, 0.0], [1.0, 0.0]) == 0.0
    assert loss("squared", [1.0, 0.0], [0.0, 1.0]) == 1.0
    np.testing.assert_array_equal(loss_grad_output("squared", [1.0, 0.0], [1.0, 0.0]), [0, 0])
    np.testing.assert_array_equal(loss_grad_output("squared", [1.0, 0.0], [0.0, 1.0]), [1, -1])


def test_cross_entropy_uniform_logits():
    assert loss("cross_entropy", np.zeros((1, 4)), [2]) == pytest.approx(np.log(4), abs=1e-12)
    assert loss("cross_entropy", np.full(4, 3.0), np.eye(4)[1]) == pytest.approx(np.log(4))


def central_diff(f, y, h=1e-5):
    g = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        yp, ym = y.copy(), y.copy()
        yp[idx] += h
        ym[idx] -= h
        g[idx] = (f(yp) - f(ym)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", ["squared", "cross_entropy", "pairwise_hash"])
def test_loss_grad_matches_finite_differences(kind):
    rng = np.random.default_rng({"squared": 0, "cross_entropy": 1, "pairwise_hash": 2}[kind])
    worst = 0.0
    for _ in range(100):
        b = int(rng.integers(2, 6))
        if kind == "squared":
            y, t = rng.normal(size=(b, 3)), rng.normal(size=(b, 3))
        elif kind == "cross_entropy":
            y, t = rng.normal(size=(b, 5)) * 2, rng.integers(0, 5, size=b)
        else:
            y, t = np.tanh(rng.normal(size=(b, 8))), rng.integers(0, 3, size=b)
        fd = central_diff(lambda v: loss(kind, v, t), y)
        g = loss_grad_output(kind, y, t)
        scale = np.maximum(np.abs(fd), 1e-6)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    assert worst <= 1e-5


def test_loss_values_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(20):
        y = rng.normal(size=(4, 6))
        assert loss("squared", y, rng.normal(size=(4, 6))) >= 0
        assert loss("cross_entropy", y, rng.integers(0, 6, size=4)) >= 0


def test_pairwise_hash_loss_by_hand():
    u = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, -1.0, -1.0]])
    # k=4, d = (4 - 0)/2 = 2, margin 2: similar pair costs 2, dissimilar costs 0
    assert loss("pairwise_hash", u, [0, 0]) == 2.0
    assert loss("pairwise_hash", u, [0, 1]) == 0.0


def test_head_loss_pairing():
    check_pairing(LossKind.CROSS_ENTROPY, ("classifier", 3))
    with pytest.raises(ConfigError):
        check_pairing(LossKind.PAIRWISE_HASH, ("classifier", 3))
    with pytest.raises(ConfigError):
        check_pairing(LossKind.CROSS_ENTROPY, ("hasher", 32))


def test_hasher_head_requires_tanh():
    with pytest.raises(ConfigError):
        Network([Dense(np.ones((4, 3)), np.zeros(4), "relu")], (3,), ("hasher", 4))
    net = attach_head(mlp([3, 5, 2], seed=0), ("hasher", 16), seed=1)
    assert net.layers[-1].activation == "tanh" and net.head == ("hasher", 16)


@pytest.mark.parametrize("factory", [lambda: mlp([6, 5, 4], seed=9),
                                     lambda: small_cnn((1, 8, 8), channels=(2, 3), hidden=5,
                                                       seed=9)])
def test_checkpoint_roundtrip_reproduces_outputs(tmp_path, factory):
    net = factory()
    path = tmp_path / "net.ckpt"
    checkpoint.save(path, net, {"extra": np.arange(3.0)})
    loaded, extras = checkpoint.load(path)
    x = np.random.default_rng(0).uniform(size=(3,) + net.input_shape)
    np.testing.assert_array_equal(forward(net, x).output, forward(loaded, x).output)
    np.testing.assert_array_equal(extras["extra"], np.arange(3.0))
    assert checkpoint.to_bytes(loaded, extras) == path.read_bytes()
    assert loaded.seed == net.seed and loaded.head == net.head


def test_checkpoint_rejects_garbage():
    with pytest.raises(DataFormatError):
        checkpoint.from_bytes(b"nope" + bytes(20))
    blob = checkpoint.to_bytes(mlp([2, 2], seed=0))
    with pytest.raises(DataFormatError, match="truncated"):
        checkpoint.from_bytes(blob[:-8])
