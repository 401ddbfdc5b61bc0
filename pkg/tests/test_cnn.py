import numpy as np
import pytest

from gaitdetect.cnn import (CnnError, Conv2D, Dense, MaxPool2D, Network, TrainConfig, cross_entropy,
                            default_architecture, reshape_for_cnn, softmax, train)
from gaitdetect.ingest import GaitLabel
from gaitdetect.windowing import Window, flatten
from gradcheck import LAYER_CASES, layer_errors, network_error
from oracles import tiny_cnn_unrolled


def _zero(net):
    for _, _, p in net.parameters():
        p[...] = 0.0


def test_default_architecture_shapes():
    net = Network.from_specs(default_architecture())
    out = net.forward(np.random.default_rng(0).normal(size=(1, 200, 6, 1)))
    assert out.shape == (1, 2)
    assert abs(out.sum() - 1) < 1e-6


def test_zero_weights_give_half():
    net = Network.from_specs(default_architecture())
    _zero(net)
    out = net.forward(np.random.default_rng(0).normal(size=(4, 200, 6, 1)))
    np.testing.assert_array_equal(out, 0.5)


def test_shape_mismatch_names_shapes():
    net = Network.from_specs(default_architecture())
    with pytest.raises(CnnError, match=r"\(n, 200, 6, 1\).*\(2, 199, 6, 1\)"):
        net.forward(np.zeros((2, 199, 6, 1)))


def test_bad_architectures():
    with pytest.raises(CnnError, match="expected \\(2,\\)"):
        Network.from_specs([{"type": "Flatten"}, {"type": "Dense", "units": 3}], (4, 3, 1))
    with pytest.raises(CnnError, match="does not fit"):
        Network.from_specs([{"type": "Conv2D", "filters": 1, "kernel": [5, 5]}], (4, 3, 1))
    with pytest.raises(CnnError, match="unknown layer"):
        Network.from_specs([{"type": "Dropout"}], (4, 3, 1))


def test_against_unrolled_oracle():
    rng = np.random.default_rng(11)
    specs = [{"type": "Conv2D", "filters": 1, "kernel": [2, 2]}, {"type": "Flatten"}, {"type": "Dense", "units": 2}]
    net = Network.from_specs(specs, (4, 3, 1))
    conv, _, dense = net.layers
    conv.W = rng.normal(size=(2, 2, 1, 1))
    conv.b = rng.normal(size=1)
    dense.W = rng.normal(size=(6, 2))
    dense.b = rng.normal(size=2)
    x = rng.normal(size=(4, 3))
    expected = tiny_cnn_unrolled(x.tolist(), conv.W[:, :, 0, 0].tolist(), float(conv.b[0]),
                                 dense.W.tolist(), dense.b.tolist())
    np.testing.assert_allclose(net.forward(x[None, :, :, None])[0], expected, atol=1e-12)


@pytest.mark.parametrize("name, make, shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
@pytest.mark.parametrize("seed", range(3))
def test_layer_gradients(name, make, shape, seed):
    errs = layer_errors(make(), shape, seed)
    assert max(errs.values()) < 1e-4, errs


@pytest.mark.parametrize("seed", range(3))
def test_network_gradient(seed):
    assert network_error(seed) < 1e-4


def test_duplicated_sample_same_gradient():
    net = Network.from_specs([{"type": "Flatten"}, {"type": "Dense", "units": 3}, {"type": "ReLU"},
                              {"type": "Dense", "units": 2}], (4, 3, 1), seed=2)
    x = np.random.default_rng(1).normal(size=(1, 4, 3, 1))
    net.backward(x, [1])
    single = [g.copy() for _, _, g in net.gradients()]
    net.backward(np.concatenate([x, x]), [1, 1])
    for a, (_, _, b) in zip(single, net.gradients()):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_zero_input_bias_gradient():
    net = Network.from_specs(default_architecture(), seed=0)
    _zero(net)
    y = np.array([0, 1, 1])
    net.backward(np.zeros((3, 200, 6, 1)), y)
    onehot_mean = np.eye(2)[y].mean(axis=0)
    np.testing.assert_allclose(net.layers[-1].db, softmax(np.zeros((1, 2)))[0] - onehot_mean, atol=1e-15)


def test_maxpool_routes_to_argmax():
    pool = MaxPool2D((2, 2))
    pool.init(None, (4, 2, 1))
    x = np.array([1, 5, 3, 2, 0, -1, -4, -2], dtype=float).reshape(1, 4, 2, 1)
    np.testing.assert_array_equal(pool.forward(x).ravel(), [5, 0])
    dx = pool.backward(np.array([10.0, 20.0]).reshape(1, 2, 1, 1))
    np.testing.assert_array_equal(dx.ravel(), [0, 10, 0, 0, 20, 0, 0, 0])


def test_identity_conv():
    conv = Conv2D(1, (1, 1))
    conv.init(np.random.default_rng(0), (5, 3, 1))
    conv.W = np.ones((1, 1, 1, 1))
    conv.b = np.zeros(1)
    x = np.random.default_rng(1).normal(size=(2, 5, 3, 1))
    np.testing.assert_array_equal(conv.forward(x), x)


def test_softmax_rows():
    p = softmax(np.random.default_rng(0).normal(size=(50, 2)) * 5)
    assert ((p > 0) & (p < 1)).all()
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    assert abs(cross_entropy(np.zeros((2, 2)), [0, 1]) - np.log(2)) < 1e-15


def _toy(n_per_class=10, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(2 * n_per_class, 12, 3, 1))
    y = np.repeat([0, 1], n_per_class)
    return X, y


def _toy_net(seed=0):
    specs = [{"type": "Conv2D", "filters": 4, "kernel": [3, 2]}, {"type": "ReLU"},
             {"type": "MaxPool2D", "pool": [2, 1]}, {"type": "Flatten"},
             {"type": "Dense", "units": 16}, {"type": "ReLU"}, {"type": "Dense", "units": 2}]
    return Network.from_specs(specs, (12, 3, 1), seed=seed)


def test_zero_learning_rate_freezes():
    net = _toy_net()
    before = [p.copy() for _, _, p in net.parameters()]
    X, y = _toy()
    train(net, X, y, TrainConfig(learning_rate=0.0, epochs=3, batch_size=4))
    for a, (_, _, b) in zip(before, net.parameters()):
        np.testing.assert_array_equal(a, b)


def test_memorises_twenty_samples():
    net = _toy_net()
    X, y = _toy()
    hist = train(net, X, y, TrainConfig(learning_rate=1e-2, epochs=200, batch_size=20))
    assert hist[-1] < 0.05


def test_training_is_reproducible():
    X, y = _toy()
    cfg = TrainConfig(learning_rate=1e-2, epochs=5, batch_size=6, seed=4)
    a = train(_toy_net(1), X, y, cfg)
    b = train(_toy_net(1), X, y, cfg)
    assert a == b


def test_train_needs_two_per_class():
    X, y = _toy()
    with pytest.raises(CnnError, match="at least 2"):
        train(_toy_net(), X[:11], y[:11])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    net = _toy_net()
    X, y = _toy()
    with pytest.raises(CnnError, match="epoch 0, batch 0"):
        train(net, X * np.inf, y, TrainConfig(epochs=1))


def test_serialization_round_trip():
    net = _toy_net(3)
    X, _ = _toy()
    back = Network.from_dict(net.to_dict())
    np.testing.assert_array_equal(back.forward(X), net.forward(X))


def test_reshape_for_cnn():
    values = np.random.default_rng(0).normal(size=(200, 6))
    w = Window(values, GaitLabel.NORMAL, "s", 0)
    flat = flatten(w)
    t = reshape_for_cnn(flat)
    assert t.shape == (200, 6, 1)
    np.testing.assert_array_equal(t[..., 0], values)
    np.testing.assert_array_equal(reshape_for_cnn(w)[..., 0], values)
    for k in (0, 7, 1199):
        assert flat[k] == t[k // 6, k % 6, 0]
    assert reshape_for_cnn(np.stack([flat, flat])).shape == (2, 200, 6, 1)
    with pytest.raises(CnnError):
        reshape_for_cnn(np.zeros(1199))
