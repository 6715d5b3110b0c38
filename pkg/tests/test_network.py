import math

import numpy as np
import pytest
from scipy import sparse

from humanrewrite import network as nn
from humanrewrite.encoding import ActionCodec, EncodedExample, PositionTable, canonical_order
from humanrewrite.network import (
    Batch,
    NetworkParams,
    HalvingSchedule,
    TrainConfig,
    backward,
    forward,
    init_params,
    load_model,
    loss,
    make_batch,
    predict,
    save_model,
    train,
)


def random_example(rng, width, n_classes, p):
    x = (rng.random((p, width)) < 0.3).astype(float)
    x = x[canonical_order(x)]
    return EncodedExample(sparse.csr_matrix(x), int(rng.integers(n_classes)))


def random_net(rng, dims, bias=0.1):
    layers = [(rng.normal(0, 0.5, (a, b)), rng.normal(0, bias, b)) for a, b in zip(dims[:-1], dims[1:])]
    return NetworkParams(layers[:-1], layers[-1])


def batch_loss(params, batch):
    return nn.mean_loss(nn._forward(params, batch)[2], batch.targets)


@pytest.mark.parametrize("p", [1, 2, 5])
def test_gradient_matches_finite_differences(p):
    rng = np.random.default_rng(p)
    params = random_net(rng, [20, 24, 16, 9])
    batch = make_batch([random_example(rng, 20, 9, p) for _ in range(3)] + [random_example(rng, 20, 9, 1)])
    _, grads = backward(params, batch)
    eps = 1e-4
    checked = 0
    for arr, g in zip(params.flat(), grads.flat()):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            up = batch_loss(params, batch)
            arr[i] = old - eps
            down = batch_loss(params, batch)
            arr[i] = old
            num = (up - down) / (2 * eps)
            assert abs(num - g[i]) <= 1e-4 * max(abs(num), abs(g[i])) + 1e-9, (i, num, g[i])
            checked += 1
    assert checked >= 1000


def test_zero_weights_give_uniform_output():
    params = init_params(7, 2, 5, 600, np.random.default_rng(0))
    for W, b in params.layers:
        W[:] = 0
        b[:] = 0
    probs = forward(params, np.ones((3, 7)))
    np.testing.assert_allclose(probs, np.full(600, 1 / 600))
    assert loss(probs, 17) == pytest.approx(math.log(600))
    assert loss(probs, 17) == pytest.approx(6.397, abs=1e-3)
    assert predict(params, np.ones((3, 7)))[0] == 0


def test_loss_examples():
    assert loss(np.array([0.0, 1.0]), 1) == 0.0
    assert loss(np.array([0.5, 0.5]), 0) == pytest.approx(0.6931, abs=1e-4)
    assert loss(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))


def test_pooling_is_the_mean_of_hidden_vectors():
    eye = np.eye(2)
    params = NetworkParams([(eye.copy(), np.zeros(2))], (eye.copy(), np.zeros(2)))
    _, pooled, _ = nn._forward(params, nn._as_batch(np.array([[1.0, 0.0], [0.0, 1.0]])))
    np.testing.assert_array_equal(pooled, [[0.5, 0.5]])


def test_duplicated_input_vector_matches_single():
    rng = np.random.default_rng(1)
    params = random_net(rng, [6, 8, 5])
    v = rng.random(6)
    one = forward(params, v[None, :])
    for p in (2, 3, 7):
        np.testing.assert_allclose(forward(params, np.tile(v, (p, 1))), one, rtol=0, atol=1e-15)


def test_output_is_a_distribution_and_permutation_invariant():
    rng = np.random.default_rng(2)
    params = init_params(10, 3, 16, 30, rng)
    x = rng.random((6, 10))
    base = forward(params, x)
    assert abs(base.sum() - 1) < 1e-9 and (base > 0).all()
    for _ in range(10):
        assert np.array_equal(forward(params, x[rng.permutation(6)]), base)


def test_width_mismatch():
    params = init_params(10, 1, 4, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(params, np.ones((2, 9)))


def test_output_gradient_zero_when_target_certain():
    params = NetworkParams([], (np.zeros((2, 3)), np.array([0.0, 800.0, 0.0])))
    ex = EncodedExample(sparse.csr_matrix(np.eye(2)), 1)
    value, grads = backward(params, [ex])
    assert value == 0.0
    assert not grads.output[0].any() and not grads.output[1].any()


def test_duplicated_example_leaves_mean_gradient_unchanged():
    rng = np.random.default_rng(3)
    params = random_net(rng, [8, 10, 6])
    exs = [random_example(rng, 8, 6, 3) for _ in range(2)]
    _, g1 = backward(params, exs)
    _, g2 = backward(params, exs + exs)
    for a, b in zip(g1.flat(), g2.flat()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_predict_ranks_by_probability_then_index():
    table = PositionTable(3, 2)
    codec = ActionCodec(40, table)
    probs = np.full(600, 0.5 / 599)
    probs[35] = 0.5
    ranked = nn.rank_classes(probs)
    assert ranked[0] == 35 and codec.decode(ranked[0]) == (2, table.positions[5])
    assert ranked[1:4] == [0, 1, 2]
    assert nn.rank_classes(np.full(4, 0.25)) == [0, 1, 2, 3]


def test_halving_schedule_example():
    s = HalvingSchedule(0.01, 0.1, 0.01)
    lrs = []
    for value in [2.00, 1.50, 1.45, 1.44]:
        s.update(value)
        lrs.append(s.lr)
        assert not s.done
    assert lrs == [0.01, 0.01, 0.005, 0.0025]
    s.update(1.435)
    assert s.done


def _toy_data(seed=0):
    rng = np.random.default_rng(seed)
    return [random_example(rng, 20, 4, int(rng.integers(1, 4))) for _ in range(40)]


def test_training_is_deterministic_and_lr_halves():
    cfg = TrainConfig(hidden_layers=2, hidden_units=16, batch_size=4, seed=7, max_epochs=60)
    p1, c1 = train(_toy_data(), cfg, 4)
    p2, c2 = train(_toy_data(), cfg, 4)
    assert c1.loss == c2.loss and c1.lr == c2.lr
    for a, b in zip(p1.flat(), p2.flat()):
        assert np.array_equal(a, b)
    assert len(c1.loss) == len(c1.lr) == len(c1.seconds)
    assert c1.lr[0] == 0.01
    assert all(b <= a for a, b in zip(c1.lr, c1.lr[1:]))
    assert all(math.log2(0.01 / lr) == int(math.log2(0.01 / lr)) for lr in c1.lr)
    assert all(math.isfinite(v) for v in c1.loss)


def test_training_reduces_loss():
    cfg = TrainConfig(hidden_layers=1, hidden_units=32, batch_size=2, seed=0, init_lr=0.1, max_epochs=200)
    _, curve = train(_toy_data(1), cfg, 4)
    assert curve.loss[-1] < curve.loss[0]


def test_divergence_guard():
    data = _toy_data()
    params = init_params(20, 1, 8, 4, np.random.default_rng(0))
    params.hidden[0][0][:] = np.nan
    with pytest.raises(nn.DivergenceError):
        train(data, TrainConfig(hidden_layers=1, hidden_units=8), 4, params=params)


def test_save_load_bit_identical(tmp_path):
    rng = np.random.default_rng(5)
    params = init_params(9, 2, 7, 11, rng)
    path = tmp_path / "m.model"
    save_model(path, params, {"note": "x"})
    again, meta = load_model(path)
    assert meta["note"] == "x" and meta["dims"] == [9, 7, 7, 11]
    x = rng.random((4, 9))
    assert np.array_equal(forward(again, x), forward(params, x))
    raw = path.read_bytes()
    assert raw[:8] == nn.MODEL_MAGIC
    (tmp_path / "bad").write_bytes(b"nope" + raw)
    with pytest.raises(ValueError):
        load_model(tmp_path / "bad")


def test_init_variance():
    params = init_params(400, 1, 300, 5, np.random.default_rng(0))
    W = params.hidden[0][0]
    assert W.var() == pytest.approx(2 / 400, rel=0.05)
    assert not params.hidden[0][1].any()


def test_batch_offsets():
    exs = _toy_data()[:3]
    b = make_batch(exs)
    assert isinstance(b, Batch) and len(b) == 3
    assert b.counts.tolist() == [e.n_vectors for e in exs]


def test_single_vector_equals_plain_softmax_layer():
    rng = np.random.default_rng(4)
    params = random_net(rng, [6, 8, 8, 5])
    v = rng.random(6)
    h = v
    for W, b in params.hidden:
        h = np.maximum(h @ W + b, 0)
    W, b = params.output
    z = h @ W + b
    plain = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    np.testing.assert_allclose(forward(params, v), plain, rtol=1e-13)
