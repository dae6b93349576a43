from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from uavcoinfer import nn


def _oracle_forward(ws, bs, x, tanh=False):
    # straight-line re-evaluation, no shared code with DenseNet
    h = x
    for i in range(len(ws)):
        h = np.dot(h, ws[i]) + bs[i]
        if i < len(ws) - 1:
            h = np.where(h > 0, h, 0.0)
    return np.tanh(h) if tanh else h


def _fd_grads(net, x, up, h=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            fp = float(np.sum(net(x) * up))
            p[idx] = old - h
            fm = float(np.sum(net(x) * up))
            p[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def test_zero_net_outputs_zero():
    net = nn.DenseNet([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(net([1.0, 2.0, 3.0]), [0.0, 0.0])


def test_identity_layer():
    net = nn.DenseNet([np.eye(3)], [np.zeros(3)])
    np.testing.assert_array_equal(net([1.0, -2.0, 3.0]), [1.0, -2.0, 3.0])


@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_forward_matches_oracle(rng, act):
    net = nn.DenseNet.init([4, 8, 2], rng, output_activation=act)
    x = rng.normal(size=(5, 4))
    np.testing.assert_allclose(net(x), _oracle_forward(net.weights, net.biases, x, act == "tanh"),
                               atol=1e-12)


def test_forward_shape_mismatch(rng):
    net = nn.DenseNet.init([4, 8, 2], rng)
    with pytest.raises(nn.ShapeError):
        net(np.zeros(3))


@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_backward_matches_finite_differences(rng, act):
    net = nn.DenseNet.init([4, 6, 5, 3], rng, output_activation=act)
    x = rng.normal(size=4)
    up = rng.normal(size=3)
    bundle = nn.backward(net, x, up)
    for a, b in zip(bundle.params(), _fd_grads(net, x, up)):
        assert _rel_err(a, b) < 1e-5
    # input gradient
    fd = np.zeros(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1e-5
        fd[i] = (np.sum(net(x + e) * up) - np.sum(net(x - e) * up)) / 2e-5
    assert _rel_err(bundle.input, fd) < 1e-5


def test_backward_zero_upstream(rng):
    net = nn.DenseNet.init([3, 4, 2], rng)
    bundle = nn.backward(net, rng.normal(size=3), np.zeros(2))
    assert all(np.all(g == 0) for g in bundle.params())
    assert np.all(bundle.input == 0)


def test_linear_layer_weight_gradient_is_outer_product(rng):
    net = nn.DenseNet.init([3, 2], rng)
    x = np.array([1.0, 2.0, 3.0])
    up = np.array([0.5, -1.0])
    bundle = nn.backward(net, x, up)
    np.testing.assert_allclose(bundle.weights[0], np.outer(x, up))


def test_backward_shape_mismatch(rng):
    net = nn.DenseNet.init([3, 2], rng)
    with pytest.raises(nn.ShapeError):
        nn.backward(net, np.zeros(3), np.zeros(3))


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(nn.softmax([np.log(1.0), np.log(3.0)]), [0.25, 0.75])
    z = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(nn.softmax(z), nn.softmax(z + 100.0), atol=1e-15)


def test_gumbel_softmax_temperature_limits(rng):
    z = np.array([0.3, 1.2, -0.4])
    g = nn.sample_gumbel(rng, 3)
    np.testing.assert_allclose(nn.gumbel_softmax(z, 1e6, noise=g), np.full(3, 1 / 3), atol=1e-5)
    cold = nn.gumbel_softmax(z, 1e-4, noise=g)
    assert np.argmax(cold) == np.argmax(z + g) and cold.max() == pytest.approx(1.0)


def test_gumbel_softmax_rejects_nonpositive_temperature(rng):
    with pytest.raises(ValueError):
        nn.gumbel_softmax(np.zeros(2), 0.0, rng)


def test_gumbel_softmax_reproducible():
    a = nn.gumbel_softmax(np.arange(4.0), 0.5, np.random.default_rng(9))
    b = nn.gumbel_softmax(np.arange(4.0), 0.5, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_gumbel_max_frequencies():
    rng = np.random.default_rng(0)
    z = np.array([0.5, -1.0, 1.5, 0.0])
    n = 100_000
    counts = np.bincount(np.argmax(z + nn.sample_gumbel(rng, (n, 4)), axis=1), minlength=4)
    assert stats.chisquare(counts, n * nn.softmax(z)).pvalue > 0.01


def test_adam_first_step_closed_form():
    p = [np.array([1.0, -2.0])]
    st = nn.AdamState.for_params(p, lr=0.1)
    g = np.array([3.0, -0.5])
    nn.adam_step(p, [g], st)
    np.testing.assert_allclose(p[0], [1.0, -2.0] - 0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert st.step == 1


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, 2.0])]
    st = nn.AdamState.for_params(p, lr=0.1)
    nn.adam_step(p, [np.array([1.0, 1.0])], st)
    before = p[0].copy()
    m_before = st.first[0].copy()
    st2 = nn.AdamState(0.1, [np.zeros(2)], [np.zeros(2)])
    q = [before.copy()]
    nn.adam_step(q, [np.zeros(2)], st2)
    np.testing.assert_array_equal(q[0], before)
    nn.adam_step(p, [np.zeros(2)], st)
    np.testing.assert_allclose(st.first[0], 0.9 * m_before)


def test_adam_rejects_nonfinite():
    p = [np.zeros(2)]
    st = nn.AdamState.for_params(p, lr=0.1)
    with pytest.raises(FloatingPointError):
        nn.adam_step(p, [np.array([np.nan, 0.0])], st)
    np.testing.assert_array_equal(p[0], 0.0)


def test_adam_deterministic(rng):
    def run():
        r = np.random.default_rng(5)
        p = [r.normal(size=3)]
        st = nn.AdamState.for_params(p, lr=0.01)
        for _ in range(10):
            nn.adam_step(p, [r.normal(size=3)], st)
        return p[0]
    np.testing.assert_array_equal(run(), run())


def test_soft_update_cases(rng):
    online = nn.DenseNet([np.ones((2, 2))], [np.ones(2)])
    target = nn.DenseNet([np.zeros((2, 2))], [np.zeros(2)])
    nn.soft_update(target, online, 0.001)
    np.testing.assert_allclose(target.weights[0], 0.001)
    nn.soft_update(target, online, 0.0)
    np.testing.assert_allclose(target.weights[0], 0.001)
    nn.soft_update(target, online, 1.0)
    np.testing.assert_array_equal(target.weights[0], 1.0)


def test_soft_update_shape_mismatch(rng):
    with pytest.raises(nn.ShapeError):
        nn.soft_update(nn.DenseNet.init([2, 3], rng), nn.DenseNet.init([2, 4], rng), 0.5)


def test_serialization_round_trip(rng):
    net = nn.DenseNet.init([3, 5, 1], rng, output_activation="tanh")
    back = nn.net_from_dict(nn.net_to_dict(net))
    x = rng.normal(size=3)
    np.testing.assert_array_equal(net(x), back(x))
    st = nn.AdamState.for_params(net.params(), 0.01)
    st2 = nn.adam_from_dict(nn.adam_to_dict(st))
    assert st2.lr == 0.01 and len(st2.first) == len(net.params())
