import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zslopt import mlp
from zslopt.errors import FormatError, ShapeError
from zslopt.mlp import GradPair, TwoLayerNet
from zslopt.tensor import Rng


def hand_forward(w1, w2, x):
    """Loop-based forward pass used as an oracle."""
    h = [max(0.0, sum(w1[i][j] * x[j] for j in range(len(x)))) for i in range(len(w1))]
    return [max(0.0, sum(w2[o][i] * h[i] for i in range(len(h)))) for o in range(len(w2))]


def test_identity_net_is_identity_on_nonnegative():
    net = TwoLayerNet(np.eye(3), np.eye(3))
    x = np.array([[0.5, 0.0, 2.0]])
    assert mlp.forward(net, x).tolist() == x.tolist()


def test_negative_identity_kills_everything():
    net = TwoLayerNet(-np.eye(3), np.eye(3))
    assert mlp.forward(net, np.array([[1.0, 2.0, 3.0]])).tolist() == [[0.0, 0.0, 0.0]]


def test_random_net_matches_hand_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        w1, w2, x = rng.standard_normal((3, 4)), rng.standard_normal((2, 3)), rng.standard_normal(4)
        got = mlp.forward(TwoLayerNet(w1, w2), x)[0]
        want = hand_forward(w1.tolist(), w2.tolist(), x.tolist())
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


def test_forward_shape_error():
    net = TwoLayerNet(np.ones((3, 4)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        mlp.forward(net, np.ones((1, 5)))
    with pytest.raises(ShapeError):
        TwoLayerNet(np.ones((3, 4)), np.ones((2, 2)))


@given(st.floats(0.01, 100.0), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_positive_homogeneity(c, seed):
    rng = np.random.default_rng(seed)
    net = TwoLayerNet(rng.standard_normal((5, 4)), rng.standard_normal((3, 5)))
    x = rng.standard_normal((2, 4))
    np.testing.assert_allclose(mlp.forward(net, c * x), c * mlp.forward(net, x), rtol=1e-10, atol=1e-10)


def test_grad_zero_at_target():
    net = mlp.init(Rng(1), 4, 6, 3)
    x = np.abs(np.random.default_rng(1).standard_normal((2, 4)))
    loss, g = mlp.grad_sq_target(net, x, mlp.forward(net, x))
    assert loss == 0.0
    assert not g.g1.any() and not g.g2.any()


def test_doubling_residual_quadruples_loss():
    net = TwoLayerNet(np.eye(2), np.eye(2))
    x = np.array([[1.0, 2.0]])
    l1, _ = mlp.grad_sq_target(net, x, x - 0.5)
    l2, _ = mlp.grad_sq_target(net, x, x - 1.0)
    assert l2 == pytest.approx(4 * l1)


@pytest.mark.parametrize("seed", range(5))
def test_grad_sq_target_matches_fd(seed):
    rng = Rng(seed)
    net = mlp.init(rng, 5, 7, 4)
    data = np.random.default_rng(seed)
    x, target = data.standard_normal((3, 5)), np.abs(data.standard_normal((3, 4)))
    _, g = mlp.grad_sq_target(net, x, target)

    def probe_w(which):
        def probe(w):
            n = net.copy()
            setattr(n, which, w)
            a = mlp.forward_cache(n, x)
            return np.concatenate([a.pre1.ravel(), a.pre2.ravel()])
        return probe

    for which, grad in (("w1", g.g1), ("w2", g.g2)):
        def loss(w, which=which):
            n = net.copy()
            setattr(n, which, w)
            return mlp.grad_sq_target(n, x, target)[0]
        assert mlp.fd_check(loss, getattr(net, which), grad, probe=probe_w(which)) < 1e-4


def test_fd_check_quadratic_exact():
    a = np.array([[1.0, -2.0], [0.5, 3.0]])
    loss = lambda w: float(np.sum(a * w * w))  # noqa: E731
    w = np.array([[0.3, -1.2], [2.0, 0.7]])
    assert mlp.fd_check(loss, w, 2 * a * w) < 1e-8


def test_fd_check_detects_doubled_gradient():
    a = np.array([[1.0, -2.0], [0.5, 3.0]])
    loss = lambda w: float(np.sum(a * w * w))  # noqa: E731
    w = np.array([[0.3, -1.2], [2.0, 0.7]])
    # |2g - g| / max(1, |g|) is 1 wherever |g| >= 1
    assert mlp.fd_check(loss, w, 4 * a * w) == pytest.approx(1.0, rel=1e-6)


def test_fd_check_skips_kinks():
    loss = lambda w: float(abs(w[0, 0]))  # noqa: E731
    w = np.array([[0.0]])
    assert mlp.fd_check(loss, w, np.array([[5.0]]), probe=lambda w: w) == 0.0
    assert mlp.fd_check(loss, w, np.array([[5.0]])) > 1.0


def test_sgd_fixed_point_and_arithmetic():
    net = TwoLayerNet([[1.0]], [[1.0]])
    mlp.sgd_step(net, GradPair(np.zeros((1, 1)), np.zeros((1, 1))), 0.1, 0.0)
    assert net.w1.tolist() == [[1.0]]
    mlp.sgd_step(net, GradPair(np.array([[2.0]]), np.array([[2.0]])), 0.1, 0.0)
    assert net.w1[0, 0] == pytest.approx(0.8)
    assert net.w2[0, 0] == pytest.approx(0.8)


def test_sgd_decay_monotone():
    net = TwoLayerNet([[1.0, -2.0]], [[3.0]])
    zero = GradPair(np.zeros((1, 2)), np.zeros((1, 1)))
    prev = mlp.l2_penalty(net)
    for _ in range(20):
        mlp.sgd_step(net, zero, 0.1, 0.5)
        cur = mlp.l2_penalty(net)
        assert cur < prev
        prev = cur


def test_sgd_rejects_bad_args():
    net = TwoLayerNet([[1.0]], [[1.0]])
    g = GradPair(np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        mlp.sgd_step(net, g, 0.0)
    with pytest.raises(ValueError):
        mlp.sgd_step(net, g, 0.1, -1.0)


def test_rect_identity():
    net = mlp.init(Rng(0), 4, 3, 5, "rect_identity")
    assert net.w1.tolist() == np.eye(3, 4).tolist()
    assert net.w2.tolist() == np.eye(5, 3).tolist()
    sq = mlp.init(Rng(0), 4, 4, 4, "rect_identity")
    x = np.array([[0.0, 1.0, 2.5, 7.0]])
    assert mlp.forward(sq, x).tolist() == x.tolist()


def test_xavier_bounds_and_determinism():
    a, b = mlp.init(Rng(3), 10, 20, 5), mlp.init(Rng(3), 10, 20, 5)
    assert a == b
    assert np.abs(a.w1).max() <= math.sqrt(6 / 30)
    assert np.abs(a.w2).max() <= math.sqrt(6 / 25)
    assert a != mlp.init(Rng(4), 10, 20, 5)


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        mlp.init(Rng(0), 0, 2, 2)
    with pytest.raises(ValueError):
        mlp.init(Rng(0), 2, 2, 2, "orthogonal")


def test_checkpoint_round_trip(tmp_path):
    nets = [mlp.init(Rng(0), 3, 4, 2), mlp.init(Rng(1), 2, 5, 3), TwoLayerNet(np.ones((2, 3)), np.zeros((0, 2)))]
    path = tmp_path / "n.zslw"
    mlp.save_checkpoint(path, nets)
    back = mlp.load_checkpoint(path)
    assert back == nets
    raw = path.read_bytes()
    assert raw[:4] == b"ZSLW"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 3
    assert [int.from_bytes(raw[12 + 8 * i:20 + 8 * i], "little") for i in range(3)] == [3, 4, 2]


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "n.zslw"
    mlp.save_checkpoint(path, [mlp.init(Rng(0), 3, 4, 2)])
    raw = path.read_bytes()
    for bad, msg in ((b"ZSLX" + raw[4:], "magic"), (raw[:4] + b"\x02" + raw[5:], "version"),
                     (raw[:-8], "truncated"), (raw + b"\0", "trailing"), (raw[:6], "truncated")):
        path.write_bytes(bad)
        with pytest.raises(FormatError, match=msg):
            mlp.load_checkpoint(path)
