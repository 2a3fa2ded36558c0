import threading

import numpy as np
import pytest
import scipy.sparse as sp

from meshlearn import autodiff as ad
from meshlearn.autodiff import Tape, Tensor
from meshlearn.errors import ShapeError

from gradcheck import check_gradients

TOL = 1e-4


def t64(rng, *shape, name=None):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name, dtype=np.float64)


def away_from_zero(rng, *shape):
    """Random values with |x| >= 0.1 so kinks of relu/abs are not straddled."""
    x = rng.normal(size=shape)
    return Tensor(np.sign(x) * (np.abs(x) + 0.1), requires_grad=True, dtype=np.float64)


# ------------------------------------------------------------ trivial values

def test_relu_values():
    assert ad.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0, 0, 2]


def test_identity_matmul(rng):
    x = rng.normal(size=(3, 4)).astype(np.float32)
    assert np.array_equal(ad.matmul(Tensor(np.eye(3)), Tensor(x)).data, x)


@pytest.mark.parametrize("k", [2, 5, 30])
def test_uniform_logits_cross_entropy(k):
    for target in (0, k - 1):
        loss = ad.softmax_cross_entropy(Tensor(np.zeros(k)), target)
        assert float(loss.data) == pytest.approx(np.log(k), rel=1e-6)


def test_sum_gradient_is_ones(rng):
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(x)
    assert (tape.backward(loss, [x])[x] == 1).all()


def test_relu_subgradient():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(ad.relu(x))
    assert tape.backward(loss, [x])[x].tolist() == [0.0, 1.0]


def test_non_participating_parameter_gets_zeros(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    unused = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(x)
    grads = tape.backward(loss, [x, unused])
    assert grads[unused].shape == (2, 2) and (grads[unused] == 0).all()


def test_non_scalar_loss_rejected(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with Tape() as tape:
        y = ad.relu(x)
    with pytest.raises(ShapeError):
        tape.backward(y)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_trips():
    with pytest.raises(FloatingPointError):
        ad.mul(Tensor([1e30]), Tensor([1e30]))


def test_shape_mismatches():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        ad.softmax_cross_entropy(Tensor(np.zeros(3)), 3)


def test_gather_sentinel_is_zero_and_routes_no_gradient(rng):
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    with Tape() as tape:
        g = ad.gather_rows(x, [0, 4, 4, 2])
        loss = ad.sum_all(g)
    assert (g.data[1:3] == 0).all()
    grad = tape.backward(loss, [x])[x]
    assert grad[:, 0].tolist() == [1, 0, 1, 0]


def test_scatter_then_gather_singletons_is_identity(rng):
    x = Tensor(rng.normal(size=(5, 2)))
    out = ad.gather_rows(ad.scatter_mean(x, np.arange(5)), np.arange(5))
    assert np.array_equal(out.data, x.data)


def test_scatter_mean_values():
    x = Tensor(np.array([[1.0], [3.0], [10.0]]))
    assert ad.scatter_mean(x, [1, 1, 0]).data.ravel().tolist() == [10.0, 2.0]


def test_group_norm_statistics(rng):
    x = Tensor(rng.normal(3.0, 4.0, size=(32, 50)))
    out = ad.group_norm(x, 16, Tensor(np.ones(32)), Tensor(np.zeros(32))).data.reshape(16, -1)
    assert np.abs(out.mean(axis=1)).max() < 1e-5
    assert np.abs(out.var(axis=1) - 1).max() < 1e-5


def test_group_count_falls_back_to_divisor():
    assert ad.effective_groups(32, 16) == 16
    assert ad.effective_groups(12, 16) == 12
    assert ad.effective_groups(20, 16) == 10
    assert ad.effective_groups(7, 16) == 7
    assert ad.effective_groups(14, 4) == 2


def test_float32_default_and_float64_mode():
    assert Tensor([1.0]).data.dtype == np.float32
    with ad.precision(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32


def test_forward_is_deterministic(rng):
    w = rng.normal(size=(8, 6)).astype(np.float32)
    x = rng.normal(size=(6, 20)).astype(np.float32)
    a = ad.relu(ad.matmul(Tensor(w), Tensor(x))).data
    b = ad.relu(ad.matmul(Tensor(w), Tensor(x))).data
    assert a.tobytes() == b.tobytes()


def test_independent_tapes_on_threads(rng):
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    xs = [rng.normal(size=3) for _ in range(4)]
    results = [None] * 4

    def work(i):
        with Tape() as tape:
            loss = ad.sum_all(ad.relu(ad.matmul(w, Tensor(xs[i]))))
        results[i] = tape.backward(loss, [w])[w]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for i in range(4):
        with Tape() as tape:
            loss = ad.sum_all(ad.relu(ad.matmul(w, Tensor(xs[i]))))
        assert np.array_equal(results[i], tape.backward(loss, [w])[w])


# -------------------------------------------------------- finite differences

@pytest.fixture
def f64():
    with ad.precision(np.float64):
        yield


def test_grad_add_sub_mul(f64, rng):
    a, b = t64(rng, 3, 4), t64(rng, 3, 4)
    bias = t64(rng, 4)
    err = check_gradients(lambda: ad.sum_all(ad.mul(ad.sub(ad.add(a, bias), b), a)), [a, b, bias])
    assert err < TOL


def test_grad_abs_relu(f64, rng):
    x = away_from_zero(rng, 4, 3)
    w = t64(rng, 4, 3)
    assert check_gradients(lambda: ad.sum_all(ad.mul(ad.abs(x), ad.relu(ad.mul(x, w)))), [x, w]) < TOL


def test_grad_shapes(f64, rng):
    x, y = t64(rng, 2, 3, 4), t64(rng, 2, 3, 4)
    w = t64(rng, 2, 4, 6)

    def loss():
        s = ad.stack([x, y], axis=-1)            # (2, 3, 4, 2)
        tr = ad.transpose(s, (1, 0, 3, 2))        # (3, 2, 2, 4)
        r = ad.reshape(tr, (2, 2, 3, 4))
        c = ad.concat([ad.reshape(r, (4, 12)), ad.reshape(w, (4, 12))], axis=0)
        return ad.sum_all(ad.mul(c, c))

    assert check_gradients(loss, [x, y, w]) < TOL


def test_grad_gather_scatter(f64, rng):
    x = t64(rng, 5, 3)
    w = t64(rng, 3, 3)
    idx = np.array([0, 5, 2, 2, 4, 5, 1])
    groups = np.array([0, 1, 1, 2, 0, 2, 1])

    def loss():
        g = ad.gather_rows(x, idx)
        s = ad.scatter_mean(g, groups, 3)
        return ad.sum_all(ad.mul(s, w))

    assert check_gradients(loss, [x, w]) < TOL


def test_grad_sparse_mix(f64, rng):
    x = t64(rng, 3, 6)
    m = sp.random(6, 4, density=0.5, random_state=3, format="csr")
    w = t64(rng, 3, 4)
    assert check_gradients(lambda: ad.sum_all(ad.mul(ad.sparse_mix(x, m), w)), [x, w]) < TOL


def test_grad_mean_matmul_linear(f64, rng):
    a = t64(rng, 4, 5)
    b = t64(rng, 5, 3)
    v = t64(rng, 4)
    w = t64(rng, 2, 4)
    bias = t64(rng, 2)

    def loss():
        h = ad.mean_over_axis(ad.matmul(a, b), 1)  # (4,)
        out = ad.linear(w, ad.mul(h, v), bias)
        return ad.sum_all(ad.mul(out, out))

    assert check_gradients(loss, [a, b, v, w, bias]) < TOL


def test_grad_group_norm(f64, rng):
    x = t64(rng, 8, 6)
    gamma, beta = t64(rng, 8), t64(rng, 8)
    w = t64(rng, 8, 6)
    assert check_gradients(lambda: ad.sum_all(ad.mul(ad.group_norm(x, 4, gamma, beta), w)), [x, gamma, beta]) < TOL


@pytest.mark.parametrize("shape,target", [((5,), 3), ((4, 7), np.array([0, 3, 1, 1, 2, 0, 3]))])
def test_grad_cross_entropy(f64, rng, shape, target):
    z = t64(rng, *shape)
    assert check_gradients(lambda: ad.softmax_cross_entropy(z, target), [z]) < TOL


def test_grad_two_layer_net(f64, rng):
    x = Tensor(rng.normal(size=6), dtype=np.float64)
    w1, b1 = t64(rng, 10, 6), t64(rng, 10)
    w2, b2 = t64(rng, 3, 10), t64(rng, 3)

    def loss():
        h = ad.relu(ad.linear(w1, x, b1))
        return ad.softmax_cross_entropy(ad.linear(w2, h, b2), 1)

    assert check_gradients(loss, [w1, b1, w2, b2]) < TOL


def test_tape_records_in_order(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with Tape() as tape:
        a = ad.relu(x)
        b = ad.sum_all(a)
    assert [n.out for n in tape.nodes] == [a, b]


def test_constants_are_not_recorded(rng):
    with Tape() as tape:
        ad.relu(Tensor(rng.normal(size=3)))
    assert tape.nodes == []
