import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelf.field import autodiff as ad
from nelf.field.autodiff import Tape


def _fd_check(fn, params, coords, h=1e-6, tol=1e-6):
    _, grads = ad.grad_dict(fn, params)
    for name, idx in coords:
        fd = ad.finite_difference(fn, params, name, idx, h)
        g = grads[name][idx]
        assert abs(fd - g) / max(abs(fd), abs(g), 1e-8) < tol, (name, idx, fd, g)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_elementwise_chain_gradients(seed):
    rng = np.random.default_rng(seed)
    params = {"a": rng.standard_normal((4, 5)), "b": rng.standard_normal((4, 5))}

    def fn(tape, p):
        x = ad.mul(p["a"], p["b"])
        y = ad.add(x, ad.exp(ad.mul(p["a"], 0.3)))
        z = ad.sub(y, ad.softplus(p["b"]))
        return ad.vsum(ad.mul(z, z))

    _fd_check(fn, params, [("a", (0, 0)), ("a", (3, 4)), ("b", (2, 2))])


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_matmul_affine_gradients(seed):
    rng = np.random.default_rng(seed)
    params = {
        "x": rng.standard_normal((3, 4)),
        "w": rng.standard_normal((4, 2)),
        "b": rng.standard_normal(2),
    }

    def fn(tape, p):
        return ad.vsum(ad.sigmoid(ad.affine(p["x"], p["w"], p["b"])))

    _fd_check(fn, params, [("x", (1, 2)), ("w", (3, 1)), ("b", (0,))])


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_softmax_gradients(seed):
    rng = np.random.default_rng(seed)
    params = {"l": rng.standard_normal((4, 3))}
    w = rng.standard_normal((4, 3))

    def fn(tape, p):
        return ad.vsum(ad.mul(ad.softmax(p["l"], axis=0), w))

    _fd_check(fn, params, [("l", (0, 0)), ("l", (2, 1)), ("l", (3, 2))])


def test_broadcasting_unbroadcast():
    rng = np.random.default_rng(0)
    params = {"col": rng.standard_normal((4, 1)), "row": rng.standard_normal((1, 5))}

    def fn(tape, p):
        return ad.vsum(ad.mul(p["col"], p["row"]))

    _, grads = ad.grad_dict(fn, params)
    assert grads["col"].shape == (4, 1)
    assert grads["row"].shape == (1, 5)
    _fd_check(fn, params, [("col", (2, 0)), ("row", (0, 3))])


def test_reductions_and_reshape():
    rng = np.random.default_rng(1)
    params = {"a": rng.standard_normal((2, 3, 4))}

    def fn(tape, p):
        m = ad.vmean(p["a"], axis=1)
        s = ad.vsum(ad.reshape(m, (8,)))
        return ad.mul(s, 2.0)

    _fd_check(fn, params, [("a", (0, 1, 2)), ("a", (1, 2, 3))])


def test_getitem_scatter_roundtrip_gradients():
    rng = np.random.default_rng(2)
    params = {"a": rng.standard_normal((6, 3))}
    idx = np.array([1, 4])

    def fn(tape, p):
        picked = p["a"][idx]
        spread = ad.scatter_rows(picked, np.array([0, 2]), 5)
        return ad.vsum(ad.mul(spread, spread))

    _fd_check(fn, params, [("a", (1, 0)), ("a", (4, 2)), ("a", (0, 0))])


def test_concat_gradients():
    rng = np.random.default_rng(3)
    params = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal((3, 4))}

    def fn(tape, p):
        joined = ad.concat([p["a"], p["b"]], axis=1)
        return ad.vsum(ad.softplus(joined))

    _fd_check(fn, params, [("a", (0, 1)), ("b", (2, 3))])


def test_div_and_abs_gradients():
    rng = np.random.default_rng(4)
    params = {"a": rng.standard_normal((5,)) + 3.0, "b": rng.standard_normal((5,)) + 5.0}

    def fn(tape, p):
        return ad.vsum(ad.absolute(ad.div(p["a"], p["b"])))

    _fd_check(fn, params, [("a", (0,)), ("b", (3,))])


def test_reuse_accumulates_gradient():
    params = {"a": np.array([2.0])}

    def fn(tape, p):
        return ad.vsum(ad.mul(p["a"], p["a"]))  # d/da a^2 = 2a

    _, grads = ad.grad_dict(fn, params)
    assert grads["a"][0] == pytest.approx(4.0)


def test_constant_leaves_record_nothing():
    tape = Tape()
    x = tape.constant(np.ones((100, 100)))
    y = ad.relu(ad.mul(x, 2.0))
    z = ad.vsum(y)
    assert len(tape._nodes) == 0
    assert float(z.value) == pytest.approx(20000.0)


def test_backward_visits_each_node_once():
    tape = Tape()
    a = tape.leaf(np.array([1.0, 2.0]), requires_grad=True)
    visits = []
    x = ad.mul(a, 3.0)
    orig = x._vjp

    def counting(g):
        visits.append(1)
        return orig(g)

    x._vjp = counting
    y = ad.add(x, x)
    out = ad.vsum(y)
    tape.backward(out)
    assert len(visits) == 1
    assert np.allclose(a.grad, [6.0, 6.0])


def test_custom_op_composite():
    tape = Tape()
    a = tape.leaf(np.array([1.0, 2.0, 3.0]), requires_grad=True)

    def vjp(g):
        return (2.0 * g * a.value,)

    out = tape.custom(a.value**2, (a,), vjp)
    s = ad.vsum(out)
    tape.backward(s)
    assert np.allclose(a.grad, [2.0, 4.0, 6.0])


def test_softplus_strictly_positive_and_finite():
    x = np.linspace(-50, 50, 10001)
    y = ad.softplus_values(x)
    assert np.all(y > 0)
    assert np.all(np.isfinite(y))
    s = ad.sigmoid_values(x)
    # float64 saturates to exactly 0/1 beyond ~|x| = 37; bounded either way
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))


def test_float32_graph_stays_float32():
    rng = np.random.default_rng(5)
    tape = Tape()
    w = tape.leaf(rng.standard_normal((4, 4)).astype(np.float32), requires_grad=True)
    x = tape.constant(rng.standard_normal((7, 4)).astype(np.float32))
    out = ad.vmean(ad.absolute(ad.mul(ad.relu(ad.matmul(x, w)), 0.5)))
    assert out.value.dtype == np.float32
    tape.backward(out)
    assert w.grad.dtype == np.float32
