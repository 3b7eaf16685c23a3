import math
import zlib

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxyevent import diffcore as dc
from proxyevent.diffcore import Tensor
from proxyevent.diffcore.gradcheck import max_relative_error, numeric_grad

# op name -> (builder of random inputs, function of those tensors)
def _u(rng, *shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


OPS = {
    "add_broadcast": (lambda r: [_u(r, 3, 4), _u(r, 4)], lambda a, b: dc.add(a, b)),
    "sub": (lambda r: [_u(r, 2, 3), _u(r, 2, 3)], lambda a, b: dc.sub(a, b)),
    "mul_broadcast": (lambda r: [_u(r, 3, 1), _u(r, 3, 4)], lambda a, b: dc.mul(a, b)),
    "matmul": (lambda r: [_u(r, 3, 4), _u(r, 4, 2)], lambda a, b: dc.matmul(a, b)),
    "matmul_batched": (lambda r: [_u(r, 2, 3, 4), _u(r, 4, 2)], lambda a, b: dc.matmul(a, b)),
    "matmul_vec": (lambda r: [_u(r, 4), _u(r, 4, 3)], lambda a, b: dc.matmul(a, b)),
    "sigmoid": (lambda r: [_u(r, 5)], dc.sigmoid),
    "gelu": (lambda r: [_u(r, 5)], dc.gelu),
    "softmax": (lambda r: [_u(r, 2, 4)], dc.softmax),
    "log_softmax": (lambda r: [_u(r, 2, 4)], dc.log_softmax),
    "exp": (lambda r: [_u(r, 4)], dc.exp),
    "log": (lambda r: [_u(r, 4, lo=0.5)], dc.log),
    "neg_log": (lambda r: [_u(r, 4, lo=0.1)], dc.neg_log),
    "concat": (lambda r: [_u(r, 2, 3), _u(r, 2, 2)], lambda a, b: dc.concat([a, b], axis=-1)),
    "stack": (lambda r: [_u(r, 3), _u(r, 3)], lambda a, b: dc.stack([a, b])),
    "take": (lambda r: [_u(r, 4, 3)], lambda a: dc.take(a, np.array([0, 2, 2, 3]))),
    "reshape": (lambda r: [_u(r, 2, 6)], lambda a: dc.reshape(a, (3, 4))),
    "transpose": (lambda r: [_u(r, 2, 3, 4)], lambda a: dc.transpose(a, (2, 0, 1))),
    "broadcast_to": (lambda r: [_u(r, 3, 1)], lambda a: dc.broadcast_to(a, (2, 3, 4))),
    "sum_axis": (lambda r: [_u(r, 3, 4)], lambda a: dc.tsum(a, axis=0)),
    "mean": (lambda r: [_u(r, 3, 4)], lambda a: dc.mean(a, axis=1)),
    "cross_entropy": (lambda r: [_u(r, 4)], lambda a: dc.cross_entropy(dc.softmax(a), 2)),
    "bce": (lambda r: [_u(r, 5)], lambda a: dc.binary_cross_entropy(dc.sigmoid(a), np.array([0, 1, 1, 0, 1]))),
}


def op_gradient_error(name: str, rng: np.random.Generator) -> float:
    build, fn = OPS[name]
    inputs = [Tensor(x, requires_grad=True) for x in build(rng)]
    probe_shape = fn(*inputs).shape
    weights = rng.uniform(-1, 1, size=probe_shape)

    def loss():
        return dc.tsum(dc.mul(fn(*inputs), weights))

    dc.reset_tape()
    dc.backward(loss())
    worst = 0.0
    for t in inputs:
        num = numeric_grad(lambda: loss().item(), t.data)
        worst = max(worst, max_relative_error(t.grad, num))
    dc.reset_tape()
    return worst


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    errors = [op_gradient_error(name, rng) for _ in range(100)]
    assert max(errors) < 1e-4


def test_matmul_identity():
    a = Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(dc.matmul(np.eye(2), a).data, a.data)


def test_matmul_grad_of_sum_is_ones():
    b = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    dc.backward(dc.tsum(dc.matmul(np.eye(2), b)))
    np.testing.assert_array_equal(b.grad, np.ones((2, 2)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(dc.DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        dc.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_random_fd():
    rng = np.random.default_rng(3)
    assert op_gradient_error("matmul", rng) < 1e-4


def test_incompatible_add_raises():
    with pytest.raises(dc.DimensionError):
        dc.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_pointwise_basics():
    assert dc.sigmoid(Tensor(0.0)).item() == 0.5
    np.testing.assert_allclose(dc.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def _phi_quadrature(x: float) -> float:
    # independent of erf: integrate the normal density from -inf
    mpmath.mp.dps = 30
    dens = lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi)
    return float(mpmath.quad(dens, [-mpmath.inf, 0, x]))


@pytest.mark.parametrize("x", [-2.0, -1.0, 0.0, 1.0, 2.0])
def test_gelu_matches_quadrature(x):
    expected = x * _phi_quadrature(x)
    assert dc.gelu(Tensor(x)).item() == pytest.approx(expected, abs=1e-14)


def test_cross_entropy_examples():
    assert dc.cross_entropy(Tensor([0.5, 0.5]), 0).item() == pytest.approx(math.log(2))
    assert dc.cross_entropy(Tensor([1.0, 0.0]), 0).item() == 0.0
    assert dc.cross_entropy(Tensor([0.2, 0.3, 0.5]), 2).item() == pytest.approx(-math.log(0.5))


def test_cross_entropy_grad_through_softmax():
    logits = Tensor(np.log([0.2, 0.3, 0.5]), requires_grad=True)
    dc.backward(dc.cross_entropy(dc.softmax(logits), 2))
    num = numeric_grad(lambda: dc.cross_entropy(dc.softmax(logits), 2).item(), logits.data)
    assert max_relative_error(logits.grad, num) < 1e-4
    np.testing.assert_allclose(logits.grad, [0.2, 0.3, -0.5], atol=1e-9)


def test_cross_entropy_errors_and_floor():
    with pytest.raises(IndexError):
        dc.cross_entropy(Tensor([0.5, 0.5]), 2)
    assert dc.cross_entropy(Tensor([1.0, 0.0]), 1).item() == pytest.approx(-math.log(1e-12))


def test_backward_examples():
    x = Tensor(3.0, requires_grad=True)
    dc.backward(dc.mul(x, x))
    assert x.grad == pytest.approx(6.0)
    a = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    v = Tensor([0.3, -0.7], requires_grad=True)
    dc.backward(dc.tsum(dc.matmul(a, v)))
    np.testing.assert_allclose(v.grad, a.sum(axis=0))


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(dc.DimensionError):
        dc.backward(dc.mul(x, 2.0))


def test_backward_accumulates():
    x = Tensor(2.0, requires_grad=True)
    loss = dc.mul(x, x)
    dc.backward(loss)
    dc.backward(loss)
    assert x.grad == pytest.approx(8.0)


def test_backward_is_bitwise_deterministic():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 4))
    x = rng.normal(size=(3, 5))

    def run():
        t = Tensor(w.copy(), requires_grad=True)
        dc.reset_tape()
        dc.backward(dc.tsum(dc.softmax(dc.gelu(dc.matmul(x, t)))[:, 1]))
        return t.grad

    assert run().tobytes() == run().tobytes()


def test_tape_visits_each_node_once():
    x = Tensor([1.0, 2.0], requires_grad=True)
    dc.reset_tape()
    y = dc.mul(x, x)
    z = dc.tsum(dc.add(y, y))
    tape = dc.get_tape()
    assert len(tape) == 3
    for i, node in enumerate(tape.nodes):
        for inp in node.inputs:
            if inp._node is not None:
                assert tape.nodes.index(inp._node) < i
    dc.backward(z)
    np.testing.assert_allclose(x.grad, 4 * x.data)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_are_distributions(x):
    p = dc.softmax(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(-30, 30, allow_nan=False)),
       st.integers(0, 5))
def test_cross_entropy_nonnegative(logits, gold):
    gold = gold % len(logits)
    assert dc.cross_entropy(dc.softmax(Tensor(logits)), gold).item() >= 0.0


def test_outputs_finite_under_extreme_inputs():
    x = Tensor(np.array([-800.0, 0.0, 800.0]), requires_grad=True)
    loss = dc.tsum(dc.neg_log(dc.sigmoid(x)))
    dc.backward(loss)
    assert np.isfinite(loss.data).all() and np.isfinite(x.grad).all()


# ------------------------------------------------------------------ Adam


def test_adam_first_step_is_lr():
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([1.0])
    opt = dc.Adam({"p": p}, lr=0.1)
    opt.step()
    assert p.data[0] - 1.0 == pytest.approx(-0.1, abs=1e-7)
    assert opt.state.step == 1


def test_adam_zero_gradient_leaves_parameter():
    p = Tensor([1.5], requires_grad=True)
    p.grad = np.array([0.0])
    dc.Adam({"p": p}, lr=0.1).step()
    assert abs(p.data[0] - 1.5) < 0.1 * 1e-8


def test_adam_decreases_quadratic():
    p = Tensor([1.0], requires_grad=True)
    opt = dc.Adam({"p": p}, lr=0.1)
    values = [float(p.data[0] ** 2)]
    for _ in range(3):
        opt.zero_grad()
        dc.reset_tape()
        dc.backward(dc.tsum(dc.mul(p, p)))
        opt.step()
        values.append(float(p.data[0] ** 2))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_shape_mismatch():
    p = Tensor([1.0, 2.0], requires_grad=True)
    p.grad = np.ones(3)
    with pytest.raises(dc.DimensionError):
        dc.Adam({"p": p}).step()


# ------------------------------------------------------------------ checkpoint


def test_checkpoint_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(7,)), "c": np.array(np.pi)}
    path = tmp_path / "x.ckpt"
    dc.save_checkpoint(path, tensors, {"note": "hi"})
    loaded, meta = dc.load_checkpoint(path)
    assert meta == {"note": "hi"}
    for k in tensors:
        assert loaded[k].shape == tensors[k].shape
        assert loaded[k].tobytes() == np.asarray(tensors[k], dtype=np.float64).tobytes()
    dc.save_checkpoint(tmp_path / "y.ckpt", loaded, meta)
    assert (tmp_path / "y.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nope")
    with pytest.raises(dc.CheckpointError):
        dc.load_checkpoint(bad)
