import numpy as np
import pytest

from pcpg_seq2seq.errors import ShapeError
from pcpg_seq2seq.grad_core import Tape, constant, parameter
from pcpg_seq2seq.gradcheck import numeric_gradient, relative_error


def test_sigmoid_of_zero():
    assert Tape().sigmoid(constant([0.0])).data[0] == 0.5


def test_sigmoid_is_stable_for_large_inputs():
    out = Tape().sigmoid(constant([-800.0, 800.0])).data
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_log_softmax_symmetric():
    out = Tape().log_softmax(constant([3.0, 3.0])).data
    np.testing.assert_allclose(out, [-np.log(2.0), -np.log(2.0)])


def test_sum_gradient_is_ones():
    x = parameter(np.arange(6.0).reshape(2, 3))
    tape = Tape()
    grads = tape.backward(tape.sum(x))
    np.testing.assert_array_equal(grads[x], np.ones((2, 3)))


def test_square_gradient():
    x = parameter([1.0, -2.0, 0.5])
    tape = Tape()
    grads = tape.backward(tape.sum(tape.mul(x, x)))
    np.testing.assert_array_equal(grads[x], 2 * x.data)


def test_matmul_matches_finite_differences():
    rng = np.random.default_rng(0)
    a, b = parameter(rng.normal(size=(4, 5))), parameter(rng.normal(size=(5, 3)))
    weights = constant(rng.normal(size=(4, 3)))

    def loss(tape):
        return tape.sum(tape.mul(tape.matmul(a, b), weights))

    tape = Tape()
    grads = tape.backward(loss(tape))
    for leaf in (a, b):
        numeric = numeric_gradient(lambda: loss(Tape(False)).item(), leaf.data, 1e-6)
        assert relative_error(grads[leaf], numeric) < 1e-7


def test_gradient_accumulates_over_reuse():
    x = parameter([2.0])
    tape = Tape()
    y = tape.add(tape.mul(x, x), x)
    grads = tape.backward(tape.sum(y))
    np.testing.assert_allclose(grads[x], [5.0])


def test_backward_is_deterministic():
    rng = np.random.default_rng(1)
    w = parameter(rng.normal(size=(3, 3)))
    tape = Tape()
    out = tape.sum(tape.tanh(tape.matmul(constant(rng.normal(size=(2, 3))), w)))
    first, second = tape.backward(out), tape.backward(out)
    np.testing.assert_array_equal(first[w], second[w])


def test_backward_requires_scalar():
    x = parameter([1.0, 2.0])
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.backward(tape.tanh(x))


def test_backward_rejects_foreign_loss():
    x = parameter([1.0])
    other = Tape()
    loss = other.sum(x)
    with pytest.raises(ValueError):
        Tape().backward(loss)


@pytest.mark.parametrize(
    "build",
    [
        lambda t: t.matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3)))),
        lambda t: t.add(constant(np.ones(3)), constant(np.ones(4))),
        lambda t: t.mul(constant(np.ones(2)), constant(np.ones(3))),
        lambda t: t.reshape(constant(np.ones(6)), (4, 2)),
        lambda t: t.concat([constant(np.ones((2, 2)))]),
    ],
)
def test_shape_errors_name_the_primitive(build):
    with pytest.raises(ShapeError) as excinfo:
        build(Tape())
    assert excinfo.value.primitive in str(excinfo.value)


def test_disabled_tape_records_nothing():
    tape = Tape(enabled=False)
    out = tape.tanh(parameter([0.3]))
    assert len(tape) == 0
    assert not out.requires_grad


def test_constants_are_not_recorded():
    tape = Tape()
    tape.tanh(constant([0.3]))
    assert len(tape) == 0
