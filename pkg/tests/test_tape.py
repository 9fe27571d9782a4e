import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greybox.errors import ContractError
from greybox.nncore.tape import Tape, loss_gradient, replay


def test_square_gradient():
    # d/dp p^2 at p=3 is 6
    tape = Tape()
    p = tape.parameter([[3.0]])
    loss = tape.apply("mul", p, p)
    grad = loss_gradient(tape, loss)
    assert grad == pytest.approx([6.0])


def test_softplus_gradient_at_zero():
    tape = Tape()
    p = tape.parameter([[0.0]])
    loss = tape.apply("softplus", p)
    assert float(tape.values[loss]) == pytest.approx(np.log(2.0))
    assert loss_gradient(tape, loss) == pytest.approx([0.5])


def test_gradient_zero_for_unused_parameter():
    tape = Tape()
    p = tape.parameter([[2.0]])
    q = tape.parameter([[5.0]])
    loss = tape.apply("mul", p, p)
    grad = loss_gradient(tape, loss)
    assert grad == pytest.approx([4.0, 0.0])
    assert q in tape.param_ids


def test_loss_must_be_scalar():
    tape = Tape()
    p = tape.parameter(np.ones((1, 3)))
    out = tape.apply("scale", p, aux=2.0)
    with pytest.raises(ContractError):
        loss_gradient(tape, out)


def _random_expression(tape, rng):
    """A small composite expression touching every primitive."""
    w = tape.parameter(rng.standard_normal((3, 2)))
    b = tape.parameter(rng.standard_normal((1, 2)))
    x = tape.constant(rng.standard_normal((4, 3)))
    y = tape.apply("affine", x, w, b)
    y = tape.apply("softplus", y)
    y = tape.apply("mul", y, tape.constant(rng.standard_normal((4, 2))))
    y = tape.apply("add", y, tape.apply("neg", b))
    y = tape.apply("div", y, tape.apply("addc", tape.apply("exp", b), aux=1.5))
    y = tape.apply("hill", tape.apply("addc", y, aux=5.0), aux=(2.0, 1.0))
    y = tape.apply("concat", y, tape.apply("scale", y, aux=0.25))
    y = tape.apply("slice", y, aux=(1, 3))
    y = tape.apply("sub", y, tape.apply("powc", tape.apply("addc", y, aux=3.0),
                                        aux=2.0))
    return tape.apply("mean", y)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    for _ in range(10):
        tape = Tape()
        loss = _random_expression(tape, rng)
        grad = loss_gradient(tape, loss)

        flat0 = np.concatenate([tape.values[p].ravel() for p in tape.param_ids])
        sizes = [tape.values[p].size for p in tape.param_ids]
        shapes = [tape.values[p].shape for p in tape.param_ids]

        # central differences by perturbing the stored leaves and replaying
        eps = 1e-6
        fd = np.zeros_like(flat0)
        for i in range(len(flat0)):
            k, acc = 0, 0.0
            for sign in (1.0, -1.0):
                saved = [tape.values[p].copy() for p in tape.param_ids]
                k = 0
                for pid, size, shape in zip(tape.param_ids, sizes, shapes):
                    block = flat0[k:k + size].copy()
                    if k <= i < k + size:
                        block[i - k] += sign * eps
                    tape.values[pid] = block.reshape(shape)
                    k += size
                vals = replay(tape)
                acc += sign * float(vals[loss][0, 0])
                for pid, s in zip(tape.param_ids, saved):
                    tape.values[pid] = s
            fd[i] = acc / (2 * eps)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-5


def test_replay_is_bit_identical():
    rng = np.random.default_rng(7)
    tape = Tape()
    loss = _random_expression(tape, rng)
    values = replay(tape)
    for nid in range(len(tape)):
        assert np.array_equal(values[nid], tape.values[nid])
    assert float(values[loss][0, 0]) == float(tape.values[loss][0, 0])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-3.0, max_value=3.0,
                 allow_nan=False, allow_infinity=False))
def test_adjoint_linearity(a):
    # gradient of a*loss equals a*gradient of loss
    rng = np.random.default_rng(3)
    tape = Tape()
    loss = _random_expression(tape, rng)
    g1 = loss_gradient(tape, loss)
    scaled = tape.apply("scale", loss, aux=a)
    g2 = loss_gradient(tape, scaled)
    assert np.allclose(g2, a * g1, rtol=0, atol=1e-12 * max(1.0, abs(a)))


def test_broadcast_adjoint_sums_over_batch():
    tape = Tape()
    p = tape.parameter([[1.0, 2.0]])        # (1, 2) broadcast over batch
    x = tape.constant(np.ones((5, 2)))
    loss = tape.apply("mean", tape.apply("mul", p, x))
    grad = loss_gradient(tape, loss)
    assert grad == pytest.approx([0.5, 0.5])
