import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greybox.errors import ContractError, ShapeError
from greybox.nncore import (MlpParams, MlpSpec, Tape, glorot_init,
                            load_checkpoint, loss_gradient, mlp_forward,
                            mlp_on_tape, register_mlp, save_checkpoint)
from greybox.rng import SplitMix64


def test_zero_params_give_zero_output():
    spec = MlpSpec(3, (4, 4), 2)
    params = MlpParams.unflatten(spec, np.zeros(spec.n_params))
    out = mlp_forward(spec, params, np.array([0.7, -1.2, 3.0]))
    assert out == pytest.approx([0.0, 0.0])


def test_single_neuron_softplus_identity():
    # unit weights, zero biases, x = 0: softplus(0) = ln 2 through a unit
    # linear layer
    spec = MlpSpec(1, (1,), 1)
    params = MlpParams([np.ones((1, 1)), np.ones((1, 1))],
                       [np.zeros(1), np.zeros(1)])
    out = mlp_forward(spec, params, np.array([0.0]))
    assert out == pytest.approx([np.log(2.0)])


def _straight_line_forward(spec, params, x):
    """Independent re-evaluation of the affine/softplus chain."""
    h = x
    for i in range(len(params.weights)):
        h = h @ params.weights[i] + params.biases[i]
        if i < len(params.weights) - 1:
            h = np.log1p(np.exp(-np.abs(h))) + np.maximum(h, 0.0)
    return h


def test_forward_matches_straight_line_oracle():
    rng = SplitMix64(99)
    nprng = np.random.default_rng(5)
    for _ in range(20):
        dims = nprng.integers(1, 6, size=nprng.integers(2, 5))
        spec = MlpSpec(int(dims[0]), tuple(int(d) for d in dims[1:-1]),
                       int(dims[-1]))
        params = glorot_init(spec, rng)
        x = nprng.standard_normal((3, spec.input_dim))
        assert np.allclose(mlp_forward(spec, params, x),
                           _straight_line_forward(spec, params, x),
                           rtol=1e-12, atol=1e-12)


def test_dimension_mismatch_names_layer():
    spec = MlpSpec(3, (4,), 2)
    params = glorot_init(spec, SplitMix64(1))
    params.weights[1] = np.zeros((5, 2))
    with pytest.raises(ShapeError, match="layer 1"):
        mlp_forward(spec, params, np.zeros(3))


def test_wrong_input_width_rejected():
    spec = MlpSpec(3, (4,), 2)
    params = glorot_init(spec, SplitMix64(1))
    with pytest.raises(ShapeError):
        mlp_forward(spec, params, np.zeros(4))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 63 - 1))
def test_flatten_unflatten_round_trip(seed):
    spec = MlpSpec(4, (3, 5), 2)
    params = glorot_init(spec, SplitMix64(seed))
    again = MlpParams.unflatten(spec, params.flatten())
    for w1, w2 in zip(params.weights, again.weights):
        assert np.array_equal(w1, w2)
    for b1, b2 in zip(params.biases, again.biases):
        assert np.array_equal(b1, b2)


def test_flat_length_matches_spec():
    spec = MlpSpec(10, (20, 20, 20), 1)
    assert spec.n_params == 10 * 20 + 20 + 20 * 20 + 20 + 20 * 20 + 20 + 20 + 1
    params = glorot_init(spec, SplitMix64(0))
    assert params.flatten().size == spec.n_params


def test_init_is_seed_deterministic_and_bounded():
    spec = MlpSpec(6, (8,), 3)
    a = glorot_init(spec, SplitMix64(77)).flatten()
    b = glorot_init(spec, SplitMix64(77)).flatten()
    assert np.array_equal(a, b)
    for (fi, fo), w in zip(spec.layer_shapes(),
                           glorot_init(spec, SplitMix64(3)).weights):
        assert np.abs(w).max() <= np.sqrt(6.0 / (fi + fo))


def test_tape_forward_matches_plain_forward():
    spec = MlpSpec(5, (7, 6), 2)
    params = glorot_init(spec, SplitMix64(11))
    x = np.random.default_rng(2).standard_normal((4, 5))
    tape = Tape()
    out = mlp_on_tape(tape, spec, register_mlp(tape, params),
                      tape.constant(x))
    assert np.allclose(tape.values[out], mlp_forward(spec, params, x),
                       rtol=0, atol=0)


def test_mlp_gradient_matches_central_differences():
    rng = SplitMix64(4)
    nprng = np.random.default_rng(8)
    spec = MlpSpec(4, (5, 3), 2)
    params = glorot_init(spec, rng)
    x = nprng.standard_normal((6, 4))
    target = nprng.standard_normal((6, 2))

    def loss_of(flat):
        p = MlpParams.unflatten(spec, flat)
        err = mlp_forward(spec, p, x) - target
        return float(np.mean(err * err))

    tape = Tape()
    out = mlp_on_tape(tape, spec, register_mlp(tape, params),
                      tape.constant(x))
    diff = tape.apply("sub", out, tape.constant(target))
    loss = tape.apply("mean", tape.apply("mul", diff, diff))
    grad = loss_gradient(tape, loss)

    flat0 = params.flatten()
    eps = 1e-6
    fd = np.zeros_like(flat0)
    for i in range(len(flat0)):
        up, down = flat0.copy(), flat0.copy()
        up[i] += eps
        down[i] -= eps
        fd[i] = (loss_of(up) - loss_of(down)) / (2 * eps)
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
    assert rel.max() < 1e-5


def test_checkpoint_round_trip(tmp_path):
    spec = MlpSpec(3, (4,), 2)
    params = glorot_init(spec, SplitMix64(123))
    path = tmp_path / "net.txt"
    save_checkpoint(path, spec, params)
    spec2, params2 = load_checkpoint(path)
    assert spec2 == spec
    assert np.array_equal(params.flatten(), params2.flatten())
    header = path.read_text().splitlines()[0]
    assert header == "mlp 3 4 2"


def test_spec_validation():
    with pytest.raises(ContractError):
        MlpSpec(0, (3,), 1)
    with pytest.raises(ContractError):
        MlpSpec(2, (3,), 1, hidden_activation="relu")
