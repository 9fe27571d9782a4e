import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greybox.embedding import (EmbeddingSpec, HistoryBuffer, delayed_blocks,
                               embed_at, embed_interpolated)
from greybox.errors import ColdStartError, ContractError


def _ramp_buffer(n=20, t_s=1.0):
    # scalar input u(t) = 10 + t, scalar state x(t) = t
    t = np.arange(n) * t_s
    return HistoryBuffer.from_array(0.0, t_s, np.column_stack([10.0 + t, t]))


def test_spec_validation():
    with pytest.raises(ContractError):
        EmbeddingSpec(delay=2.5, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    with pytest.raises(ContractError):
        EmbeddingSpec(delay=-1.0, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    spec = EmbeddingSpec(delay=10.0, dimension=5, n_states=1, n_inputs=1, t_s=1.0)
    assert spec.delay_steps == 10
    assert spec.embedded_length == 10
    assert spec.history_steps == 40


def test_constant_series_embeds_to_repeats():
    data = np.tile([[2.0, -1.0, 0.5]], (15, 1))
    buf = HistoryBuffer.from_array(0.0, 1.0, data)
    spec = EmbeddingSpec(delay=3.0, dimension=4, n_states=2, n_inputs=1, t_s=1.0)
    z = embed_at(buf, spec, 14.0)
    assert np.array_equal(z, np.tile([2.0, -1.0, 0.5], 4))


def test_linear_ramp_example():
    # t_s=1, tau=2, d=3, scalar z(t) = t: z_e(4) = [4, 2, 0]
    t = np.arange(10, dtype=float)
    buf = HistoryBuffer.from_array(0.0, 1.0, t[:, None])
    spec = EmbeddingSpec(delay=2.0, dimension=3, n_states=1, n_inputs=0, t_s=1.0)
    assert np.array_equal(embed_at(buf, spec, 4.0), [4.0, 2.0, 0.0])


def test_mm_configuration_layout():
    # tau=10 s, d=5, one state + one input: length 10, lookups at t-0..t-40
    spec = EmbeddingSpec(delay=10.0, dimension=5, n_states=1, n_inputs=1, t_s=1.0)
    t = np.arange(60, dtype=float)
    buf = HistoryBuffer.from_array(0.0, 1.0, np.column_stack([t, 100 + t]))
    z = embed_at(buf, spec, 50.0)
    assert z.shape == (10,)
    assert np.array_equal(z[0::2], [50.0, 40.0, 30.0, 20.0, 10.0])
    assert np.array_equal(z[1::2], [150.0, 140.0, 130.0, 120.0, 110.0])


def test_cold_start_error_carries_earliest_feasible_t():
    spec = EmbeddingSpec(delay=2.0, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    buf = _ramp_buffer(20)
    with pytest.raises(ColdStartError) as err:
        embed_at(buf, spec, 3.0)
    assert err.value.earliest_feasible_t == pytest.approx(4.0)
    embed_at(buf, spec, 4.0)  # boundary is feasible


def test_off_grid_time_rejected():
    spec = EmbeddingSpec(delay=2.0, dimension=2, n_states=1, n_inputs=1, t_s=1.0)
    with pytest.raises(ContractError):
        embed_at(_ramp_buffer(), spec, 5.3)


def test_interpolated_exact_on_linear_signals():
    spec = EmbeddingSpec(delay=2.0, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    buf = _ramp_buffer(20)
    for delta in (0.25, 0.5, 1.0):
        t = 10.0
        z = embed_interpolated(buf, spec, t, delta, np.array([t + delta]))
        # blocks: [u(t), x(t+d)], then exact delayed values of the ramp
        expect = [10.0 + t, t + delta,
                  10.0 + t + delta - 2.0, t + delta - 2.0,
                  10.0 + t + delta - 4.0, t + delta - 4.0]
        assert np.allclose(z, expect, rtol=0, atol=1e-12)


def test_interpolated_endpoint_matches_embed_at():
    spec = EmbeddingSpec(delay=3.0, dimension=3, n_states=2, n_inputs=1, t_s=1.0)
    rng = np.random.default_rng(0)
    buf = HistoryBuffer.from_array(0.0, 1.0, rng.standard_normal((25, 3)))
    t = 20.0
    true_next = buf.rows[21, 1:]
    z_interp = embed_interpolated(buf, spec, t, 1.0, true_next)
    z_next = embed_at(buf, spec, 21.0)
    c = spec.n_channels
    # delayed blocks coincide exactly; block 0 differs only in u, which is
    # held at u(t) over the step
    assert np.array_equal(z_interp[c:], z_next[c:])
    assert np.array_equal(z_interp[spec.n_inputs:c], z_next[spec.n_inputs:c])
    assert np.array_equal(z_interp[:spec.n_inputs], buf.rows[20, :1])


def test_interpolation_error_bound_on_cubic():
    # |linear interp error| <= max|f''| * t_s^2 / 8 for smooth signals
    t_s = 0.5
    n = 40
    t = np.arange(n) * t_s
    f = 0.3 * t ** 3 - t ** 2 + 2.0 * t   # f'' = 1.8 t - 2
    buf = HistoryBuffer.from_array(0.0, t_s, f[:, None])
    spec = EmbeddingSpec(delay=2.0, dimension=4, n_states=1, n_inputs=0, t_s=t_s)
    t0, delta = 15.0, t_s / 2
    z = embed_interpolated(buf, spec, t0, delta, np.array([0.0]))
    for j in range(1, 4):
        tj = t0 + delta - j * 2.0
        exact = 0.3 * tj ** 3 - tj ** 2 + 2.0 * tj
        bound = np.abs(1.8 * t).max() * t_s ** 2 / 8.0
        assert abs(z[j] - exact) <= bound + 1e-12


def test_delta_contract():
    spec = EmbeddingSpec(delay=2.0, dimension=2, n_states=1, n_inputs=1, t_s=1.0)
    buf = _ramp_buffer()
    with pytest.raises(ContractError):
        embed_interpolated(buf, spec, 10.0, 0.0, np.array([0.0]))
    with pytest.raises(ContractError):
        embed_interpolated(buf, spec, 10.0, 1.5, np.array([0.0]))


def test_interpolated_converges_to_embed_at_as_delta_vanishes():
    spec = EmbeddingSpec(delay=2.0, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    rng = np.random.default_rng(1)
    buf = HistoryBuffer.from_array(0.0, 1.0, rng.standard_normal((20, 2)))
    t = 12.0
    z0 = embed_at(buf, spec, t)
    x_now = buf.rows[12, 1:]
    for delta in (1e-3, 1e-6, 1e-9):
        z = embed_interpolated(buf, spec, t, delta, x_now)
        assert np.abs(z - z0).max() < 10 * delta


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(3)))
def test_channel_permutation_equivariance(perm):
    # permuting the u-channels of the data permutes the output blocks the
    # same way and changes nothing else
    rng = np.random.default_rng(42)
    data = rng.standard_normal((30, 5))  # 3 inputs + 2 states
    spec = EmbeddingSpec(delay=2.0, dimension=3, n_states=2, n_inputs=3, t_s=1.0)
    buf = HistoryBuffer.from_array(0.0, 1.0, data)
    z = embed_at(buf, spec, 25.0)

    perm = list(perm)
    data_p = data.copy()
    data_p[:, :3] = data[:, perm]
    buf_p = HistoryBuffer.from_array(0.0, 1.0, data_p)
    z_p = embed_at(buf_p, spec, 25.0)
    for block in range(3):
        base = block * 5
        assert np.array_equal(z_p[base:base + 3], z[base:base + 3][perm])
        assert np.array_equal(z_p[base + 3:base + 5], z[base + 3:base + 5])


def test_no_reads_outside_window():
    # changing samples strictly older than t-(d-1)tau leaves the result alone
    spec = EmbeddingSpec(delay=3.0, dimension=3, n_states=1, n_inputs=1, t_s=1.0)
    rng = np.random.default_rng(5)
    data = rng.standard_normal((30, 2))
    t = 25.0
    z1 = embed_at(HistoryBuffer.from_array(0.0, 1.0, data), spec, t)
    tampered = data.copy()
    tampered[:19] = 999.0  # window starts at index 19 = 25 - 6
    z2 = embed_at(HistoryBuffer.from_array(0.0, 1.0, tampered), spec, t)
    assert np.array_equal(z1, z2)


def test_batched_delayed_blocks_match_scalar_api():
    spec = EmbeddingSpec(delay=2.0, dimension=4, n_states=2, n_inputs=1, t_s=1.0)
    rng = np.random.default_rng(9)
    data = rng.standard_normal((40, 3))
    buf = HistoryBuffer.from_array(0.0, 1.0, data)
    idx = np.array([10, 17, 33])
    for delta in (0.0, 0.5, 1.0):
        batch = delayed_blocks(data, idx, spec, delta)
        for row, i in enumerate(idx):
            if delta == 0.0:
                ref = embed_at(buf, spec, float(i))[3:]
            else:
                ref = embed_interpolated(buf, spec, float(i), delta,
                                         np.zeros(2))[3:]
            assert np.allclose(batch[row], ref, rtol=0, atol=0)


def test_buffer_append_and_copy_isolation():
    buf = HistoryBuffer(0.0, 1.0, 2, capacity=2)
    for k in range(5):
        buf.append(np.array([k, k + 0.5]))
    assert len(buf) == 5
    assert buf.t_last == 4.0
    clone = buf.copy()
    clone.append(np.array([9.0, 9.0]))
    assert len(buf) == 5 and len(clone) == 6
