import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpulstm.tile import quantize_vector


def test_endpoints_and_zero_are_exact_levels():
    out = quantize_vector(np.array([0.0, 1.0, -1.0]), bits=5, mode="nearest")
    assert np.array_equal(out, np.array([0.0, 1.0, -1.0]))


def test_half_step_rounds_away_from_zero():
    # 0.1 / (1/15) = 1.5 -> code 2
    out = quantize_vector(np.array([0.1]), bits=5, mode="nearest")
    assert out[0] == pytest.approx(2.0 / 15.0, abs=1e-15)
    out = quantize_vector(np.array([-0.1]), bits=5, mode="nearest")
    assert out[0] == pytest.approx(-2.0 / 15.0, abs=1e-15)


def test_nearest_error_bounded_by_half_step():
    v = np.linspace(-1.0, 1.0, 200_001)
    for bits in (2, 5, 9):
        step = 1.0 / (2 ** (bits - 1) - 1)
        out = quantize_vector(v, bits=bits, mode="nearest")
        assert np.max(np.abs(out - v)) <= step / 2 + 1e-15


def test_stochastic_rounding_is_unbiased_at_a_half_step():
    rng = np.random.default_rng(11)
    v = np.full(1_000_000, 0.1)
    out = quantize_vector(v, bits=5, mode="stochastic", rng=rng)
    levels = np.unique(out)
    assert np.allclose(levels, [1.0 / 15.0, 2.0 / 15.0])
    assert abs(out.mean() - 0.1) < 5e-4


@pytest.mark.parametrize("probe", [-0.97, -0.5, -0.123, -0.03, 0.0, 0.011, 0.2, 0.5, 0.777, 0.99])
def test_stochastic_rounding_unbiased_on_probe_points(probe):
    rng = np.random.default_rng(hash(probe) & 0xFFFF)
    out = quantize_vector(np.full(1_000_000, probe), bits=5, mode="stochastic", rng=rng)
    assert abs(out.mean() - probe) < 5e-4


def test_bits_zero_bypasses():
    v = np.array([0.123456, -0.9])
    out = quantize_vector(v, bits=0, mode="nearest")
    assert np.array_equal(out, v)
    out[0] = 0.0  # bypass still copies
    assert v[0] == 0.123456


def test_bits_one_rejected():
    with pytest.raises(ValueError):
        quantize_vector(np.array([0.1]), bits=1)


def test_out_of_range_rejected_beyond_tolerance():
    with pytest.raises(ValueError):
        quantize_vector(np.array([1.0 + 1e-9]), bits=5)
    # within tolerance is clamped, not an error
    out = quantize_vector(np.array([1.0 + 1e-13]), bits=5)
    assert out[0] == 1.0


def test_stochastic_mode_requires_rng():
    with pytest.raises(ValueError):
        quantize_vector(np.array([0.1]), bits=5, mode="stochastic")


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        quantize_vector(np.array([0.1]), bits=5, mode="truncate")


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=1, max_size=16),
    bits=st.sampled_from([2, 3, 5, 9, 16]),
    mode=st.sampled_from(["nearest", "stochastic"]),
    seed=st.integers(0, 2**31),
)
def test_outputs_stay_inside_unit_range_on_exact_levels(values, bits, mode, seed):
    v = np.array(values)
    out = quantize_vector(v, bits=bits, mode=mode, rng=np.random.default_rng(seed))
    assert np.all(out >= -1.0) and np.all(out <= 1.0)
    # outputs are exact quantizer levels
    levels = 2 ** (bits - 1) - 1
    codes = out * levels
    assert np.allclose(codes, np.round(codes), atol=1e-9)
