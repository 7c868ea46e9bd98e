import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpulstm.device import (
    PRESETS,
    RpuConfig,
    preset_config,
    sample_device_array,
    states_stats,
)


def zero_variation_cfg(**overrides):
    return RpuConfig(dw_min_dtod=0.0, dw_min_ctoc=0.0, asym_dtod=0.0,
                     w_bound_dtod=0.0, **overrides)


def test_baseline_defaults_match_hardware_baseline():
    cfg = RpuConfig()
    assert cfg.bl == 10
    assert cfg.dw_min == 0.001
    assert cfg.dw_min_dtod == 0.30
    assert cfg.dw_min_ctoc == 0.30
    assert cfg.asym_dtod == 0.02
    assert cfg.w_bound == 0.6
    assert cfg.w_bound_dtod == 0.30
    assert cfg.noise_sigma == 0.06
    assert cfg.out_bound == 12.0
    assert cfg.in_bits == 5
    assert cfg.out_bits == 9
    assert cfg.rounding == "nearest"
    assert cfg.states_multiplier == 1.0


@pytest.mark.parametrize("kwargs", [
    {"bl": 0}, {"dw_min": 0.0}, {"dw_min": float("nan")}, {"dw_min_dtod": -0.1},
    {"w_bound": -1.0}, {"noise_sigma": float("inf")}, {"out_bound": 0.0},
    {"in_bits": 1}, {"in_bits": 17}, {"out_bits": -1}, {"rounding": "round"},
    {"states_multiplier": 0.0}, {"out_bound": float("inf")},  # inf needs out_bits=0
])
def test_config_validation_rejects(kwargs):
    with pytest.raises(ValueError):
        RpuConfig(**kwargs)


def test_infinite_bound_allowed_with_adc_off():
    cfg = RpuConfig(out_bound=float("inf"), out_bits=0)
    assert cfg.out_bound == float("inf")


def test_zero_variation_arrays_are_exactly_uniform():
    arr = sample_device_array(2, 3, zero_variation_cfg(), seed=123)
    assert np.all(arr.dw_plus == 0.001)
    assert np.all(arr.dw_minus == 0.001)
    assert np.all(arr.w_max == 0.6)
    assert np.all(arr.w_min == -0.6)


def test_states_multiplier_divides_step():
    arr = sample_device_array(2, 2, zero_variation_cfg(states_multiplier=4.0), seed=0)
    assert np.allclose(arr.dw_minus, 0.00025)
    assert np.allclose(arr.dw_plus, 0.00025)
    # bounds are unaffected by the multiplier
    assert np.all(arr.w_max == 0.6)


def test_sampling_is_deterministic_in_seed():
    a = sample_device_array(17, 9, RpuConfig(), seed=42)
    b = sample_device_array(17, 9, RpuConfig(), seed=42)
    c = sample_device_array(17, 9, RpuConfig(), seed=43)
    for name in ("dw_plus", "dw_minus", "w_max", "w_min"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.dw_plus, c.dw_plus)


def test_baseline_statistics_over_a_million_devices():
    arr = sample_device_array(1000, 1000, RpuConfig(), seed=7)
    # mean step within 1% of 0.001
    assert abs(arr.dw_minus.mean() - 0.001) < 0.01 * 0.001
    # relative step spread 30% +- 1% (lower clip at 3 sigma trims ~0.1%)
    rel_std = arr.dw_minus.std() / arr.dw_minus.mean()
    assert abs(rel_std - 0.30) < 0.01
    # asymmetry ratio spread 2% +- 10% relative (example) and +- 0.002 (invariant)
    ratio_std = (arr.dw_plus / arr.dw_minus).std()
    assert abs(ratio_std - 0.02) < 0.1 * 0.02
    assert abs(ratio_std - 0.02) < 0.002
    # mean up/down ratio is unity
    assert abs((arr.dw_plus / arr.dw_minus).mean() - 1.0) < 1e-3


def test_sampled_arrays_satisfy_physical_invariants():
    arr = sample_device_array(200, 200, RpuConfig(), seed=3)
    assert np.all(arr.dw_plus > 0)
    assert np.all(arr.dw_minus > 0)
    assert np.all(arr.w_min < 0)
    assert np.all(arr.w_max > 0)
    # lower clips
    assert np.all(arr.dw_minus >= 0.1 * 0.001)
    assert np.all(arr.w_max >= 0.1 * 0.6)


def test_device_arrays_are_read_only():
    arr = sample_device_array(3, 3, RpuConfig(), seed=0)
    with pytest.raises(ValueError):
        arr.dw_plus[0, 0] = 1.0


@pytest.mark.parametrize("rows,cols", [(0, 3), (3, 0), (-1, 2)])
def test_invalid_dimensions_rejected(rows, cols):
    with pytest.raises(ValueError):
        sample_device_array(rows, cols, RpuConfig(), seed=0)


def test_states_stats_baseline_and_multiplier():
    base = sample_device_array(4, 4, zero_variation_cfg(), seed=0)
    assert states_stats(base).mean == pytest.approx(1200.0, rel=1e-12)
    x4 = sample_device_array(4, 4, zero_variation_cfg(states_multiplier=4.0), seed=0)
    assert states_stats(x4).mean == pytest.approx(4800.0, rel=1e-12)


def test_states_stats_trivial_case():
    from rpulstm.device import DeviceArray

    arr = DeviceArray(rows=1, cols=1,
                      dw_plus=np.array([[1.0]]), dw_minus=np.array([[1.0]]),
                      w_max=np.array([[1.0]]), w_min=np.array([[-1.0]]))
    summary = states_stats(arr)
    assert summary.mean == summary.min == summary.max == 2.0


def test_presets_cover_the_ablation_grid():
    assert set(PRESETS) == {"baseline", "no-variation", "states4x", "no-asym",
                            "no-asym-states4x"}
    assert preset_config("baseline") == RpuConfig()
    nv = preset_config("no-variation")
    assert nv.dw_min_dtod == nv.dw_min_ctoc == nv.w_bound_dtod == 0.0
    assert nv.asym_dtod == 0.02  # asymmetry stays
    na = preset_config("no-asym")
    assert na.asym_dtod == 0.0 and na.dw_min_dtod == 0.30
    s4 = preset_config("states4x")
    assert s4.states_multiplier == 4.0
    nas4 = preset_config("no-asym-states4x")
    assert nas4.asym_dtod == 0.0 and nas4.states_multiplier == 4.0
    with pytest.raises(ValueError):
        preset_config("no-such-preset")


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 8), cols=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_sampling_is_a_pure_function_of_inputs(rows, cols, seed):
    a = sample_device_array(rows, cols, RpuConfig(), seed)
    b = sample_device_array(rows, cols, RpuConfig(), seed)
    assert np.array_equal(a.dw_plus, b.dw_plus)
    assert np.array_equal(a.w_min, b.w_min)
    assert np.all(a.w_min < 0) and np.all(a.w_max > 0)
