import math

import numpy as np
import pytest

from rpulstm.device import RpuConfig, sample_device_array
from rpulstm.tile import MAX_BOUND_RETRIES, AnalogTile, ManagedResult


def clean_cfg(**overrides):
    """Noiseless, unquantized, unclipped analog config (but still analog)."""
    base = dict(noise_sigma=0.0, in_bits=0, out_bits=0, out_bound=float("inf"),
                dw_min_dtod=0.0, dw_min_ctoc=0.0, asym_dtod=0.0, w_bound_dtod=0.0)
    base.update(overrides)
    return RpuConfig(**base)


def make_tile(w, cfg, seed=0):
    w = np.asarray(w, dtype=np.float64)
    devices = sample_device_array(w.shape[0], w.shape[1], cfg, seed=seed)
    return AnalogTile(w, "analog", cfg, devices, np.random.default_rng(seed))


def ideal_tile(w, w_bound=1.0, **cfg_overrides):
    return make_tile(w, clean_cfg(w_bound=w_bound, **cfg_overrides))


# ---------------------------------------------------------------------------
# analog_mvm


def test_noiseless_identity_scaled_product():
    tile = ideal_tile(0.5 * np.eye(2), out_bound=12.0)
    y = tile.analog_mvm(np.array([1.0, -1.0]))
    assert np.allclose(y, [0.5, -0.5], atol=1e-15)


def test_output_clips_at_bound():
    tile = make_tile(0.5 * np.eye(2), clean_cfg(out_bound=0.4, w_bound=1.0))
    y = tile.analog_mvm(np.array([1.0, -1.0]))
    assert np.array_equal(y, [0.4, -0.4])


def test_adc_keeps_the_bound_representable():
    # row of thirty 0.5s at full drive: raw 15 clips to 12, ADC maps 12 -> 12
    w = np.full((1, 30), 0.5)
    tile = make_tile(w, clean_cfg(out_bound=12.0, out_bits=9, w_bound=1.0))
    y = tile.analog_mvm(np.ones(30))
    assert y[0] == 12.0


def test_transpose_product():
    tile = ideal_tile(np.array([[1.0, 2.0], [3.0, 4.0]]), w_bound=5.0)
    y = tile.analog_mvm(np.array([1.0, 1.0]), transpose=True)
    assert np.allclose(y, [4.0, 6.0], atol=1e-15)


def test_mvm_dimension_mismatch():
    tile = ideal_tile(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        tile.analog_mvm(np.zeros(2))
    with pytest.raises(ValueError):
        tile.analog_mvm(np.zeros(3), transpose=True)


# ---------------------------------------------------------------------------
# managed forward/backward


def test_managed_forward_normalizes_and_rescales_exactly():
    tile = ideal_tile(0.5 * np.eye(2), out_bound=12.0)
    res = tile.managed_forward(np.array([0.2, -0.4]))
    assert np.allclose(res.value, [0.1, -0.2], atol=1e-15)
    assert res.scale_used == pytest.approx(0.4)
    assert res.bound_retries == 0


def test_managed_forward_zero_input_short_circuits():
    tile = ideal_tile(np.ones((3, 2)))
    res = tile.managed_forward(np.zeros(2))
    assert np.array_equal(res.value, np.zeros(3))
    assert res.scale_used == 1.0
    assert res.bound_retries == 0


def test_bound_management_halves_and_retries():
    # raw output 15 saturates at 12; one halving gives 7.5, rescaled 15
    w = np.full((1, 30), 0.5)
    tile = make_tile(w, clean_cfg(out_bound=12.0, w_bound=1.0))
    res = tile.managed_forward(np.ones(30))
    assert res.bound_retries == 1
    assert res.scale_used == pytest.approx(2.0)
    assert np.allclose(res.value, [15.0], atol=1e-12)


def test_bound_management_gives_up_after_retry_limit():
    # an unsatisfiably tight bound: every retry still saturates
    w = np.full((1, 4), 0.25)
    tile = make_tile(w, clean_cfg(out_bound=1e-9, w_bound=1.0))
    res = tile.managed_forward(np.ones(4))
    assert res.bound_retries == MAX_BOUND_RETRIES
    assert np.all(np.abs(res.value) > 0)


def test_managed_rejects_non_finite():
    tile = ideal_tile(np.eye(2))
    with pytest.raises(ValueError):
        tile.managed_forward(np.array([1.0, np.nan]))


def test_managed_forward_scale_invariance():
    rng = np.random.default_rng(5)
    tile = ideal_tile(rng.uniform(-0.4, 0.4, size=(6, 5)), w_bound=1.0)
    x = rng.uniform(-2.0, 2.0, size=5)
    base = tile.managed_forward(x).value
    for c in (0.01, 3.0, 1000.0):
        scaled = tile.managed_forward(c * x).value
        assert np.allclose(scaled, c * base, rtol=1e-12, atol=1e-15)


def test_degenerate_analog_equals_fp():
    # noiseless/unquantized/unbounded analog forward == exact fp product
    rng = np.random.default_rng(9)
    for _ in range(100):
        rows = int(rng.integers(1, 12))
        cols = int(rng.integers(1, 12))
        w = rng.uniform(-0.5, 0.5, size=(rows, cols))
        x = rng.uniform(-3.0, 3.0, size=cols)
        analog = ideal_tile(w, w_bound=10.0)
        fp = AnalogTile(w, "fp")
        got = analog.managed_forward(x).value
        want = fp.fp_forward(x)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


def test_managed_backward_is_transposed_forward():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    tile = ideal_tile(w, w_bound=5.0)
    res = tile.managed_backward(np.array([1.0, 1.0]))
    assert np.allclose(res.value, [4.0, 6.0], atol=1e-14)


# ---------------------------------------------------------------------------
# stochastic update


def test_zero_component_generates_no_pulses():
    tile = ideal_tile(np.zeros((3, 3)))
    before = tile.w.copy()
    tile.stochastic_update(np.array([0.0, 1.0, 0.0]), np.ones(3), lr=0.01)
    # columns 0 and 2 never fire: their weights cannot move
    assert np.array_equal(tile.w[:, 0], before[:, 0])
    assert np.array_equal(tile.w[:, 2], before[:, 2])
    assert not np.array_equal(tile.w[:, 1], before[:, 1])


def test_full_probability_update_is_deterministic():
    # C = sqrt(0.01 / (10 * 0.001)) = 1, |x| = |d| = 1: every slot coincides
    tile = ideal_tile(np.zeros((1, 1)))
    tile.stochastic_update(np.array([1.0]), np.array([1.0]), lr=0.01)
    assert tile.w[0, 0] == pytest.approx(0.010, abs=1e-12)


def test_opposite_signs_step_down():
    tile = ideal_tile(np.zeros((1, 1)))
    tile.stochastic_update(np.array([1.0]), np.array([-1.0]), lr=0.01)
    assert tile.w[0, 0] == pytest.approx(-0.010, abs=1e-12)


def test_update_expectation_matches_rank_one_product():
    # 1x1 ideal device, lr=0.01, BL=10, dw=0.001 -> C=1; E[dw] = lr*x*d
    x, d, lr = 0.5, 0.2, 0.01
    calls, rows = 2000, 500  # 1e6 trials: rows independent given the call's column train
    cfg = clean_cfg(w_bound=1.0)
    devices = sample_device_array(rows, 1, cfg, seed=1)
    tile = AnalogTile(np.zeros((rows, 1)), "analog", cfg, devices, np.random.default_rng(17))
    means = np.empty(calls)
    for k in range(calls):
        tile.w[:] = 0.0
        tile.stochastic_update(np.array([x]), np.full(rows, d), lr=lr)
        means[k] = tile.w.mean()
    grand = means.mean()
    se = means.std(ddof=1) / math.sqrt(calls)
    assert abs(grand - lr * x * d) <= 3 * se + 1e-12


def test_update_respects_device_bounds():
    cfg = clean_cfg(w_bound=0.005)  # tiny bound: a 10-coincidence burst overshoots
    tile = make_tile(np.zeros((2, 2)), cfg)
    for _ in range(20):
        tile.stochastic_update(np.ones(2), np.ones(2), lr=0.01)
    assert np.all(tile.w <= tile.devices.w_max)
    assert np.all(tile.w >= tile.devices.w_min)
    assert np.allclose(tile.w, 0.005)


def test_cycle_to_cycle_noise_perturbs_steps():
    cfg = clean_cfg(dw_min_ctoc=0.3, w_bound=1.0)
    tile = make_tile(np.zeros((1, 1)), cfg, seed=2)
    tile.stochastic_update(np.array([1.0]), np.array([1.0]), lr=0.01)
    # ten coincidences, each scaled by max(0, 1 + 0.3 N): almost surely != 0.010
    assert tile.w[0, 0] != pytest.approx(0.010, abs=1e-6)
    assert tile.w[0, 0] > 0


def test_update_rejects_bad_learning_rate_and_fp_mode():
    tile = ideal_tile(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        tile.stochastic_update(np.array([1.0]), np.array([1.0]), lr=0.0)
    fp = AnalogTile(np.zeros((1, 1)), "fp")
    with pytest.raises(ValueError):
        fp.stochastic_update(np.array([1.0]), np.array([1.0]), lr=0.01)


# ---------------------------------------------------------------------------
# fp twin


def test_fp_forward_identity():
    tile = AnalogTile(np.eye(2), "fp")
    assert np.array_equal(tile.fp_forward(np.array([3.0, -7.0])), [3.0, -7.0])


def test_fp_backward_hand_transpose():
    tile = AnalogTile(np.array([[1.0, 2.0], [3.0, 4.0]]), "fp")
    assert np.array_equal(tile.fp_backward(np.array([1.0, 1.0])), [4.0, 6.0])


def test_fp_apply_delta_rank_one():
    tile = AnalogTile(np.zeros((1, 1)), "fp")
    tile.fp_apply_delta(np.outer([1.0], [2.0]), lr=0.5)
    assert np.array_equal(tile.w, [[1.0]])


def test_fp_ops_reject_analog_tiles_and_vice_versa():
    analog = ideal_tile(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        analog.fp_forward(np.zeros(2))
    with pytest.raises(ValueError):
        analog.fp_apply_delta(np.zeros((2, 2)), 0.1)
    fp = AnalogTile(np.zeros((2, 2)), "fp")
    with pytest.raises(ValueError):
        fp.analog_mvm(np.zeros(2))
    with pytest.raises(ValueError):
        fp.managed_forward(np.zeros(2))


# ---------------------------------------------------------------------------
# determinism


def test_analog_path_is_deterministic_given_rng_state():
    cfg = RpuConfig()  # full baseline: noise, quantization, the works
    devices = sample_device_array(6, 4, cfg, seed=3)

    def run(seed):
        tile = AnalogTile(np.full((6, 4), 0.1), "analog", cfg, devices,
                          np.random.default_rng(seed))
        out = [tile.managed_forward(np.array([0.3, -0.2, 0.9, 0.0])).value]
        tile.stochastic_update(np.array([0.5, 0.1, -0.4, 1.0]),
                               np.array([0.2, -0.1, 0.3, 0.0, 0.7, -0.2]), lr=0.05)
        out.append(tile.w.copy())
        out.append(tile.managed_backward(np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).value)
        return out

    a, b = run(123), run(123)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    c = run(124)
    assert not np.array_equal(a[1], c[1])


def test_clone_shares_devices_but_not_weights():
    tile = ideal_tile(np.full((2, 2), 0.1))
    clone = tile.clone(rng=np.random.default_rng(0))
    assert clone.devices is tile.devices
    clone.stochastic_update(np.ones(2), np.ones(2), lr=0.01)
    assert np.all(tile.w == 0.1)


def test_managed_result_is_a_named_tuple():
    res = ManagedResult(np.zeros(1), 1.0, 0)
    assert res.value.shape == (1,)
    assert res.scale_used == 1.0
    assert res.bound_retries == 0
