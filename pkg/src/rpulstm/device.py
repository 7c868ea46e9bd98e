"""Per-crosspoint device parameters for one resistive array.

Each logical weight lives on a physical cross-point device whose conductance
moves in discrete increments. The increment size, the up/down step asymmetry
and the conductance bounds all scatter from device to device; this module
samples those parameters once per array and freezes them. Cycle-to-cycle
scatter of the increment is applied later, at update time, by the tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

ROUNDING_MODES = ("nearest", "stochastic")

# Named ablation presets: field overrides applied on top of the baseline
# RpuConfig. "no-variation" removes step and bound scatter, "no-asym" the
# up/down ratio scatter, "states4x" quadruples the number of states by
# shrinking the mean step.
PRESETS: dict[str, dict] = {
    "baseline": {},
    "no-variation": {"dw_min_dtod": 0.0, "dw_min_ctoc": 0.0, "w_bound_dtod": 0.0},
    "states4x": {"states_multiplier": 4.0},
    "no-asym": {"asym_dtod": 0.0},
    "no-asym-states4x": {"asym_dtod": 0.0, "states_multiplier": 4.0},
}


@dataclass(frozen=True)
class RpuConfig:
    """Device and peripheral parameters of the analog arrays.

    The defaults are the hardware baseline: 10-slot stochastic update
    streams, 0.001 mean step with 30% device-to-device and cycle-to-cycle
    scatter, 2% up/down asymmetry scatter, |w| bounded at 0.6 with 30%
    scatter, additive output noise sigma 0.06, output saturation 12, 5-bit
    input DAC with round-to-nearest, 9-bit output ADC.

    bits fields: 0 disables the quantizer, otherwise at least 2 and at most
    16 bits. states_multiplier divides the mean step, multiplying the number
    of distinct conductance states.
    """

    bl: int = 10
    dw_min: float = 0.001
    dw_min_dtod: float = 0.30
    dw_min_ctoc: float = 0.30
    asym_dtod: float = 0.02
    w_bound: float = 0.6
    w_bound_dtod: float = 0.30
    noise_sigma: float = 0.06
    out_bound: float = 12.0
    in_bits: int = 5
    out_bits: int = 9
    rounding: str = "nearest"
    states_multiplier: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "rounding":
                if value not in ROUNDING_MODES:
                    raise ValueError(f"rounding must be one of {ROUNDING_MODES}, got {value!r}")
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{f.name} must be a number, got {value!r}")
            if math.isnan(value):
                raise ValueError(f"{f.name} is NaN")
        if self.bl < 1 or int(self.bl) != self.bl:
            raise ValueError(f"bl must be a positive integer, got {self.bl}")
        for name in ("dw_min", "w_bound", "states_multiplier"):
            v = getattr(self, name)
            if not (0.0 < v < math.inf):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        for name in ("dw_min_dtod", "dw_min_ctoc", "asym_dtod", "w_bound_dtod", "noise_sigma"):
            v = getattr(self, name)
            if not (0.0 <= v < math.inf):
                raise ValueError(f"{name} must be >= 0 and finite, got {v}")
        if self.out_bound <= 0.0:
            raise ValueError(f"out_bound must be positive, got {self.out_bound}")
        for name in ("in_bits", "out_bits"):
            v = getattr(self, name)
            if int(v) != v or not (0 <= v <= 16) or v == 1:
                raise ValueError(f"{name} must be 0 (off) or an integer in [2, 16], got {v}")
        if math.isinf(self.out_bound) and self.out_bits != 0:
            raise ValueError("an infinite out_bound requires out_bits = 0")

    @property
    def dw_min_effective(self) -> float:
        """Mean increment after the number-of-states multiplier."""
        return self.dw_min / self.states_multiplier


def preset_config(name: str, **overrides) -> RpuConfig:
    """Baseline RpuConfig with a named ablation preset applied."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return replace(RpuConfig(), **{**PRESETS[name], **overrides})


@dataclass(frozen=True)
class DeviceArray:
    """Frozen per-device parameters of one rows x cols array.

    dw_plus / dw_minus are the mean up / down increments of each device,
    w_max / w_min its conductance bounds (w_min negative). Arrays are marked
    read-only; a DeviceArray can be shared freely between tiles and threads.
    """

    rows: int
    cols: int
    dw_plus: np.ndarray
    dw_minus: np.ndarray
    w_max: np.ndarray
    w_min: np.ndarray

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"invalid array dimensions {self.rows}x{self.cols}")
        shape = (self.rows, self.cols)
        for name in ("dw_plus", "dw_minus", "w_max", "w_min"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (np.all(self.dw_plus > 0.0) and np.all(self.dw_minus > 0.0)):
            raise ValueError("device steps must be strictly positive")
        if not (np.all(self.w_min < 0.0) and np.all(self.w_max > 0.0)):
            raise ValueError("device bounds must satisfy w_min < 0 < w_max")


def sample_device_array(rows: int, cols: int, cfg: RpuConfig, seed) -> DeviceArray:
    """Draw the per-device parameters of one array.

    Multiplicative Gaussian scatter around the configured means, with lower
    clips keeping every device functional: steps and bounds are clipped at
    10% of their mean, the up/down ratio at [0.5, 2]. The up step is
    b * ratio and the down step b, so the mean ratio is exactly one with
    standard deviation asym_dtod. Upper and lower bound magnitudes are
    drawn independently.

    Pure function of (rows, cols, cfg, seed); the draw order is fixed as
    step scatter, ratio scatter, upper bound scatter, lower bound scatter.
    """
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise ValueError(f"invalid array dimensions {rows}x{cols}")
    rng = np.random.default_rng(seed)
    shape = (int(rows), int(cols))

    base = cfg.dw_min_effective
    step = base * (1.0 + cfg.dw_min_dtod * rng.standard_normal(shape))
    np.maximum(step, 0.1 * base, out=step)

    ratio = 1.0 + cfg.asym_dtod * rng.standard_normal(shape)
    np.clip(ratio, 0.5, 2.0, out=ratio)

    w_max = cfg.w_bound * (1.0 + cfg.w_bound_dtod * rng.standard_normal(shape))
    np.maximum(w_max, 0.1 * cfg.w_bound, out=w_max)
    w_min = cfg.w_bound * (1.0 + cfg.w_bound_dtod * rng.standard_normal(shape))
    np.maximum(w_min, 0.1 * cfg.w_bound, out=w_min)

    return DeviceArray(
        rows=shape[0],
        cols=shape[1],
        dw_plus=step * ratio,
        dw_minus=step,
        w_max=w_max,
        w_min=-w_min,
    )


class StatesSummary(NamedTuple):
    mean: float
    min: float
    max: float


def states_stats(arr: DeviceArray) -> StatesSummary:
    """Number-of-states statistics (w_max - w_min) / dw_minus over an array."""
    states = (arr.w_max - arr.w_min) / arr.dw_minus
    return StatesSummary(float(states.mean()), float(states.min()), float(states.max()))
