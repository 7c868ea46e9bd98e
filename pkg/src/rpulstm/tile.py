"""One cross-point array holding a weight matrix.

Analog mode routes every read through the peripheral pipeline — input DAC,
matrix-vector product, additive output noise, saturation at +-out_bound,
output ADC — and every write through the parallel stochastic pulse update
clamped to per-device bounds. Reads are wrapped in noise management
(normalize the input by its absolute maximum so the DAC range is fully
used) and bound management (retry with halved inputs while the output
saturates). fp mode implements the same surface with exact float64
arithmetic and no devices; it is the baseline and test oracle path.

A tile is single-writer: forward/backward/update calls on one tile must be
serialized by the caller. All randomness comes from the tile's own
generator in a fixed order (DAC stochastic-rounding draws, output noise,
update pulse uniforms for columns then rows, coincidence noise), so a tile
is deterministic given its state and inputs.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from rpulstm.device import DeviceArray, RpuConfig
from rpulstm.kernels import (
    dac_nearest,
    dac_stochastic,
    pulse_bits,
    pulse_update,
    read_output,
)

# Inputs may exceed the DAC range by at most this much before it is an error;
# anything within is clipped (guards against rounding in callers' rescaling).
RANGE_TOL = 1e-12

MAX_BOUND_RETRIES = 10

_EMPTY = np.empty(0, dtype=np.float64)


class ManagedResult(NamedTuple):
    """Rescaled output of a managed read, with the applied input scale and
    the number of bound-management retries (saturated result if it still
    saturated after the retry limit)."""

    value: np.ndarray
    scale_used: float
    bound_retries: int


def quantize_vector(v, bits: int, mode: str = "nearest", rng=None) -> np.ndarray:
    """Quantize components of v in [-1, 1] onto 2**bits - 1 symmetric levels.

    The step is 1/(2**(bits-1) - 1), so -1, 0 and +1 are exact levels.
    nearest rounds half away from zero; stochastic rounds to a neighboring
    level with probability equal to the fractional distance, which makes it
    unbiased. bits == 0 bypasses quantization.
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    if bits == 0:
        return v.copy()
    if bits < 2:
        raise ValueError(f"bits must be 0 (off) or >= 2, got {bits}")
    if v.size and float(np.max(np.abs(v))) > 1.0 + RANGE_TOL:
        raise ValueError(
            f"quantizer input outside [-1, 1]: max |v| = {np.max(np.abs(v))!r}"
        )
    levels = float(2 ** (bits - 1) - 1)
    if mode == "nearest":
        return dac_nearest(v, levels)
    if mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic rounding requires an rng")
        return dac_stochastic(v, levels, rng.random(v.shape))
    raise ValueError(f"unknown rounding mode {mode!r}")


class AnalogTile:
    """Weight matrix on one cross-point array (or its floating-point twin)."""

    def __init__(self, w, mode: str, cfg: RpuConfig | None = None,
                 devices: DeviceArray | None = None, rng=None):
        w = np.array(w, dtype=np.float64, order="C", copy=True)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"weights must be a rows x cols matrix, got shape {w.shape}")
        if mode not in ("analog", "fp"):
            raise ValueError(f"mode must be 'analog' or 'fp', got {mode!r}")
        if mode == "analog":
            if cfg is None or devices is None or rng is None:
                raise ValueError("analog mode requires cfg, devices and rng")
            if (devices.rows, devices.cols) != w.shape:
                raise ValueError(
                    f"device array {devices.rows}x{devices.cols} does not match "
                    f"weights {w.shape[0]}x{w.shape[1]}"
                )
            np.clip(w, devices.w_min, devices.w_max, out=w)
        self.w = w
        self.mode = mode
        self.cfg = cfg
        self.devices = devices
        self.rng = rng
        self._acc = None  # scratch for pulse accumulation, allocated lazily

    @property
    def rows(self) -> int:
        return self.w.shape[0]

    @property
    def cols(self) -> int:
        return self.w.shape[1]

    def clone(self, rng=None, cfg: RpuConfig | None = None) -> "AnalogTile":
        """Copy with independent weights; devices are shared (immutable).

        Analog clones need their own rng; cfg may be overridden (e.g. to
        evaluate with the output noise turned off).
        """
        if self.mode == "fp":
            return AnalogTile(self.w, "fp")
        if rng is None:
            raise ValueError("cloning an analog tile requires a fresh rng")
        return AnalogTile(self.w, "analog", cfg or self.cfg, self.devices, rng)

    # ------------------------------------------------------------------
    # analog path

    def _require_analog(self) -> None:
        if self.mode != "analog":
            raise ValueError("operation requires an analog-mode tile (use the fp_* path)")

    def _read(self, v, transpose: bool) -> tuple[np.ndarray, bool]:
        """Array read for pre-normalized inputs: DAC -> W v (or W^T v) ->
        noise -> clamp at +-out_bound -> ADC (the bound maps to the top code
        exactly, so saturation survives quantization). Returns the output
        vector and the saturation flag."""
        cfg = self.cfg
        if cfg.in_bits > 0:
            levels = float(2 ** (cfg.in_bits - 1) - 1)
            if cfg.rounding == "nearest":
                q = dac_nearest(v, levels)
            else:
                q = dac_stochastic(v, levels, self.rng.random(v.shape))
        else:
            q = v
        y = self.w.T @ q if transpose else self.w @ q
        if cfg.noise_sigma > 0.0:
            y += cfg.noise_sigma * self.rng.standard_normal(y.shape)
        adc_levels = float(2 ** (cfg.out_bits - 1) - 1) if cfg.out_bits > 0 else 0.0
        saturated = read_output(y, cfg.out_bound, adc_levels)
        return y, saturated

    def analog_mvm(self, v, transpose: bool = False) -> np.ndarray:
        """One array read: DAC -> W v (or W^T v) -> noise -> clamp -> ADC.

        Components of v must already be inside the DAC range [-1, 1]; use
        managed_forward/managed_backward for unnormalized inputs.
        """
        self._require_analog()
        v = np.ascontiguousarray(v, dtype=np.float64)
        expected = self.rows if transpose else self.cols
        if v.shape != (expected,):
            raise ValueError(f"input has shape {v.shape}, expected ({expected},)")
        if v.size and float(np.max(np.abs(v))) > 1.0 + RANGE_TOL:
            raise ValueError(f"analog input outside [-1, 1]: max |v| = {np.max(np.abs(v))!r}")
        y, _ = self._read(v, transpose)
        return y

    def _managed(self, v, transpose: bool) -> ManagedResult:
        self._require_analog()
        v = np.ascontiguousarray(v, dtype=np.float64)
        expected = self.rows if transpose else self.cols
        if v.shape != (expected,):
            raise ValueError(f"input has shape {v.shape}, expected ({expected},)")
        out_len = self.cols if transpose else self.rows
        s = float(np.max(np.abs(v)))  # NaN/inf in v poison the max
        if not math.isfinite(s):
            raise ValueError("managed input contains non-finite values")
        if s == 0.0:
            return ManagedResult(np.zeros(out_len), 1.0, 0)
        scale = s
        retries = 0
        while True:
            y, saturated = self._read(v / scale, transpose)
            if not saturated or retries >= MAX_BOUND_RETRIES:
                break
            scale *= 2.0
            retries += 1
        y *= scale
        return ManagedResult(y, scale, retries)

    def managed_forward(self, x) -> ManagedResult:
        """W x with noise management (normalize by max |x|) and bound
        management (halve-and-retry on output saturation, up to
        MAX_BOUND_RETRIES; a still-saturated result is returned flagged,
        not raised)."""
        return self._managed(x, transpose=False)

    def managed_backward(self, delta) -> ManagedResult:
        """W^T delta with the same noise/bound management as the forward."""
        return self._managed(delta, transpose=True)

    def stochastic_update(self, x, delta, lr: float) -> None:
        """Parallel pulse update; expectation lr * outer(delta, x) for ideal
        devices and unclipped probabilities.

        Column i fires in each of bl slots with probability min(1, C|x_i|)
        and carries sign(x_i); rows likewise from delta, with
        C = sqrt(lr / (bl * dw_min_effective)). Every same-slot coincidence
        moves w_ij by one device step — the up step when the line signs
        match, the down step otherwise — scaled by max(0, 1 + ctoc * N(0,1))
        cycle-to-cycle noise, and w is clamped to the device bounds.
        """
        self._require_analog()
        if not lr > 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        x = np.ascontiguousarray(x, dtype=np.float64)
        delta = np.ascontiguousarray(delta, dtype=np.float64)
        if x.shape != (self.cols,) or delta.shape != (self.rows,):
            raise ValueError(
                f"update vectors have shapes {x.shape}/{delta.shape}, "
                f"expected ({self.cols},)/({self.rows},)"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(delta))):
            raise ValueError("update vectors contain non-finite values")
        cfg = self.cfg
        gain = math.sqrt(lr / (cfg.bl * cfg.dw_min_effective))
        col_fires, col_counts = pulse_bits(self.rng.random((cfg.bl, self.cols)), x, gain)
        row_fires, row_counts = pulse_bits(self.rng.random((cfg.bl, self.rows)), delta, gain)

        events = int(row_counts @ col_counts)
        ctoc = cfg.dw_min_ctoc
        noise = self.rng.standard_normal(events) if ctoc > 0.0 else _EMPTY

        if self._acc is None:
            self._acc = np.zeros((self.rows, self.cols))  # kept zeroed by pulse_update
        dev = self.devices
        used = pulse_update(self.w, self._acc, row_fires, col_fires, noise, ctoc,
                            delta, x, dev.dw_plus, dev.dw_minus, dev.w_min, dev.w_max,
                            np.empty(events, dtype=np.intp))
        if ctoc > 0.0 and used != events:
            raise AssertionError(f"pulse kernel consumed {used}/{events} noise values")

    # ------------------------------------------------------------------
    # floating-point twin

    def _require_fp(self) -> None:
        if self.mode != "fp":
            raise ValueError("operation requires an fp-mode tile (use the analog path)")

    def fp_forward(self, x) -> np.ndarray:
        """Exact W x."""
        self._require_fp()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cols,):
            raise ValueError(f"input has shape {x.shape}, expected ({self.cols},)")
        return self.w @ x

    def fp_backward(self, delta) -> np.ndarray:
        """Exact W^T delta."""
        self._require_fp()
        delta = np.asarray(delta, dtype=np.float64)
        if delta.shape != (self.rows,):
            raise ValueError(f"input has shape {delta.shape}, expected ({self.rows},)")
        return self.w.T @ delta

    def fp_apply_delta(self, delta_w, lr: float) -> None:
        """W += lr * delta_w, unbounded and noiseless."""
        self._require_fp()
        delta_w = np.asarray(delta_w, dtype=np.float64)
        if delta_w.shape != self.w.shape:
            raise ValueError(f"delta has shape {delta_w.shape}, expected {self.w.shape}")
        self.w += lr * delta_w

    # ------------------------------------------------------------------
    # mode dispatch used by the network

    def forward(self, x) -> np.ndarray:
        return self.fp_forward(x) if self.mode == "fp" else self.managed_forward(x).value

    def backward(self, delta) -> np.ndarray:
        return self.fp_backward(delta) if self.mode == "fp" else self.managed_backward(delta).value
