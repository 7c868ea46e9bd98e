"""Hot kernels of the analog tile, with compiled and numpy twins.

Analog training spends nearly all its time in two inner loops:

* the read pipeline — input DAC quantization, then output clamping, ADC
  quantization and saturation detection around a BLAS matrix-vector
  product;
* the stochastic pulse update — turning line values into per-slot firing
  bits, accumulating per-weight coincidence factors over the bl update
  slots, and applying device steps clamped to per-device bounds.

Each kernel exists twice: a numpy reference implementation (the *_numpy
functions below) and a compiled twin (rpulstm._kernels_cy, built from
_kernels_cy.pyx), selected at import. The two are bit-for-bit
interchangeable: all randomness is pre-drawn by the caller (noise is
consumed slot-major, row-major within a slot, during accumulation) and
every kernel evaluates the same floating-point expressions element by
element. Set RPULSTM_NO_EXT=1 to force the numpy twins; run
benchmarks/bench_kernels.py for a speed comparison.
"""

from __future__ import annotations

import os

import numpy as np


def _round_half_away(t):
    """Round to integer, ties away from zero (t is pre-scaled to codes)."""
    return np.where(t >= 0.0, np.floor(t + 0.5), np.ceil(t - 0.5))


def dac_nearest_numpy(v, levels):
    """Quantize v onto the symmetric grid {-1, ..., -1/levels, 0, ..., 1},
    rounding to the nearest level with ties away from zero. Values beyond
    [-1, 1] are clamped first. Returns a new array."""
    t = np.minimum(v, 1.0)
    np.maximum(t, -1.0, out=t)
    t *= levels
    return _round_half_away(t) / levels


def dac_stochastic_numpy(v, levels, u):
    """Like dac_nearest, but round to a neighboring level with probability
    equal to the fractional distance (u: one uniform per component), which
    makes the quantizer unbiased."""
    t = np.minimum(v, 1.0)
    np.maximum(t, -1.0, out=t)
    t *= levels
    lo = np.floor(t)
    return (lo + (u < (t - lo))) / levels


def read_output_numpy(y, bound, levels):
    """Output pipeline after the matrix-vector product, in place: clamp to
    [-bound, bound], quantize onto the ADC grid when levels > 0 (the bound
    maps to the top code exactly), and report whether any component sits at
    the bound — the saturation signal for bound management."""
    np.minimum(y, bound, out=y)
    np.maximum(y, -bound, out=y)
    if levels > 0:
        t = y / bound * levels
        np.divide(_round_half_away(t), levels, out=y)
        y *= bound
    return bool(np.any(np.abs(y) >= bound))


def pulse_bits_numpy(u, values, gain):
    """Translate line values into pulse trains: component i of each of the
    bl slots fires when u[t, i] < min(1, gain * |values[i]|). Returns
    (bits (bl, n) bool, per-slot firing counts (bl,) int64)."""
    p = np.abs(values)
    p *= gain
    np.minimum(p, 1.0, out=p)
    bits = u < p
    return bits, bits.sum(axis=1, dtype=np.int64)


def accumulate_numpy(acc, row_fires, col_fires, noise, ctoc):
    """Sum pulse-coincidence factors into acc (rows x cols).

    Each same-slot (row, column) coincidence deposits max(0, 1 + ctoc *
    noise[k]) with noise consumed slot-major, row-major within a slot
    (one standard normal per coincidence; unused when ctoc == 0). Returns
    the number of noise values consumed.
    """
    pos = 0
    for t in range(row_fires.shape[0]):
        mask = np.logical_and.outer(row_fires[t], col_fires[t])
        if ctoc > 0.0:
            k = int(np.count_nonzero(mask))
            if k == 0:
                continue
            factors = 1.0 + ctoc * noise[pos : pos + k]
            np.maximum(factors, 0.0, out=factors)
            acc[mask] += factors
            pos += k
        else:
            acc[mask] += 1.0
    return pos


def apply_update_numpy(w, acc, sign_row, sign_col, dw_plus, dw_minus, w_min, w_max):
    """Move weights by their accumulated coincidence factors, in place.

    w_ij += sign_row_j * sign_col_i * step_ij * acc_ij with step the up or
    down device step by sign product, then clamp to [w_min, w_max]. Cells
    with acc == 0 stay untouched (they are within bounds already).
    """
    direction = np.outer(sign_row, sign_col)
    step = np.where(direction > 0.0, dw_plus, dw_minus)
    w += (direction * step) * acc
    np.minimum(w, w_max, out=w)
    np.maximum(w, w_min, out=w)


def pulse_update_numpy(w, acc, row_fires, col_fires, noise, ctoc, delta, x,
                       dw_plus, dw_minus, w_min, w_max, touched):
    """Whole pulse update: accumulate coincidence factors into the zeroed
    scratch acc, move the touched weights, and hand acc back zeroed.

    touched is integer scratch with room for one entry per coincidence (the
    compiled twin uses it to revisit only touched cells). Returns the number
    of noise values consumed.
    """
    used = accumulate_numpy(acc, row_fires, col_fires, noise, ctoc)
    apply_update_numpy(w, acc, np.sign(delta), np.sign(x),
                       dw_plus, dw_minus, w_min, w_max)
    acc[...] = 0.0
    return used


try:
    from rpulstm import _kernels_cy
except ImportError:
    _kernels_cy = None

USING_COMPILED_KERNEL = _kernels_cy is not None and not os.environ.get("RPULSTM_NO_EXT")

if USING_COMPILED_KERNEL:
    dac_nearest = _kernels_cy.dac_nearest
    dac_stochastic = _kernels_cy.dac_stochastic
    read_output = _kernels_cy.read_output
    pulse_bits = _kernels_cy.pulse_bits
    accumulate = _kernels_cy.accumulate
    apply_update = _kernels_cy.apply_update
    pulse_update = _kernels_cy.pulse_update
else:
    dac_nearest = dac_nearest_numpy
    dac_stochastic = dac_stochastic_numpy
    read_output = read_output_numpy
    pulse_bits = pulse_bits_numpy
    accumulate = accumulate_numpy
    apply_update = apply_update_numpy
    pulse_update = pulse_update_numpy
