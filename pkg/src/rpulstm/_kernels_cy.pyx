# Compiled twins of the *_numpy kernels in rpulstm.kernels. Same contracts,
# same noise-consumption order, same elementwise floating-point expressions:
# bit-identical results, only faster.

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, fabs, floor


cdef inline double _clamp_unit(double v) noexcept nogil:
    if v > 1.0:
        return 1.0
    if v < -1.0:
        return -1.0
    return v


cdef inline double _round_half_away(double t) noexcept nogil:
    if t >= 0.0:
        return floor(t + 0.5)
    return ceil(t - 0.5)


def dac_nearest(v, double levels):
    cdef const double[::1] v_v = v
    cdef Py_ssize_t n = v_v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef Py_ssize_t i
    cdef double t
    for i in range(n):
        t = _clamp_unit(v_v[i]) * levels
        out_v[i] = _round_half_away(t) / levels
    return out


def dac_stochastic(v, double levels, u):
    cdef const double[::1] v_v = v
    cdef const double[::1] u_v = u
    cdef Py_ssize_t n = v_v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef Py_ssize_t i
    cdef double t, lo
    for i in range(n):
        t = _clamp_unit(v_v[i]) * levels
        lo = floor(t)
        out_v[i] = (lo + (1.0 if u_v[i] < (t - lo) else 0.0)) / levels
    return out


def read_output(y, double bound, double levels):
    cdef double[::1] y_v = y
    cdef Py_ssize_t n = y_v.shape[0]
    cdef Py_ssize_t i
    cdef double value, t
    cdef bint saturated = False
    for i in range(n):
        value = y_v[i]
        if value > bound:
            value = bound
        if value < -bound:
            value = -bound
        if levels > 0.0:
            t = value / bound * levels
            value = _round_half_away(t) / levels
            value *= bound
        if fabs(value) >= bound:
            saturated = True
        y_v[i] = value
    return bool(saturated)


def pulse_bits(u, values, double gain):
    cdef const double[:, ::1] u_v = u
    cdef const double[::1] val_v = values
    cdef Py_ssize_t bl = u_v.shape[0]
    cdef Py_ssize_t n = u_v.shape[1]
    bits = np.empty((bl, n), dtype=bool)
    counts = np.zeros(bl, dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] bits_v = bits.view(np.uint8)
    cdef cnp.int64_t[::1] counts_v = counts
    cdef Py_ssize_t t, i
    cdef double p
    cdef cnp.uint8_t fire
    for i in range(n):
        p = fabs(val_v[i]) * gain
        if p > 1.0:
            p = 1.0
        for t in range(bl):
            fire = u_v[t, i] < p
            bits_v[t, i] = fire
            if fire:
                counts_v[t] += 1
    return bits, counts


def accumulate(acc, row_fires, col_fires, noise, double ctoc):
    cdef double[:, ::1] acc_v = acc
    cdef const cnp.uint8_t[:, ::1] rows_v = np.ascontiguousarray(row_fires).view(np.uint8)
    cdef const cnp.uint8_t[:, ::1] cols_v = np.ascontiguousarray(col_fires).view(np.uint8)
    cdef const double[::1] noise_v = noise

    cdef Py_ssize_t bl = rows_v.shape[0]
    cdef Py_ssize_t n_rows = rows_v.shape[1]
    cdef Py_ssize_t n_cols = cols_v.shape[1]
    cdef Py_ssize_t t, i, j, k, n_fire, pos = 0
    cdef double factor

    # scratch list of firing column indices for the current slot
    cdef cnp.intp_t[::1] fire_idx = np.empty(n_cols, dtype=np.intp)

    for t in range(bl):
        n_fire = 0
        for i in range(n_cols):
            if cols_v[t, i]:
                fire_idx[n_fire] = i
                n_fire += 1
        if n_fire == 0:
            continue
        for j in range(n_rows):
            if not rows_v[t, j]:
                continue
            if ctoc > 0.0:
                for k in range(n_fire):
                    factor = 1.0 + ctoc * noise_v[pos]
                    pos += 1
                    if factor < 0.0:
                        factor = 0.0
                    acc_v[j, fire_idx[k]] += factor
            else:
                for k in range(n_fire):
                    acc_v[j, fire_idx[k]] += 1.0
    return pos


def pulse_update(w, acc, row_fires, col_fires, noise, double ctoc, delta, x,
                 dw_plus, dw_minus, w_min, w_max, touched):
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] w_v = w
    cdef const cnp.uint8_t[:, ::1] rows_v = np.ascontiguousarray(row_fires).view(np.uint8)
    cdef const cnp.uint8_t[:, ::1] cols_v = np.ascontiguousarray(col_fires).view(np.uint8)
    cdef const double[::1] noise_v = noise
    cdef const double[::1] d_row = delta
    cdef const double[::1] d_col = x
    cdef const double[:, ::1] up = dw_plus
    cdef const double[:, ::1] down = dw_minus
    cdef const double[:, ::1] lo = w_min
    cdef const double[:, ::1] hi = w_max
    cdef cnp.intp_t[::1] touched_v = touched

    cdef Py_ssize_t bl = rows_v.shape[0]
    cdef Py_ssize_t n_rows = rows_v.shape[1]
    cdef Py_ssize_t n_cols = cols_v.shape[1]
    cdef Py_ssize_t t, i, j, k, m, n_fire, pos = 0, n_touched = 0
    cdef double factor, d, sr, sc, value
    cdef cnp.intp_t flat

    cdef cnp.intp_t[::1] fire_idx = np.empty(n_cols, dtype=np.intp)

    # accumulation, recording each cell the first time it is hit
    for t in range(bl):
        n_fire = 0
        for i in range(n_cols):
            if cols_v[t, i]:
                fire_idx[n_fire] = i
                n_fire += 1
        if n_fire == 0:
            continue
        for j in range(n_rows):
            if not rows_v[t, j]:
                continue
            for k in range(n_fire):
                i = fire_idx[k]
                if ctoc > 0.0:
                    factor = 1.0 + ctoc * noise_v[pos]
                    pos += 1
                    if factor < 0.0:
                        factor = 0.0
                else:
                    factor = 1.0
                if acc_v[j, i] == 0.0:
                    touched_v[n_touched] = j * n_cols + i
                    n_touched += 1
                acc_v[j, i] += factor

    # apply only the touched cells, zeroing the accumulator on the way out
    # (same per-cell arithmetic as apply_update; untouched cells are no-ops
    # there too)
    for m in range(n_touched):
        flat = touched_v[m]
        j = flat // n_cols
        i = flat - j * n_cols
        if acc_v[j, i] == 0.0:
            continue
        sr = 1.0 if d_row[j] > 0.0 else (-1.0 if d_row[j] < 0.0 else 0.0)
        sc = 1.0 if d_col[i] > 0.0 else (-1.0 if d_col[i] < 0.0 else 0.0)
        d = sr * sc
        value = w_v[j, i] + (d * (up[j, i] if d > 0.0 else down[j, i])) * acc_v[j, i]
        if value > hi[j, i]:
            value = hi[j, i]
        if value < lo[j, i]:
            value = lo[j, i]
        w_v[j, i] = value
        acc_v[j, i] = 0.0
    return pos


def apply_update(w, acc, sign_row, sign_col, dw_plus, dw_minus, w_min, w_max):
    cdef double[:, ::1] w_v = w
    cdef const double[:, ::1] acc_v = acc
    cdef const double[::1] sr = sign_row
    cdef const double[::1] sc = sign_col
    cdef const double[:, ::1] up = dw_plus
    cdef const double[:, ::1] down = dw_minus
    cdef const double[:, ::1] lo = w_min
    cdef const double[:, ::1] hi = w_max

    cdef Py_ssize_t n_rows = w_v.shape[0]
    cdef Py_ssize_t n_cols = w_v.shape[1]
    cdef Py_ssize_t i, j
    cdef double d, value

    for j in range(n_rows):
        if sr[j] == 0.0:
            continue
        for i in range(n_cols):
            if acc_v[j, i] == 0.0:
                continue
            d = sr[j] * sc[i]
            # same expression order as the numpy twin: (d * step) * acc
            value = w_v[j, i] + (d * (up[j, i] if d > 0.0 else down[j, i])) * acc_v[j, i]
            if value > hi[j, i]:
                value = hi[j, i]
            if value < lo[j, i]:
                value = lo[j, i]
            w_v[j, i] = value
