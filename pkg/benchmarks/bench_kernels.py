"""Benchmark the compiled kernels against their numpy twins.

Times the two hot paths of analog training — the read pipeline around the
matrix-vector product and the stochastic pulse update — on realistic tile
shapes, plus the individual kernels. The compiled and numpy twins are
bit-identical (see tests/test_kernels.py); this script reports what the
compilation buys.

Usage:
    python benchmarks/bench_kernels.py [--rows 256] [--cols 156] [--repeats 200]
"""

import argparse
import time

import numpy as np

from rpulstm import kernels
from rpulstm.device import RpuConfig, sample_device_array
from rpulstm.tile import AnalogTile


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_pair(name, make_args, numpy_fn, compiled_fn, repeats):
    t_np = timeit(lambda: numpy_fn(*make_args()), repeats)
    if compiled_fn is None:
        print(f"{name:<22} numpy {t_np * 1e6:9.1f} us   compiled: not built")
        return
    t_cy = timeit(lambda: compiled_fn(*make_args()), repeats)
    print(f"{name:<22} numpy {t_np * 1e6:9.1f} us   compiled {t_cy * 1e6:9.1f} us"
          f"   speedup {t_np / t_cy:6.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=256,
                        help="tile rows (4*hidden for an LSTM block)")
    parser.add_argument("--cols", type=int, default=156,
                        help="tile columns (inputs + hidden + 1)")
    parser.add_argument("--bl", type=int, default=10, help="update slots")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows, cols, bl = args.rows, args.cols, args.bl
    cy = kernels._kernels_cy
    print(f"tile {rows}x{cols}, bl={bl}, repeats={args.repeats}, "
          f"compiled kernels {'available' if cy else 'NOT BUILT'}\n")

    # ---- individual kernels ------------------------------------------
    v = rng.uniform(-1, 1, cols)
    u = rng.random(cols)
    bench_pair("dac_nearest", lambda: (v, 15.0),
               kernels.dac_nearest_numpy, cy.dac_nearest if cy else None, args.repeats)
    bench_pair("dac_stochastic", lambda: (v, 15.0, u),
               kernels.dac_stochastic_numpy, cy.dac_stochastic if cy else None, args.repeats)

    y0 = rng.normal(0, 5, rows)
    bench_pair("read_output", lambda: (y0.copy(), 12.0, 255.0),
               kernels.read_output_numpy, cy.read_output if cy else None, args.repeats)

    u2 = rng.random((bl, cols))
    values = rng.normal(0, 0.4, cols)
    bench_pair("pulse_bits", lambda: (u2, values, 1.7),
               kernels.pulse_bits_numpy, cy.pulse_bits if cy else None, args.repeats)

    # ---- full pulse update -------------------------------------------
    # realistic sparsity: strong columns (activations), weak rows (errors)
    x = rng.uniform(-1, 1, cols)
    delta = rng.normal(0, 0.05, rows)
    gain = 1.7
    col_fires, cc = kernels.pulse_bits_numpy(rng.random((bl, cols)), x, gain)
    row_fires, rc = kernels.pulse_bits_numpy(rng.random((bl, rows)), delta, gain)
    events = int(rc @ cc)
    noise = rng.standard_normal(events)
    ctoc = 0.3
    dev = sample_device_array(rows, cols, RpuConfig(), seed=1)
    w0 = np.clip(rng.normal(0, 0.05, (rows, cols)), dev.w_min, dev.w_max)
    acc = np.zeros((rows, cols))
    print(f"\npulse update with {events} coincidences:")

    def update_args():
        return (w0.copy(), acc, row_fires, col_fires, noise, ctoc, delta, x,
                dev.dw_plus, dev.dw_minus, dev.w_min, dev.w_max,
                np.empty(events, np.intp))

    bench_pair("pulse_update", update_args,
               kernels.pulse_update_numpy, cy.pulse_update if cy else None, args.repeats)

    # ---- end-to-end managed read -------------------------------------
    cfg = RpuConfig()
    tile = AnalogTile(w0, "analog", cfg, dev, np.random.default_rng(2))
    x_read = rng.uniform(-1.2, 1.2, cols)
    t = timeit(lambda: tile.managed_forward(x_read), args.repeats)
    print(f"\nmanaged_forward (whole read pipeline, current dispatch): {t * 1e6:.1f} us")


if __name__ == "__main__":
    main()
