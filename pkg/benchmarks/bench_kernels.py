"""Benchmark the compiled stepping kernel against the pure-Python fallback.

Runs representative integration workloads on the builtin models with both
backends, reports wall times and the maximum state deviation between them.

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from posctrl import _kernels_py
from posctrl._core import _kernels, compiled_available
from posctrl.model import MODE_CLOSED, MODE_CONST, MODE_OPEN, builtin, mode_rhs
from posctrl.sim import _output_grid

CASES = [
    ("S1 open loop u=0.25, T=200", "S1", MODE_OPEN, 0.25, [0.5, 3.0], 200.0),
    ("S2 open loop u=1, T=200 (limit cycle)", "S2", MODE_OPEN, 1.0,
     [0.5, 0.5, 0.5], 200.0),
    ("S3 closed loop gamma=1.73, T=200", "S3", MODE_CLOSED, 1.73,
     [1.0, 1.0, 1.0], 200.0),
    ("S3 open loop u=1, T=200 (chaotic)", "S3", MODE_OPEN, 1.0,
     [1.0, 1.0, 1.0], 200.0),
    ("S3 comparison field beta=2, T=200", "S3", MODE_CONST, 2.0,
     [0.0, 0.0, 0.0], 200.0),
]

RTOL, ATOL, H_INIT, H_MIN = 1e-8, 1e-10, 1e-3, 1e-12


def _best_of(fn, repeats=3):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    if not compiled_available():
        print("compiled kernel not built; only the Python fallback is available")
    rows = []
    for label, name, mode, coef, x0, t1 in CASES:
        m = builtin(name)
        x0 = np.asarray(x0, dtype=float)
        grid = _output_grid(0.0, t1, 0.05)
        h_max = 0.05 if name == "S2" else np.inf

        t_py, res_py = _best_of(lambda: _kernels_py.dopri5_span(
            mode_rhs(m, mode, coef), x0, 0.0, t1, RTOL, ATOL, H_INIT, H_MIN,
            h_max, grid))
        if compiled_available():
            t_c, res_c = _best_of(lambda: _kernels.dopri5_span(
                m.kernel_id, m.kernel_params, mode, coef, x0, 0.0, t1, RTOL,
                ATOL, H_INIT, H_MIN, h_max, grid))
            # deviation measured over the first 20 time units: on chaotic
            # orbits any backend difference grows like exp(lambda * t) and
            # late-time comparison is meaningless
            early = grid <= 20.0
            dev = float(np.max(np.abs(res_c[0][early] - res_py[0][early])))
            rows.append((label, res_py[2], t_py, t_c, t_py / t_c, dev))
        else:
            rows.append((label, res_py[2], t_py, None, None, None))

    print(f"{'case':<42} {'steps':>7} {'python':>10} {'compiled':>10} "
          f"{'speedup':>8} {'dev(t<=20)':>10}")
    for label, steps, t_py, t_c, speed, dev in rows:
        if t_c is None:
            print(f"{label:<42} {steps:>7d} {t_py * 1e3:>8.1f}ms {'-':>10} "
                  f"{'-':>8} {'-':>10}")
        else:
            print(f"{label:<42} {steps:>7d} {t_py * 1e3:>8.1f}ms "
                  f"{t_c * 1e3:>8.2f}ms {speed:>7.0f}x {dev:>10.2e}")


if __name__ == "__main__":
    main()
