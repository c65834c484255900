"""Numba vs numpy timing for the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is called once
to trigger compilation, checked for agreement, then timed.
"""

from __future__ import annotations

import time

import numpy as np

from uswipt import _accel


def _best(fn, args, repeat: int = 5) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def _cases(rng):
    m = 256
    trials = 4096
    ps = np.abs(rng.standard_normal(m))
    fs = rng.standard_normal(m)
    scales = np.abs(rng.standard_normal(trials))
    yield (
        "branch_papr (4096 x 256)",
        _accel.branch_papr_numba,
        _accel.branch_papr_numpy,
        (ps, fs, scales, 0.1 * rng.standard_normal((trials, m)), 0.1 * rng.standard_normal((trials, m)), 0.01),
    )
    yield (
        "log_max_cdf (4096 x 256)",
        _accel.log_max_cdf_numba,
        _accel.log_max_cdf_numpy,
        (ps, scales * 3.0, np.full(trials, 4.0)),
    )
    x = rng.standard_normal((64, 16, 20))
    w = rng.standard_normal((16, 16, 2))
    b = rng.standard_normal(16)
    yield "conv forward (64 x 16 x 20)", _accel.causal_conv_forward_numba, _accel.causal_conv_forward_numpy, (x, w, b, 4)
    g = rng.standard_normal((64, 16, 20))
    yield "conv backward (64 x 16 x 20)", _accel.causal_conv_backward_numba, _accel.causal_conv_backward_numpy, (x, w, 4, g)


def main():
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, fast, ref, args in _cases(rng):
        a, b = fast(*args), ref(*args)
        a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-12)
        t_fast = _best(fast, args)
        t_ref = _best(ref, args)
        print(f"{name:<30} {1e3 * t_fast:>10.3f} {1e3 * t_ref:>10.3f} {t_ref / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
