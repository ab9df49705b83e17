"""Compare the compiled conv kernels against the pure-numpy fallback.

Run with:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from tsxplain import _conv_numpy

try:
    from tsxplain import _convkernels
except ImportError:
    _convkernels = None


CASES = [
    # (batch, in_channels, length, out_channels, kernel, stride)
    ("small", 32, 1, 96, 3, 3, 1),
    ("medium", 64, 3, 256, 8, 5, 1),
    ("large", 128, 4, 1024, 16, 7, 1),
    ("strided", 64, 3, 512, 8, 5, 2),
]


def bench(fn, *args, repeats=5):
    fn(*args)  # warm up
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    header = f"{'case':<10}{'kernel':<14}{'numpy (ms)':>12}{'cython (ms)':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, b, cin, length, cout, k, stride in CASES:
        x = rng.normal(size=(b, cin, length))
        w = rng.normal(size=(cout, cin, k))
        bias = rng.normal(size=cout)
        out = _conv_numpy.conv1d_forward(x, w, bias, stride)
        g = rng.normal(size=out.shape)

        kernels = [
            ("forward", lambda m: bench(m.conv1d_forward, x, w, bias, stride)),
            ("input_grad", lambda m: bench(m.conv1d_input_grad, g, w, stride, length)),
            ("param_grad", lambda m: bench(m.conv1d_param_grad, x, g, k, stride)),
        ]
        for kname, run in kernels:
            t_np = run(_conv_numpy)
            if _convkernels is None:
                print(f"{name:<10}{kname:<14}{t_np * 1e3:>12.3f}{'n/a':>13}{'n/a':>9}")
            else:
                t_cy = run(_convkernels)
                print(f"{name:<10}{kname:<14}{t_np * 1e3:>12.3f}"
                      f"{t_cy * 1e3:>13.3f}{t_np / t_cy:>8.2f}x")

    if _convkernels is None:
        print("\ncompiled extension not available; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
