"""Benchmark the compiled kernel path against the pure-numpy fallback.

The kernel module picks its implementation at import time from the
MPLT_NO_NUMBA environment variable, so each path runs in a subprocess.
Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json
import sys
import time

import numpy as np

from mplt import kernels

def bench(fn, *args, repeats):
    fn(*args)   # warm-up (includes JIT compilation on the compiled path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best

repeats = int(sys.argv[1])
rng = np.random.default_rng(0)
results = {"numba_active": kernels.HAS_NUMBA}

x = rng.normal(size=(2, 768))
w = rng.normal(size=(1, 2, 7))
b = np.zeros(1)
results["conv1d_forward"] = bench(kernels.conv1d_forward, x, w, b, 3,
                                  repeats=repeats)
gout = rng.normal(size=(1, 768))
results["conv1d_backward"] = bench(kernels.conv1d_backward, x, w, gout, 3,
                                   repeats=repeats)

img = rng.normal(size=(3, 64, 64))
results["im2col_3x3"] = bench(kernels.im2col, img, 3, 1, repeats=repeats)
cols = kernels.im2col(img, 3, 1)
results["col2im_3x3"] = bench(kernels.col2im, cols, 3, 64, 64, 3, 1,
                              repeats=repeats)

frame = rng.normal(size=(480, 640, 3))
fill = frame.reshape(-1, 3).mean(axis=0)
results["bilinear_crop"] = bench(kernels.bilinear_crop, frame,
                                 100.0, 80.0, 300.0 / 256.0, 256, fill,
                                 repeats=repeats)

print(json.dumps(results))
"""


def run_path(no_numba, repeats):
    env = dict(os.environ, MPLT_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeats)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    numpy_res = run_path(True, args.repeats)
    numba_res = run_path(False, args.repeats)
    if not numba_res["numba_active"]:
        print("note: numba unavailable, both columns use the numpy fallback")

    print(f"{'kernel':20s} {'numpy (ms)':>12s} {'numba (ms)':>12s} "
          f"{'speedup':>8s}")
    for key in numpy_res:
        if key == "numba_active":
            continue
        tn = numpy_res[key] * 1e3
        tb = numba_res[key] * 1e3
        print(f"{key:20s} {tn:12.4f} {tb:12.4f} {tn / tb:7.2f}x")


if __name__ == "__main__":
    main()
