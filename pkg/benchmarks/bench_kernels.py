"""Compare the numba and numpy implementations of the training kernels.

    python3 benchmarks/bench_kernels.py [--rows 4096] [--repeat 20] [--epoch]

Kernel timings run both variants in-process (the numba ones are compiled
once before timing).  ``--epoch`` additionally times one ICEnet training
epoch end-to-end in two subprocesses, one with ``ICENET_DISABLE_NUMBA=1``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from icenet import kernels

EPOCH_SCRIPT = r"""
import time
from icenet import kernels
from icenet.synth_data import SynthSpec, generate
from icenet.data_schema import fit_schema, transform, split
from icenet.network import Architecture
from icenet.penalties import ConstraintSpec, ColumnConstraint
from icenet.trainer import TrainConfig, train
spec = SynthSpec(n_rows=20000, seed=1)
raw = generate(spec)
cons = ConstraintSpec({"BonusMalus": ColumnConstraint(1.0, 100.0), "Density": ColumnConstraint(1.0, 100.0)})
schema = fit_schema(raw, list(cons.active_columns))
parts = split(transform(raw, schema), (0.8, 0.1, 0.1), 0)
arch = Architecture.for_schema(schema)
cfg = TrainConfig(epochs=1, runs=1, mode="icenet_global")
train(parts, arch, cons, TrainConfig(epochs=1, runs=1, mode="fcn"), schema)  # warm-up / compile
t = time.perf_counter()
train(parts, arch, cons, cfg, schema)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(rows: int, repeat: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    blocks = rng.normal(size=(rows, 100)).cumsum(axis=1)
    idx = rng.integers(0, 22, size=rows * 8)
    grads = rng.normal(size=(rows * 8, 5))
    grid = np.sort(rng.choice(np.arange(1000.0), size=100, replace=False))
    x = rng.uniform(grid[0], grid[-1], size=rows * 8)
    cases = {
        "smooth_penalty": (kernels.smooth_penalty_numpy, kernels.smooth_penalty_numba, (blocks, 1.0)),
        "mono_penalty": (kernels.mono_penalty_numpy, kernels.mono_penalty_numba, (blocks, 100.0, -1.0)),
        "scatter_add_rows": (lambda *a: kernels.scatter_add_rows_numpy(np.zeros((22, 5)), *a),
                             lambda *a: kernels.scatter_add_rows_numba(np.zeros((22, 5)), *a), (idx, grads)),
        "window_starts": (kernels.window_starts_numpy, kernels.window_starts_numba, (x, grid, 5)),
    }
    out = []
    for name, (f_np, f_nb, args) in cases.items():
        f_nb(*args)  # compile
        out.append((name, best_of(lambda: f_np(*args), repeat), best_of(lambda: f_nb(*args), repeat)))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--epoch", action="store_true", help="also time one training epoch per backend")
    args = ap.parse_args(argv)

    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, t_np, t_nb in kernel_table(args.rows, args.repeat):
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.2f}")

    if args.epoch:
        for disable in ("0", "1"):
            env = dict(os.environ, ICENET_DISABLE_NUMBA=disable)
            res = subprocess.run([sys.executable, "-c", EPOCH_SCRIPT], env=env, capture_output=True, text=True,
                                 check=True)
            backend, secs = res.stdout.split()[-2:]
            print(f"one icenet_global epoch ({backend}): {float(secs):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
