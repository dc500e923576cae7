"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sweep-samples 200000 --threads 4

Times the fused objective/gradient used by the reconstruction and the
per-sample scatter kernel, and checks that both backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from qptkit import kernels
from qptkit.metrics import sample_kets
from qptkit.process import CNOT, random_physical_chi, superoperator
from qptkit.qcore import Rng
from qptkit.recon import TVEC_LEN, _constraint_rows
from qptkit.tomography import amplitude_table


def best_of(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_objective(repeat: int) -> dict[str, tuple[float, object]]:
    gen = np.random.default_rng(0)
    t = gen.standard_normal(TVEC_LEN) * 0.3
    args = (t, amplitude_table(), _constraint_rows(), gen.poisson(100, 256).astype(float), 2000.0, 1e4)
    out = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        out[name] = (best_of(lambda: kernels.objective_and_gradient(*args), repeat, 200),
                     kernels.objective_and_gradient(*args))
    return out


def bench_sweep(n_samples: int, threads: int, repeat: int) -> dict[str, tuple[float, object]]:
    sop = superoperator(random_physical_chi(Rng(1)))
    kets = sample_kets(n_samples, Rng(2))
    out = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        out[name] = (best_of(lambda: kernels.sweep_rows(sop, CNOT.matrix, kets, threads), repeat, 1),
                     kernels.sweep_rows(sop, CNOT.matrix, kets, threads))
    return out


def report(title: str, results: dict, unit: str, scale: float) -> None:
    print(f"\n{title}")
    base = results.get("numpy", (None,))[0]
    for name, (secs, _) in sorted(results.items()):
        speedup = f"{base / secs:5.2f}x" if base else ""
        print(f"  {name:9s} {secs * scale:10.1f} {unit}  {speedup}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sweep-samples", type=int, default=50_000)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    initial = kernels.BACKEND
    print(f"backends: {kernels.available_backends()} (default {initial})")
    try:
        obj = bench_objective(args.repeat)
        sweep = bench_sweep(args.sweep_samples, args.threads, args.repeat)
    finally:
        kernels.use_backend(initial)

    report("objective + gradient (one call, 256 settings)", obj, "us", 1e6)
    report(f"scatter sweep ({args.sweep_samples} inputs, {args.threads} thread(s))", sweep, "ms", 1e3)

    if "compiled" in obj:
        (fn, gn), (fc, gc) = obj["numpy"][1], obj["compiled"][1]
        rows_n, rows_c = sweep["numpy"][1], sweep["compiled"][1]
        print("\nagreement between backends:")
        print(f"  objective rel. diff   {abs(fc - fn) / abs(fn):.1e}")
        print(f"  gradient max diff     {np.max(np.abs(gc - gn)) / np.max(np.abs(gn)):.1e} (relative to max |g|)")
        print(f"  sweep max diff        {np.max(np.abs(rows_c - rows_n)):.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
