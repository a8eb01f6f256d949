"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.  Each line
reports the best wall time per call for both backends and the speedup;
outputs are also checked to be bit-identical.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from bnlab import kernels


def _tree_rows(n: int, levels: int) -> np.ndarray:
    rows = np.arange(1.0, n + 1)[None, :]
    for _ in range(levels):
        rows = kernels.tree_children(rows, 1e-12)
    return rows


def cases():
    rows = _tree_rows(10, 14)
    proj = np.random.default_rng(0).standard_normal((100_000, 12))
    return [
        ("tree_children  n=10, 16384 rows", "tree_children", (rows, 1e-12)),
        ("cluster_counts n=10, 16384 rows", "cluster_counts", (rows,)),
        ("composition_codes n=10, 16384 rows", "composition_codes", (rows,)),
        ("sign_masks 100000 x 12", "sign_masks", (proj,)),
    ]


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.asarray(a).tobytes() == np.asarray(b).tobytes()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':38s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for label, name, call_args in cases():
        times, outs = {}, {}
        for backend, mod in found.items():
            fn = getattr(mod, name)
            outs[backend] = fn(*call_args)
            t = timeit.Timer(lambda: fn(*call_args))
            number, _ = t.autorange()
            times[backend] = min(t.repeat(args.repeat, number)) / number * 1e3
        py = times["python"]
        cy = times.get("cython", float("nan"))
        same = _same(outs["python"], outs["cython"]) if "cython" in outs else None
        print(f"{label:38s} {py:10.3f} {cy:10.3f} {py / cy:8.1f}x  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
