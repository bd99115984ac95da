"""Timing comparison of the compiled and pure kernel backends.

Two measurements per kernel: the raw sweep on a large tree (in process,
both implementations imported side by side) and a full solve (in a child
interpreter per backend, so the import-time backend choice applies; the
child times only the solve, not interpreter startup).

Usage:
    python benchmarks/bench_backends.py            # full size
    python benchmarks/bench_backends.py --quick    # small tree, one repeat
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from impulsolve import _kernels_py, scenario  # noqa: E402

try:
    from impulsolve import _kernels as _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(depth, repeats):
    tree = scenario.generate_walk_tree(2, depth, [((1.0,), 0.5),
                                                  ((-1.0,), 0.5)])
    arrays = tree.arrays
    n = arrays.n
    rng = np.random.default_rng(0)  # benchmark only; solvers never use this
    pay = rng.uniform(-1.0, 1.0, size=n)
    obst = rng.uniform(-1.0, 1.0, size=n)
    out = np.empty(n)
    counts = np.zeros(n, dtype=np.int64)

    jobs = {
        "expect_children_add": lambda impl: impl.expect_children_add(
            arrays.ptr, arrays.child, arrays.prob, pay, obst, out),
        "sweep_max_add": lambda impl: impl.sweep_max_add(
            arrays.ptr, arrays.child, arrays.prob, pay, obst, 0.0, out),
        "sweep_max_mul": lambda impl: impl.sweep_max_mul(
            arrays.ptr, arrays.child, arrays.prob, np.exp(pay), obst, 1.0, out),
        "sample_leaf_counts": lambda impl: impl.sample_leaf_counts(
            arrays.ptr, arrays.child, arrays.thr, arrays.root, depth, 7,
            20000, counts),
    }
    print(f"kernel timings, tree with {n} nodes (best of {repeats}):")
    for name, job in jobs.items():
        pure = timeit(lambda: job(_kernels_py), repeats)
        if _compiled is None:
            print(f"  {name:24s} pure {pure * 1e3:8.2f} ms   compiled: n/a")
            continue
        fast = timeit(lambda: job(_compiled), repeats)
        print(f"  {name:24s} pure {pure * 1e3:8.2f} ms   "
              f"compiled {fast * 1e3:8.2f} ms   x{pure / fast:6.1f}")


_SOLVE_CHILD = r"""
import json, sys, time
from impulsolve import risk_neutral, scenario
from impulsolve._backend import backend_name
from impulsolve.problem import load_problem

tree = scenario.load_tree(sys.argv[1])
spec = load_problem(sys.argv[2])
t0 = time.perf_counter()
res = risk_neutral.solve(tree, spec)
dt = time.perf_counter() - t0
print(json.dumps({"backend": backend_name(), "seconds": dt,
                  "root": res.root_value}))
"""


def bench_solve(depth, tmpdir):
    from impulsolve import problem

    tree = scenario.generate_walk_tree(2, depth, [((1.0,), 0.5),
                                                  ((-1.0,), 0.5)])
    spec = problem.ProblemSpec(
        theta=0.5, delta=2, impulses=((1.0,), (-1.0,)), psi=(0.25, 0.25),
        g=problem.BoundedFunction(["clamp", ["coord", 0], -1.0, 1.0], 1.0),
        horizon=depth)
    tree_p = os.path.join(tmpdir, "bench_tree.json")
    spec_p = os.path.join(tmpdir, "bench_spec.json")
    scenario.save_tree(tree, tree_p)
    problem.save_problem(spec, spec_p)

    print(f"full solve, tree with {len(tree)} nodes, "
          f"budget {spec.saturating_cap()}:")
    rows = {}
    for pure in (False, True):
        env = dict(os.environ)
        if pure:
            env["IMPULSOLVE_PURE"] = "1"
        else:
            env.pop("IMPULSOLVE_PURE", None)
        out = subprocess.run([sys.executable, "-c", _SOLVE_CHILD, tree_p,
                              spec_p], env=env, capture_output=True,
                             text=True, check=True)
        row = json.loads(out.stdout)
        rows[row["backend"]] = row
        print(f"  {row['backend']:8s} {row['seconds']:8.3f} s   "
              f"root {row['root']!r}")
    if "compiled" in rows and "pure" in rows:
        assert rows["compiled"]["root"] == rows["pure"]["root"], \
            "backends disagree"
        print(f"  speedup x{rows['pure']['seconds'] / rows['compiled']['seconds']:.1f}, "
              f"identical root values")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=None,
                    help="walk-tree depth (default 14, or 9 with --quick)")
    ap.add_argument("--repeats", type=int, default=None)
    ap.add_argument("--quick", action="store_true",
                    help="small tree and single repeat, for smoke runs")
    args = ap.parse_args()
    depth = args.depth or (9 if args.quick else 14)
    repeats = args.repeats or (1 if args.quick else 5)
    if _compiled is None:
        print("note: compiled extension not importable, pure numbers only")
    bench_kernels(depth, repeats)
    import tempfile
    with tempfile.TemporaryDirectory() as tmpdir:
        bench_solve(min(depth, 12), tmpdir)


if __name__ == "__main__":
    main()
