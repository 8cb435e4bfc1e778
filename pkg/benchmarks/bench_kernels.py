"""Compare the numba kernels with the plain Python/numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Each backend runs in its own interpreter because the switch
(ATCIRCLE_DISABLE_NUMBA) is read at import time.  Compilation is excluded:
every kernel is called once before timing.  Both backends must return the
same labels and objectives; the script exits nonzero otherwise.
"""
import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
import numpy as np
from atcircle import _kernels
from atcircle._accel import HAVE_NUMBA
from atcircle.energy_core import EnergyParams, JumpCost
from atcircle.fields import GridSpec, VortexConfig, make_dipole_map
from atcircle.lifting_opt import LiftingProblem

repeat = int(sys.argv[1])
g = JumpCost.build(EnergyParams())
rng = np.random.default_rng(0)


def best_of(fn):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


results = {"numba": HAVE_NUMBA}

small = LiftingProblem(rng.uniform(0, 2 * np.pi, (3, 4)), g, K=1)
a, b = small.edges
brute = _kernels.bruteforce if HAVE_NUMBA else _kernels.bruteforce_numpy
t, (k, val) = best_of(lambda: brute(small.ncells, a, b, small.costs, 1, 0))
results["bruteforce_3x4_K1"] = {"seconds": t, "objective": float(val), "k": [int(x) for x in k]}

n = 17 if "--quick" in sys.argv else 33
grid = GridSpec.square(n)
prob = LiftingProblem.from_field(make_dipole_map(grid, VortexConfig.dipole(distance=0.5)), g, K=2)
ptr, nbr, eid, sgn = prob.adjacency
a, b = prob.edges


def ls():
    k0 = np.zeros(prob.ncells, dtype=np.int64)
    return _kernels.local_search(k0, n, n, ptr, nbr, eid, sgn, prob.costs, 2, 0, 12345, 1e-13)


t, (k, moves, _) = best_of(ls)
results[f"local_search_dipole_{n}x{n}"] = {
    "seconds": t, "objective": float(_kernels.objective(k, a, b, prob.costs)), "moves": int(moves),
    "k_sum": int(k.sum()),
}

big = rng.integers(-2, 3, prob.ncells).astype(np.int64)
t, val = best_of(lambda: [_kernels.objective(big, a, b, prob.costs) for _ in range(200)][-1])
results["objective_x200"] = {"seconds": t, "objective": float(val)}
print(json.dumps(results))
"""


def run_backend(disable, repeat, quick):
    env = dict(os.environ, ATCIRCLE_DISABLE_NUMBA="1" if disable else "0")
    args = [sys.executable, "-c", CHILD, str(repeat)] + (["--quick"] if quick else [])
    out = subprocess.run(args, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="17x17 local-search grid instead of 33x33")
    args = p.parse_args()

    t0 = time.perf_counter()
    fast = run_backend(False, args.repeat, args.quick)
    slow = run_backend(True, args.repeat, args.quick)
    if not fast["numba"]:
        print("numba is not importable here; both columns use the fallback")

    ok = True
    print(f"{'kernel':32s} {'numba [s]':>12s} {'fallback [s]':>13s} {'speedup':>9s}  agree")
    for key in fast:
        if key == "numba" or key not in slow:
            continue
        f, s = fast[key], slow[key]
        same = {k: v for k, v in f.items() if k != "seconds"} == {k: v for k, v in s.items() if k != "seconds"}
        ok &= same
        print(f"{key:32s} {f['seconds']:12.4f} {s['seconds']:13.4f} {s['seconds'] / f['seconds']:9.1f}  {same}")
    print(f"total wall time {time.perf_counter() - t0:.1f} s")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
