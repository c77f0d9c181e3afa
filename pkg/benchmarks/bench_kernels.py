"""
Benchmark the numba kernels against their pure-numpy twins.

Both flavours are imported directly from ``kinedict._kernels`` so one run
compares them regardless of KINEDICT_DISABLE_JIT. Run with

    python3 benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from kinedict import _kernels as K
from kinedict import quat
from kinedict._jit import HAVE_NUMBA
from kinedict.fitting import synthesize_problem
from kinedict.kinematics import Skeleton
from kinedict.obdl import Dictionary


def time_function(func, *args, n_runs=20):
    """Mean and standard deviation of wall time over ``n_runs`` calls."""
    times = []
    for _ in range(n_runs):
        start = time.perf_counter()
        func(*args)
        times.append(time.perf_counter() - start)
    return float(np.mean(times)), float(np.std(times))


def compare(name, fast, slow, args, n_runs):
    fast(*args)  # compile / warm up
    slow(*args)
    tf, sf = time_function(fast, *args, n_runs=n_runs)
    tn, sn = time_function(slow, *args, n_runs=n_runs)
    print(f"{name:<28s} {tf * 1e3:10.3f} +/- {sf * 1e3:7.3f}   {tn * 1e3:10.3f} +/- {sn * 1e3:7.3f}   "
          f"{tn / tf:7.1f}x")


def _fit_args(rng):
    skel = Skeleton.default()
    dicts = []
    for name in skel.articulated:
        center = quat.from_rotvec(rng.normal(0.0, 0.3, 3))
        atoms = quat.perturb(np.repeat(center[None], 16, axis=0), rng.normal(0.0, 0.35, (16, 3)))
        dicts.append(Dictionary(atoms.T, mode="quaternion", joint_label=name))
    problem, _ = synthesize_problem(skel, dicts, rng)
    atoms, n = problem.packed_atoms()
    Z = rng.normal(size=atoms.shape[:2])
    return (skel.parents, skel.offsets, atoms, n, Z, 100.0, np.array([112.0, 112.0]),
            np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), problem.observed_2d, problem.visible_2d,
            problem.observed_3d, problem.visible_3d, 1.0, 1.0, True, True, True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print("=" * 96)
    print("kinedict kernel benchmark: numba vs numpy")
    print("=" * 96)
    print(f"numba available: {HAVE_NUMBA}   default backend: {K.BACKEND}")
    if not HAVE_NUMBA:
        print("numba is not installed; both columns run the numpy code")
    print(f"{'kernel':<28s} {'numba ms':>21s}   {'numpy ms':>21s}   {'speedup':>8s}")
    print("-" * 96)

    Z = rng.normal(size=(4096, 16))
    compare("sparsemax_rows 4096x16", K._sparsemax_rows_loops, K._sparsemax_rows_np, (Z,), args.repeats)

    D = rng.normal(size=(4, 16))
    D /= np.linalg.norm(D, axis=0)
    X = D @ rng.dirichlet(np.ones(16), size=256).T
    W0 = rng.normal(size=(16, 256))
    base = 1.0 / np.linalg.norm(D, 2) ** 2
    compare("code_solve 4x16, b=256", K._code_solve_loops, K._code_solve_np,
            (D, X, W0, base, 200, 1e-9, 30), max(2, args.repeats // 4))

    skel = Skeleton.default()
    Q = quat.random_uniform(rng, skel.n_joints - 1)
    compare("fk 24 joints", K._fk_loops, K._fk_np, (skel.parents, skel.offsets, Q, np.eye(3)),
            args.repeats * 50)

    compare("pose_loss_grad 23x16", K._pose_loss_grad_loops, K._pose_loss_grad_np, _fit_args(rng),
            args.repeats * 10)
    print("-" * 96)


if __name__ == "__main__":
    main()
