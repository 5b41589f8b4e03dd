"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--vectors 20000] [--repeat 5]

Part 1 times the kernels in isolation on identical inputs. Part 2 runs the
same seeded simulation once per backend in a child process (the backend is
chosen at import, so it cannot be switched inside one interpreter) and
checks that both produce the same metrics row.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import subprocess
import sys
import timeit

from porcti import _kernels_py

try:
    from porcti import _kernels as _kernels_c  # type: ignore[attr-defined]
except ImportError:
    _kernels_c = None

SIM_SNIPPET = """
import json, sys, time
from porcti import kernels
from porcti.cli import load_preset
from porcti.runner import run_one
point = load_preset(sys.argv[1]).points[int(sys.argv[2])]
t = time.perf_counter()
row = run_one(point, 0).row
print(json.dumps({"backend": kernels.BACKEND, "seconds": time.perf_counter() - t, "row": row}))
"""


def make_vectors(count: int, seed: int = 7) -> list[tuple]:
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        k = rng.randint(1, 24)
        pv = [rng.uniform(0.05, 0.95) for _ in range(k)]
        out.append((rng.random(), [rng.randint(0, 1) for _ in range(k)], pv, [1.0 - p for p in pv]))
    return out


def bench_posterior(mod, vectors: list[tuple], repeat: int) -> float:
    post = mod.posterior

    def batch():
        for prior, agrees, pv, pi in vectors:
            post(prior, agrees, pv, pi)

    return min(timeit.repeat(batch, number=1, repeat=repeat))


def bench_pick(mod, draws: int, repeat: int) -> float:
    weights = [float(w) for w in range(1, 26)]
    us = [i / draws for i in range(draws)]
    pick = mod.weighted_pick

    def batch():
        for u in us:
            pick(weights, u)

    return min(timeit.repeat(batch, number=1, repeat=repeat))


def run_sim(pure: bool, preset: str, point: int) -> dict:
    env = dict(os.environ)
    if pure:
        env["PORCTI_PURE_PYTHON"] = "1"
    else:
        env.pop("PORCTI_PURE_PYTHON", None)
    cmd = [sys.executable, "-c", SIM_SNIPPET, preset, str(point)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vectors", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-sim", action="store_true")
    ap.add_argument("--sim-preset", default="byzantine_tolerance")
    ap.add_argument("--sim-point", type=int, default=-1, help="grid point of the preset (default: last)")
    args = ap.parse_args()

    if _kernels_c is None:
        print("compiled kernels not built; only the fallback is available")
        return 1
    vectors = make_vectors(args.vectors)
    worst = max(
        abs(_kernels_c.posterior(*v) - _kernels_py.posterior(*v)) for v in vectors
    )
    print(f"posterior parity over {len(vectors)} vectors: max abs diff {worst:.3g}")

    print(f"{'kernel':<22}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, fn, arg in (
        ("posterior batch", bench_posterior, vectors),
        ("weighted_pick x1e5", bench_pick, 100_000),
    ):
        py = fn(_kernels_py, arg, args.repeat)
        cy = fn(_kernels_c, arg, args.repeat)
        print(f"{name:<22}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")

    if not args.skip_sim:
        py = run_sim(True, args.sim_preset, args.sim_point)
        cy = run_sim(False, args.sim_preset, args.sim_point)
        same = py["row"] == cy["row"]
        print(
            f"{'simulation':<22}{py['seconds']:>12.3f}{cy['seconds']:>12.3f}"
            f"{py['seconds'] / cy['seconds']:>9.2f}x  rows identical: {same}"
        )
        if not same:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
