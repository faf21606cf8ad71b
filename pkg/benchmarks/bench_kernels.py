"""Compare the numba-compiled kernels with the plain numpy fallback.

Each path runs in its own interpreter because the choice is fixed at import
time by ``CLIFMORSE_NO_JIT``.  Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = "--worker"


def _cases():
    import numpy as np

    from clifmorse import _kernels as K
    from clifmorse.geodesic_index import hessian_index_oracle, spec_from_ks
    from clifmorse.path_flow import PolygonPath, shorten_run

    rng = np.random.default_rng(0)
    p = 8
    rots = np.array([K.exp_skew(0.3 * (a - a.T)) for a in rng.standard_normal((256, p, p))])
    g = spec_from_ks([1, 1, 1, 1])
    base = g.sample(16)

    def perturbed():
        v = base.copy()
        r = np.random.default_rng(1)
        for i in range(1, 16):
            x = r.standard_normal((p, p))
            x = x - x.T
            v[i] = v[i] @ K.exp_skew(1e-2 * x / np.linalg.norm(x))
        return v

    def logs():
        for r in rots:
            K.log_orthogonal(r)

    def exps():
        for r in rots:
            K.exp_skew(r - r.T)

    def energy():
        for _ in range(200):
            K.polygon_energy(base)

    def flow():
        shorten_run(PolygonPath(perturbed()))

    def oracle():
        hessian_index_oracle(spec_from_ks([3, 1]), 24, "so")

    return {
        "log_orthogonal x256": logs,
        "exp_skew x256": exps,
        "polygon_energy x200": energy,
        "shorten SO_8, 16 seg": flow,
        "hessian oracle SO_4 (3,1)": oracle,
    }


def worker(repeat: int) -> None:
    from clifmorse import JIT_ENABLED

    out = {"jit": JIT_ENABLED, "timings": {}}
    for name, fn in _cases().items():
        t0 = time.perf_counter()
        fn()  # warm-up (includes compilation on the JIT path)
        first = time.perf_counter() - t0
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["timings"][name] = {"first": first, "best": best}
    json.dump(out, sys.stdout)


def run(flag: str, repeat: int) -> dict:
    env = dict(os.environ, CLIFMORSE_NO_JIT=flag)
    proc = subprocess.run(
        [sys.executable, __file__, WORKER, "--repeat", str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write raw timings here")
    ap.add_argument(WORKER, action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    jit = run("0", args.repeat)
    py = run("1", args.repeat)
    if not jit["jit"]:
        print("warning: numba unavailable, both runs use numpy", file=sys.stderr)
    width = max(len(n) for n in jit["timings"])
    print(f"{'kernel':<{width}}  {'numba [ms]':>11}  {'numpy [ms]':>11}  {'speedup':>8}  {'compile+1st [s]':>15}")
    for name, t in jit["timings"].items():
        a, b = t["best"] * 1e3, py["timings"][name]["best"] * 1e3
        print(f"{name:<{width}}  {a:11.3f}  {b:11.3f}  {b / a:8.1f}  {t['first']:15.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": jit, "numpy": py}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
