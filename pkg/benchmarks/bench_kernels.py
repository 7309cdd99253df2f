"""Compiled vs pure-Python kernels: speed and agreement.

    python benchmarks/bench_kernels.py [--hours 2] [--repeat 3]

Times the plant integration over a synthetic mission with each backend, then
a full simulation per backend in a subprocess (the backend is fixed at import).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from shipems._kernels import _pycore
from shipems.sim import generate_synthetic_mission
from shipems.system import ShipSystem

try:
    from shipems._kernels import _core
except ImportError:
    _core = None


def integrate(mod, load, params, u=3.0, period=30):
    fc, bat, deg = params
    n = load.size
    outs = [np.empty(n) for _ in range(6)]
    p, xi = float(load[0]), 0.5
    for k in range(0, n, period):
        hold = min(period, n - k)
        step_u = u if (k // period) % 2 == 0 else -u
        p, xi, *_ = mod.integrate_hold(p, xi, step_u, k, hold, 1.0, load, *outs, fc, bat, deg, True)
    return p, xi, outs


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


SIM_SNIPPET = """
import json, time
from shipems import KERNEL_BACKEND
from shipems.sim import SimConfig, generate_synthetic_mission, run_mission
m = generate_synthetic_mission(7, {seconds})
t0 = time.perf_counter()
r = run_mission(m, SimConfig(strategy="ecms"))
print(json.dumps({{"backend": KERNEL_BACKEND, "s": time.perf_counter() - t0, "h2": r.h2_kg, "deg": r.deg_uv}}))
"""


def full_sim(pure: bool, seconds: float) -> dict:
    env = dict(os.environ, SHIPEMS_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(seconds=seconds)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--hours", type=float, default=2.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    load = np.ascontiguousarray(generate_synthetic_mission(7, args.hours * 3600).load_at(1.0))
    params = ShipSystem().kernel_params("bol")
    print(f"plant integration, {load.size} steps of 1 s")
    t_py = best_of(lambda: integrate(_pycore, load, params), args.repeat)
    print(f"  python   {t_py * 1e3:9.2f} ms")
    if _core is None:
        print("  compiled extension not built; nothing to compare")
        return
    t_cy = best_of(lambda: integrate(_core, load, params), args.repeat)
    print(f"  cython   {t_cy * 1e3:9.2f} ms   speed-up x{t_py / t_cy:.1f}")
    a, b = integrate(_pycore, load, params), integrate(_core, load, params)
    diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a[2], b[2]))
    print(f"  max |python - cython| over all outputs: {diff:.3e}")

    print("full ECMS simulation (separate interpreters)")
    py, cy = full_sim(True, args.hours * 3600), full_sim(False, args.hours * 3600)
    for r in (py, cy):
        print(f"  {r['backend']:8s} {r['s']:8.3f} s   H2 {r['h2']:.9f} kg   deg {r['deg']:.9f} uV")
    print(f"  speed-up x{py['s'] / cy['s']:.1f}")


if __name__ == "__main__":
    main()
