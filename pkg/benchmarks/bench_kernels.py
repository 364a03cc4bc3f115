"""Benchmark the compiled tape kernel against the numpy fallback.

Times full RK4 integrations of the shipped models at several generator
counts; the compiled backend runs the whole step loop in C, the fallback
interprets the same tape with numpy.

Usage:  python benchmarks/bench_kernels.py [--steps N]
"""

import argparse
import pathlib
import sys
import time

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

import numpy as np

from smech.grassmann import GrassmannElement as G
from smech.kernel import available_backends
from smech.mech import LagrangianSystem
from smech.modelio import load_model
from smech.scurves import integrate, system_for

MODELS = SRC / "smech" / "models"


def case_dirac(q):
    model = load_model(MODELS / "dirac.sm")
    csys = system_for(LagrangianSystem.from_model(model), q)
    init = {"psi_p": G.generator(1, q), "psi_m": G.generator(2, q)}
    return csys, init


def case_n2(q):
    model = load_model(MODELS / "n2_harmonic.sm")
    csys = system_for(LagrangianSystem.from_model(model), q)
    init = {"x": G.scalar(0.4, q), "dx": G.scalar(0.2, q),
            "psi_p": G.generator(1, q), "psi_m": G.generator(2, q)}
    return csys, init


def case_supersphere(q):
    model = load_model(MODELS / "supersphere.sm")
    csys = system_for(LagrangianSystem.from_model(model), q)
    init = {"th": 1.1, "dth": 0.05, "dph": 0.7,
            "dpsi_p": G.generator(1, q)}
    return csys, init


CASES = [
    ("dirac q=2", case_dirac, 2),
    ("dirac q=4", case_dirac, 4),
    ("n2_harmonic q=2", case_n2, 2),
    ("n2_harmonic q=4", case_n2, 4),
    ("supersphere q=2", case_supersphere, 2),
]


def run(name, build, q, steps, backends):
    csys, init = build(q)
    dt = 1e-3
    t1 = steps * dt
    rows = {}
    ref = None
    for be in backends:
        t0 = time.perf_counter()
        traj = integrate(csys, init, 0.0, t1, dt, backend=be)
        rows[be] = time.perf_counter() - t0
        if ref is None:
            ref = traj.data
        else:
            drift = float(np.max(np.abs(traj.data - ref)))
            assert drift < 1e-12, f"{name}: backends disagree by {drift}"
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args()
    backends = available_backends()
    print(f"backends: {', '.join(backends)}   ({args.steps} RK4 steps each)")
    header = f"{'case':<18}" + "".join(f"{be:>12}" for be in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, build, q in CASES:
        rows = run(name, build, q, args.steps, backends)
        line = f"{name:<18}" + "".join(f"{rows[be]:>11.3f}s" for be in backends)
        if len(backends) > 1:
            line += f"{rows['py'] / rows['c']:>9.0f}x"
        print(line)


if __name__ == "__main__":
    main()
