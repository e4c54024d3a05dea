"""Compare the numba kernels with the interpreted fallback (HALFLINE_WEYL_NO_JIT=1).

Each mode runs in its own interpreter because the flag is read at import.
The JIT timing excludes compilation (one warm-up call first).

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from halfline_weyl import _kernels
from halfline_weyl.potential import Potential
from halfline_weyl.propagate import integrate_fundamental, wronskian_drift
from halfline_weyl.spectrum import BoundaryForm, char_function

repeat = int(sys.argv[1])
ix = Potential.complex_airy()
x2 = Potential.monomial(2.0)
D = BoundaryForm.dirichlet()

def fundamental():
    U, V = integrate_fundamental(ix, 0.0, 4.0, 20.0, 1e-9)
    return wronskian_drift(U, V, ix, 0.0, 4.0, 20.0)

def char_fn():
    return abs(char_function(x2, D, 3.1 + 0.2j, 4.2))

out = {"jit": _kernels.USE_JIT}
for name, fn in (("fundamental_ix_4_20", fundamental), ("char_function_x2", char_fn)):
    t0 = time.perf_counter()
    value = fn()
    first = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    out[name] = {"first_call_s": first, "best_s": min(times), "value": float(value)}
print(json.dumps(out))
"""


def run_mode(no_jit: bool, repeat: int) -> dict:
    env = dict(os.environ)
    if no_jit:
        env["HALFLINE_WEYL_NO_JIT"] = "1"
    else:
        env.pop("HALFLINE_WEYL_NO_JIT", None)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    jit = run_mode(False, args.repeat)
    pure = run_mode(True, args.repeat)
    print(f"{'workload':<24}{'numba (s)':>12}{'fallback (s)':>14}{'speed-up':>10}{'|diff|':>12}")
    for key in ("fundamental_ix_4_20", "char_function_x2"):
        a, b = jit[key]["best_s"], pure[key]["best_s"]
        diff = abs(jit[key]["value"] - pure[key]["value"])
        print(f"{key:<24}{a:>12.4f}{b:>14.4f}{b / a:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
