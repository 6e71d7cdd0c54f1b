"""Restart every slice from perturbed warm starts and report the largest disagreement."""
import argparse

import numpy as np

from wedgelayer.line_method import march
from wedgelayer.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variant", default="planar", choices=["planar", "axisymmetric"])
    ap.add_argument("--m", type=float, nargs="+", default=[0.2, 0.5, 1.0, 2.0])
    ap.add_argument("--noise", type=float, default=0.1, help="relative warm-start noise")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    for m in args.m:
        s = Scenario(variant=args.variant, m=m, a1_coeffs=(0.1,), v1_coeffs=(0.05,))
        ref = march(s)
        gaps = [
            float(np.max(np.abs(march(s.with_(seed=k), warm_noise=args.noise).omega - ref.omega)))
            for k in range(1, args.seeds + 1)
        ]
        print(f"m={m:<5g} max gap over {args.seeds} restarts: {max(gaps):.2e} (tol {s.solver.newton_tol:.0e})")


if __name__ == "__main__":
    main()
