"""Verify a grid of wedge exponents and perturbation scales; prints the table and writes CSV."""
import argparse
import csv

from wedgelayer.pipeline import sweep
from wedgelayer.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=float, nargs="+", default=[0.2, 0.5, 1.0, 2.0, 3.0])
    ap.add_argument("--scales", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--variant", default="planar", choices=["planar", "axisymmetric"])
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    template = Scenario(variant=args.variant, a1_coeffs=(0.1,), v1_coeffs=(0.05,))
    rows = sweep(template, args.m, scales=args.scales, workers=args.workers)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "scale", "status", "failed_checks"])
        for m, scale, rep, err in rows:
            if err is not None:
                status, failed = "error", err
            else:
                status = "pass" if rep.passed() else "fail"
                failed = ";".join(c.name for c in rep.failures())
            w.writerow([m, scale, status, failed])
            print(f"m={m:<5g} scale={scale:<4g} {status:5s} {failed}")


if __name__ == "__main__":
    main()
