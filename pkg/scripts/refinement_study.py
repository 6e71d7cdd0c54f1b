"""Grid refinement of the marched field and the reconstructed residuals.

    python scripts/refinement_study.py --m 0.5 --a1 0.1 --v1 0.05
"""
import argparse

import numpy as np

from wedgelayer.line_method import march
from wedgelayer.reconstruct import continuity_residual, momentum_residual, reconstruct
from wedgelayer.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--variant", default="planar", choices=["planar", "axisymmetric"])
    ap.add_argument("--m", type=float, default=1.0)
    ap.add_argument("--a1", type=float, nargs="*", default=[])
    ap.add_argument("--v1", type=float, nargs="*", default=[])
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()

    base = Scenario(variant=args.variant, m=args.m, a1_coeffs=tuple(args.a1), v1_coeffs=tuple(args.v1))
    xs = np.linspace(0.0, base.X, 26)
    prev, rows = None, []
    for lvl in range(args.levels):
        n, h, per = 256 * 2**lvl, 0.02 / 2**lvl, 32 * 2**lvl
        f = march(base.with_(N=n, h=h))
        pf = reconstruct(f, per_layer=per)
        om = np.array([f.omega_at(x) for x in xs])
        # compare on the coarse eta grid shared by every level
        om = om[:, :: 2**lvl]
        d = np.nan if prev is None else float(np.max(np.abs(om - prev)))
        prev = om
        rows.append((n, h, d, continuity_residual(pf)[0], momentum_residual(pf)[0]))

    print(f"{'N':>6} {'h':>8} {'omega change':>13} {'continuity':>11} {'momentum':>11}")
    for n, h, d, c, mo in rows:
        print(f"{n:>6} {h:>8.4f} {d:>13.3e} {c:>11.3e} {mo:>11.3e}")
    for col, name in ((3, "continuity"), (4, "momentum")):
        v = np.array([r[col] for r in rows])
        print(f"{name} orders: {np.round(np.log2(v[:-1] / v[1:]), 3).tolist()}")


if __name__ == "__main__":
    main()
