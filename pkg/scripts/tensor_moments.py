"""Monte Carlo check of int w(|z|) <u, z>^p dz against two closed forms.

The d^(-p/2) factor coincides with the isotropic moment E[theta_1^p] only
for p = 2; this prints both and the standardized gaps.

    python3 scripts/tensor_moments.py [--samples 1000000]
"""
import argparse

import numpy as np

from plap.continuum import isotropic_moment, tensor_contraction_check
from plap.graph import EdgeKernel


def main():
    ap = argparse.ArgumentParser(description="isotropic moment identity")
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--kernel", default="indicator", choices=["indicator", "gaussian"])
    args = ap.parse_args()
    w = EdgeKernel(args.kernel)
    print(f"{'p':>2} {'d':>2} {'lhs':>11} {'d^(-p/2) rhs':>13} {'z':>7} {'exact rhs':>11} {'z':>7}"
          f" {'d^(-p/2)':>9} {'E th^p':>9}")
    for d in (2, 3, 4):
        u = np.ones(d) / np.sqrt(d)
        for p in (2, 3, 4, 6):
            r = tensor_contraction_check(w, p, d, u, mc_samples=args.samples, seed=10 * d + p)
            print(f"{p:2d} {d:2d} {r.lhs:11.6f} {r.rhs:13.6f} {(r.lhs - r.rhs) / r.mc_stderr:7.1f} "
                  f"{r.rhs_exact:11.6f} {(r.lhs - r.rhs_exact) / r.mc_stderr:7.1f} "
                  f"{d ** (-p / 2):9.5f} {isotropic_moment(p, d) if p % 2 == 0 else 0.0:9.5f}")


if __name__ == "__main__":
    main()
