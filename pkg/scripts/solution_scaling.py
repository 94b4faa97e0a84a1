"""Sup-distance between the graph p = 2 solution and the 1-D continuum minimizer.

Sweeps (N, h) on the cluster density with labels (-1, -1) and (1, 1). The
error is governed by N h^2: with few neighbours per label the harmonic
solution flattens away from the labels and a boundary layer forms.

    python3 scripts/solution_scaling.py [--seeds 10] [--eps 0.1] [--out scaling.csv]
"""
import argparse
import csv

import numpy as np

from plap.continuum import closed_form_1d
from plap.density import make_cluster_instance
from plap.graph import EdgeKernel, LabelSet, build_graph
from plap.rng import make_rng, split_seeds
from plap.solve import UnlabeledComponentError, solve_p2

GRID = [(5000, 0.05), (5000, 0.02), (5000, 0.01), (5000, 0.005), (20000, 0.02), (20000, 0.01)]


def sup_error(inst, N, h, seed):
    x = np.concatenate([inst.density.sample(N - 2, make_rng(seed))[:, 0], [-1.0, 1.0]])
    f = solve_p2(build_graph(x, EdgeKernel("indicator"), h), LabelSet([N - 2, N - 1], [-1.0, 1.0])).f
    cf = closed_form_1d(inst.density, [(-1.0, -1.0), (1.0, 1.0)], 2)
    err = np.abs(f - cf(x.reshape(-1, 1)))
    return float(err.max()), float(x[np.argmax(err)])


def main():
    ap = argparse.ArgumentParser(description="graph vs continuum solution error over (N, h)")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    inst = make_cluster_instance(args.eps)
    rows = []
    print(f"{'N':>6} {'h':>7} {'N h^2':>7} {'median':>8} {'min':>8} {'max':>8}  argmax x (first seed)")
    for N, h in GRID:
        try:
            res = [sup_error(inst, N, h, s) for s in split_seeds(0, args.seeds)]
        except UnlabeledComponentError:
            print(f"{N:6d} {h:7.4f} {N * h * h:7.3f}  graph has an unlabeled component")
            continue
        errs = [e for e, _ in res]
        rows.append((N, h, N * h * h, np.median(errs), min(errs), max(errs)))
        print(f"{N:6d} {h:7.4f} {N * h * h:7.3f} {np.median(errs):8.4f} {min(errs):8.4f} {max(errs):8.4f}"
              f"  {res[0][1]:+.3f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\r\n")
            wr.writerow(["N", "h", "N_h2", "median", "min", "max"])
            wr.writerows(rows)


if __name__ == "__main__":
    main()
