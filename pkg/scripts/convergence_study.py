"""Grid self-convergence of the skeleton solution and Picard traces across H.

    python3 scripts/convergence_study.py
"""
import argparse

import numpy as np

from roughwave.fracspace import Field, Grid, HurstParam, dC_metric
from roughwave.skeleton import bump_control, solve_skeleton, solve_skeleton_direct
from roughwave.swe import bump_data, linear_sigma


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--energy", type=float, default=0.5)
    a = ap.parse_args()
    data, sigma = bump_data(), linear_sigma()
    for H in (0.3, 0.4, 0.45):
        hp = HurstParam(H)
        sols = {}
        for n in a.sizes:
            g = Grid(3.0, n, 1.0, n)
            sols[n] = solve_skeleton_direct(data, sigma, bump_control(g, hp, a.energy), hp, g)
        ref = sols[a.sizes[-1]]
        print(f"H = {H}")
        for n in a.sizes[:-1]:
            k = a.sizes[-1] // n
            r = Field(ref.values[::k, ::k], sols[n].grid)
            print(f"  n = {n:4d}: d_C to finest = {dC_metric(sols[n], r):.3e}")
        g = Grid(3.0, 64, 1.0, 64)
        _, tr = solve_skeleton(data, sigma, bump_control(g, hp, a.energy), hp, g, tol=1e-12)
        d = tr.distances
        print("  Picard distances:", " ".join(f"{x:.1e}" for x in d))
        print("  successive ratios:", " ".join(f"{x:.2e}" for x in d[1:] / d[:-1]))


if __name__ == "__main__":
    main()
