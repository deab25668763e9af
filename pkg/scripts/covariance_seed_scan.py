"""Family-wise behaviour of the entrywise 4-SE covariance test across seeds.

With ~2000 distinct entries, a 4-SE two-sided test per entry fails somewhere with
probability about 1 - (1 - 6.3e-5)^2080, roughly 12 %, even for an exact sampler.

    python3 scripts/covariance_seed_scan.py --seeds 20
"""
import argparse

import numpy as np

from roughwave.checks import check_noise_covariance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--quick", action="store_true")
    a = ap.parse_args()
    worst = []
    for s in range(a.seeds):
        r = check_noise_covariance(a.quick, seed=s)
        worst.append(r.measured)
        print(f"seed {s:3d}: max |z| = {r.measured:.2f} {'PASS' if r.passed else 'FAIL'}")
    worst = np.array(worst)
    print(f"fraction over 4 SE: {np.mean(worst >= 4):.2f} over {a.seeds} seeds")


if __name__ == "__main__":
    main()
