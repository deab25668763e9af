"""LDP ladder on the standard case: MC r_hat per eps next to the rate-minimisation energy and
the linear-response (Gaussian) prediction -eps log Phibar(sqrt(2 I / eps)).

    python3 scripts/ldp_ladder.py --n 20000 --out runs/ldp
"""
import argparse
import json
import math
from pathlib import Path

from scipy.stats import norm

from roughwave.checks import ldp_standard_event
from roughwave.ldp import OptConfig, mc_tail, rate_minimize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--offset", type=float, default=0.5)
    ap.add_argument("--ladder", type=float, nargs="+", default=[1.0, 0.5, 0.2, 0.1, 0.05])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=None)
    ap.add_argument("--out", type=str, default="runs/ldp")
    a = ap.parse_args()
    ev, sc = ldp_standard_event(a.offset)
    args = (sc["data"], sc["sigma"], sc["hp"], sc["grid"])
    rate = rate_minimize(ev, *args, OptConfig())
    tail = mc_tail(ev, *args, a.ladder, a.n, a.seed, jobs=a.jobs)
    I = rate.energy
    rows = []
    print(f"energy (upper bound on I) = {I:.4f}")
    print(f"{'eps':>6} {'hits':>6} {'p_hat':>10} {'r_hat':>8} {'gauss':>8} {'eps/I':>6}")
    for r in tail.rows():
        z = math.sqrt(2 * I / r["eps"])
        gauss = -r["eps"] * norm.logsf(z)
        rows.append({**r, "gaussian_r": gauss})
        print(f"{r['eps']:6.3f} {r['hits']:6d} {r['p_hat']:10.3e} {r['r_hat']:8.4f} {gauss:8.4f} "
              f"{r['eps'] / I:6.3f}{'  zero-hit' if r['zero_hit'] else ''}")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ldp_ladder.json").write_text(json.dumps({"energy": I, "event": ev.to_dict(),
                                                     "rows": rows}, indent=2))


if __name__ == "__main__":
    main()
